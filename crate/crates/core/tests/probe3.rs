use ndarray::{Array1, Axis};
use rarepred::data::{encode, EncodeOptions};
use rarepred::synth::{generate, SynthConfig};

#[test]
#[ignore]
fn dump_pivots() {
    let (panel, _) = generate(&SynthConfig { seed: 47, ..Default::default() }).unwrap();
    let n = panel.records().len();
    let pred = panel.prediction_indices();
    let held = pred[580];
    let train: Vec<usize> = (0..n).filter(|&i| i != held).collect();
    let design = encode(&panel, &train, &EncodeOptions::default()).unwrap();
    let x = design.rows();
    let w = design.weights();
    let mut wdiag = Array1::zeros(x.nrows());
    for i in 0..x.nrows() {
        wdiag[i] = w[i] * 0.25;
    }
    let scaled = &x * &wdiag.view().insert_axis(Axis(1));
    let info = x.t().dot(&scaled);
    println!("info finite: {}", info.iter().all(|v| v.is_finite()));
    let nn = info.nrows();
    let scale = (0..nn).map(|i| info[[i, i]].abs()).fold(0.0_f64, f64::max);
    println!("n={nn} scale={scale}");
    // replicate ldlt manually
    let mut l = ndarray::Array2::<f64>::zeros((nn, nn));
    let mut d = ndarray::Array1::<f64>::zeros(nn);
    for j in 0..nn {
        let mut dj = info[[j, j]];
        for k in 0..j {
            dj -= l[[j, k]] * l[[j, k]] * d[k];
        }
        if dj.abs() <= 1e-12 * scale {
            println!("pivot {j} = {dj} (threshold {}) col={}", 1e-12 * scale, design.encoding().column_names()[j]);
            break;
        }
        d[j] = dj;
        l[[j, j]] = 1.0;
        for i in (j + 1)..nn {
            let mut v = info[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]] * d[k];
            }
            l[[i, j]] = v / dj;
        }
        if j < 12 || dj < 1.0 {
            println!("pivot {j} = {dj:.6} col={}", design.encoding().column_names()[j]);
        }
    }
}
