use ndarray::Array1;
use rarepred::data::{encode, EncodeOptions};
use rarepred::glm::{fit, FitControl};
use rarepred::metrics::{auc, ScoredPair};
use rarepred::synth::{generate, HingeEffect, SynthConfig};

fn split_auc_with_event_weight(config: &SynthConfig, event_weight: f64) -> f64 {
    let (panel, _) = generate(config).unwrap();
    let boundary = panel.horizon_boundaries()[0];
    let train = panel.indices_before(boundary);
    let mut design = encode(&panel, &train, &EncodeOptions::default()).unwrap();
    let w: Vec<f64> = design
        .response()
        .iter()
        .map(|&y| if y == 1.0 { event_weight } else { 1.0 })
        .collect();
    design.set_weights(Array1::from_vec(w));
    let fitted = fit(&design, &FitControl::default()).unwrap();
    let mut pairs = Vec::new();
    for &t in panel.horizon_boundaries() {
        for idx in panel.indices_at(t) {
            let rec = &panel.records()[idx];
            let (x, _) = design.encoding().encode_record(rec).unwrap();
            let p = fitted.predict(ndarray::ArrayView1::from(&x)).unwrap();
            pairs.push(ScoredPair::new(p, rec.outcome, t, rec.individual_id.clone()));
        }
    }
    auc(&pairs).unwrap()
}

#[test]
#[ignore]
fn probe_hinge_geometry() {
    for (slope_w, coef, thr) in [
        (0.55, 1.3, 21.0),
        (0.2, 2.0, 20.5),
        (0.1, 2.5, 20.5),
        (0.1, 3.0, 21.0),
        (0.0, 2.5, 20.0),
    ] {
        let mut config = SynthConfig { seed: 42, ..Default::default() };
        config.true_slopes[0] = slope_w;
        config.hinge_effects = vec![HingeEffect {
            covariate: "workload_21d".into(),
            threshold: thr,
            coefficient: coef,
        }];
        let results: Vec<String> = [1.0, 2.4, 14.4, 24.0]
            .iter()
            .map(|&w| format!("w={w}: {:.4}", split_auc_with_event_weight(&config, w)))
            .collect();
        println!("slope={slope_w} coef={coef} thr={thr} -> {}", results.join("  "));
    }
}
