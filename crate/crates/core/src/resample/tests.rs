use super::*;
use ndarray::{array, Array1, Array2};
use rand::RngCore;

fn stream(seed: u64) -> SeedStream {
    SeedStream::new(seed)
}

/// 1-D feature set; label true marks an event (minority row).
fn one_d(values: &[(f64, bool)]) -> (Array2<f64>, Vec<bool>) {
    let features =
        Array2::from_shape_vec((values.len(), 1), values.iter().map(|v| v.0).collect()).unwrap();
    let labels = values.iter().map(|v| v.1).collect();
    (features, labels)
}

/// n_maj non-events at spread-out positions followed by n_min events.
fn imbalanced(n_maj: usize, n_min: usize) -> (Array2<f64>, Vec<bool>) {
    let mut vals = Vec::new();
    for i in 0..n_maj {
        vals.push((i as f64, false));
    }
    for i in 0..n_min {
        vals.push((1000.0 + i as f64, true));
    }
    one_d(&vals)
}

/// RNG producing one constant u64; `gen::<f64>()` on 1<<63 yields exactly 0.5.
struct ConstRng(u64);

impl RngCore for ConstRng {
    fn next_u32(&mut self) -> u32 {
        (self.0 >> 32) as u32
    }
    fn next_u64(&mut self) -> u64 {
        self.0
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.0.to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

#[test]
fn undersample_rate_examples() {
    let (features, labels) = imbalanced(100, 4);
    let set = LabeledSet::new(features.view(), labels, vec![0]);

    let rs = undersample_random(&set, 0.7, &mut stream(1)).unwrap();
    assert_eq!(rs.majority_count(&set), 30);
    assert_eq!(rs.minority_count(&set), 4);

    let rs = undersample_random(&set, 0.0, &mut stream(1)).unwrap();
    assert_eq!(rs.row_indices, (0..104).collect::<Vec<_>>());

    // Rounding floors at one retained majority row.
    let rs = undersample_random(&set, 0.995, &mut stream(1)).unwrap();
    assert_eq!(rs.majority_count(&set), 1);
}

#[test]
fn undersample_requires_majority_rows_and_valid_rate() {
    let (features, labels) = one_d(&[(0.0, true), (1.0, true)]);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    assert_eq!(
        undersample_random(&set, 0.5, &mut stream(1)).unwrap_err(),
        ResampleError::EmptyClass("majority")
    );
    let (features, labels) = imbalanced(3, 1);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    assert!(matches!(
        undersample_random(&set, 1.0, &mut stream(1)).unwrap_err(),
        ResampleError::OutOfRange { .. }
    ));
}

#[test]
fn case_control_rate_formula() {
    assert_eq!(case_control_rate(0.5).unwrap(), 0.0);
    assert!((case_control_rate(1.0 / 3.0).unwrap() - 0.5).abs() < 1e-15);
    assert!((case_control_rate(0.04).unwrap() - 0.92 / 0.96).abs() < 1e-15);
    assert!(case_control_rate(0.0).is_err());
    assert!(case_control_rate(0.6).is_err());
}

#[test]
fn case_control_stage_balances_exactly() {
    let (features, labels) = imbalanced(96, 4);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    let spec = SamplerSpec::single(SamplerStage::CaseControl);
    let rs = apply_chain(&set, &spec, 9).unwrap();
    assert_eq!(rs.majority_count(&set), 4);
    assert_eq!(rs.minority_count(&set), 4);
}

#[test]
fn oversample_ratio_examples() {
    let (features, labels) = imbalanced(100, 4);
    let set = LabeledSet::new(features.view(), labels, vec![0]);

    let rs = oversample_random(&set, 1, 1, &mut stream(3)).unwrap();
    assert_eq!(rs.minority_count(&set), 100);
    assert_eq!(rs.majority_count(&set), 100);

    let rs = oversample_random(&set, 5, 3, &mut stream(3)).unwrap();
    assert_eq!(rs.minority_count(&set), 60);

    let rs = oversample_random(&set, 2, 1, &mut stream(3)).unwrap();
    assert_eq!(rs.minority_count(&set), 50);
    assert_eq!(rs.majority_count(&set), 100);

    // Every original event is retained at least once.
    for idx in 100..104 {
        assert!(rs.row_indices.contains(&idx));
    }
}

#[test]
fn oversample_never_shrinks_minority() {
    let (features, labels) = imbalanced(10, 8);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    assert_eq!(
        oversample_random(&set, 2, 1, &mut stream(3)).unwrap_err(),
        ResampleError::RatioWouldShrinkMinority { target: 5, current: 8 }
    );
}

#[test]
fn smote_midpoint_with_pinned_u() {
    let (features, labels) = one_d(&[(0.0, true), (1.0, true)]);
    let features2 = {
        // Two 2-D minority points (0,0) and (1,1).
        let _ = features;
        array![[0.0, 0.0], [1.0, 1.0]]
    };
    let set = LabeledSet::new(features2.view(), labels, vec![0, 1]);
    let mut rng = ConstRng(1u64 << 63);
    let w = stage_smote(&set, &Working::full(&set), 1, 1, &mut rng).unwrap();
    assert_eq!(w.synthetic.len(), 2);
    for syn in &w.synthetic {
        assert_eq!(syn.u, 0.5);
        assert_eq!(syn.features, vec![0.5, 0.5]);
    }
}

#[test]
fn smote_two_points_each_on_segment() {
    let (features, labels) = one_d(&[(0.0, true), (1.0, true), (50.0, false)]);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    let rs = smote(&set, 1, 1, &mut stream(11)).unwrap();
    assert_eq!(rs.synthetic_rows.len(), 2);
    for syn in &rs.synthetic_rows {
        let v = syn.features[0];
        assert!((0.0..=1.0).contains(&v), "synthetic {v} off the segment");
    }
    // Source rows pass through untouched.
    assert_eq!(rs.row_indices, vec![0, 1, 2]);
}

/// Brute-force k-NN oracle over explicit points.
fn knn_oracle(points: &[f64], this: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != this)
        .map(|(j, &x)| ((x - points[this]).powi(2), j))
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

#[test]
fn smote_neighbors_match_brute_force_oracle() {
    let points = [0.0, 1.0, 2.0, 10.0];
    let (features, labels) =
        one_d(&points.iter().map(|&x| (x, true)).collect::<Vec<_>>());
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    let w = Working::full(&set);
    let minority = occurrences(&w);
    for this in 0..points.len() {
        let got = nearest_neighbors(&set, &w, &minority, this, 2);
        let want = knn_oracle(&points, this, 2);
        let mut got_sorted = got.clone();
        got_sorted.sort_unstable();
        let mut want_sorted = want.clone();
        want_sorted.sort_unstable();
        assert_eq!(got_sorted, want_sorted, "neighbors of point {this}");
    }
    // The point at 10 interpolates only towards 1 or 2.
    let got = nearest_neighbors(&set, &w, &minority, 3, 2);
    assert_eq!({ let mut g = got; g.sort_unstable(); g }, vec![1, 2]);
}

#[test]
fn smote_preconditions() {
    let (features, labels) = one_d(&[(0.0, true), (5.0, false)]);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    assert_eq!(smote(&set, 1, 1, &mut stream(2)).unwrap_err(), ResampleError::TooFewMinority(1));

    let (features, labels) = one_d(&[(0.0, true), (1.0, true), (5.0, false)]);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    assert_eq!(
        smote(&set, 2, 1, &mut stream(2)).unwrap_err(),
        ResampleError::KTooLarge { k: 2, available: 1 }
    );
}

#[test]
fn smote_synthetics_are_events_and_convex() {
    let (features, labels) = imbalanced(20, 6);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    let rs = smote(&set, 3, 2, &mut stream(17)).unwrap();
    assert_eq!(rs.synthetic_rows.len(), 12);
    for syn in &rs.synthetic_rows {
        for ((&f, &b), &n) in syn.features.iter().zip(&syn.base).zip(&syn.neighbor) {
            let lo = b.min(n) - 1e-12;
            let hi = b.max(n) + 1e-12;
            assert!(f >= lo && f <= hi, "feature {f} outside [{lo}, {hi}]");
        }
    }
}

#[test]
fn tomek_removes_linked_majority_point() {
    // Event at 0.0; non-events at 0.1 (linked) and 5.0 (kept).
    let (features, labels) = one_d(&[(0.0, true), (0.1, false), (5.0, false)]);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    let rs = tomek_clean(&set).unwrap();
    assert_eq!(rs.row_indices, vec![0, 2]);
    assert_eq!(rs.minority_count(&set), 1);
}

#[test]
fn tomek_is_identity_on_separated_clusters() {
    // Intra-class spacing 0.1, class margin 10.
    let (features, labels) = one_d(&[
        (0.0, false),
        (0.1, false),
        (0.2, false),
        (10.0, true),
        (10.1, true),
    ]);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    let rs = tomek_clean(&set).unwrap();
    assert_eq!(rs.row_indices, vec![0, 1, 2, 3, 4]);
}

#[test]
fn tomek_tie_breaks_to_lowest_index() {
    // Event at 0 equidistant from non-events at -1 and +1 (positions 0 and 2).
    let (features, labels) = one_d(&[(-1.0, false), (0.0, true), (1.0, false)]);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    let rs = tomek_clean(&set).unwrap();
    assert_eq!(rs.row_indices, vec![1, 2]);
}

/// Brute-force mutual-nearest-neighbor oracle for Tomek links.
fn tomek_oracle(points: &[(f64, bool)]) -> Vec<usize> {
    let nn = |i: usize| -> usize {
        let mut best = (f64::INFINITY, usize::MAX);
        for (j, &(x, _)) in points.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = (x - points[i].0).powi(2);
            if d < best.0 || (d == best.0 && j < best.1) {
                best = (d, j);
            }
        }
        best.1
    };
    let mut removed = Vec::new();
    for (i, &(_, label)) in points.iter().enumerate() {
        if !label {
            continue;
        }
        let j = nn(i);
        if !points[j].1 && nn(j) == i {
            removed.push(j);
        }
    }
    removed
}

#[test]
fn tomek_matches_brute_force_oracle_on_random_sets() {
    use rand::Rng;
    let mut rng = SeedStream::new(99);
    for _ in 0..50 {
        let n = rng.rng().gen_range(4..20);
        let points: Vec<(f64, bool)> = (0..n)
            .map(|_| (rng.rng().gen_range(-5.0..5.0), rng.rng().gen_bool(0.3)))
            .collect();
        if !points.iter().any(|p| p.1) || !points.iter().any(|p| !p.1) {
            continue;
        }
        let (features, labels) = one_d(&points);
        let set = LabeledSet::new(features.view(), labels, vec![0]);
        let rs = tomek_clean(&set).unwrap();
        let removed = tomek_oracle(&points);
        let expected: Vec<usize> = (0..n).filter(|i| !removed.contains(i)).collect();
        assert_eq!(rs.row_indices, expected);
    }
}

#[test]
fn bootstrap_size_and_determinism_contracts() {
    let (features, labels) = imbalanced(100, 4);
    let set = LabeledSet::new(features.view(), labels, vec![0]);

    let rs = bootstrap_class(&set, BootstrapTarget::Majority, &mut stream(5)).unwrap();
    assert_eq!(rs.majority_count(&set), 100);
    assert_eq!(rs.minority_count(&set), 4);
    // Minority untouched: the original event rows are all present exactly once.
    let events: Vec<usize> = rs.row_indices.iter().copied().filter(|&i| i >= 100).collect();
    assert_eq!(events, vec![100, 101, 102, 103]);

    let rs = bootstrap_class(&set, BootstrapTarget::Stratified, &mut stream(5)).unwrap();
    assert_eq!((rs.majority_count(&set), rs.minority_count(&set)), (100, 4));

    let a = bootstrap_class(&set, BootstrapTarget::Minority, &mut stream(7)).unwrap();
    let b = bootstrap_class(&set, BootstrapTarget::Minority, &mut stream(7)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bootstrap_empty_class_errors() {
    let (features, labels) = one_d(&[(0.0, false), (1.0, false)]);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    assert_eq!(
        bootstrap_class(&set, BootstrapTarget::Minority, &mut stream(1)).unwrap_err(),
        ResampleError::EmptyClass("minority")
    );
}

#[test]
fn chain_under_then_over_hits_both_targets() {
    let (features, labels) = imbalanced(100, 4);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    let spec = SamplerSpec::parse("under(0.3)+over(5:3)").unwrap();
    let rs = apply_chain(&set, &spec, 1234).unwrap();
    assert_eq!(rs.majority_count(&set), 70);
    assert_eq!(rs.minority_count(&set), 42);
    assert_eq!(rs.provenance.stage_seeds.len(), 2);
    assert!(!rs.provenance.order_warning);
}

#[test]
fn empty_chain_is_identity() {
    let (features, labels) = imbalanced(5, 2);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    let rs = apply_chain(&set, &SamplerSpec::identity(), 1).unwrap();
    assert_eq!(rs.row_indices, (0..7).collect::<Vec<_>>());
    assert!(rs.synthetic_rows.is_empty());
}

#[test]
fn reversed_chain_is_accepted_with_warning() {
    let (features, labels) = imbalanced(10, 2);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    let spec = SamplerSpec::parse("over(1:1)+under(0.5)").unwrap();
    let rs = apply_chain(&set, &spec, 1).unwrap();
    assert!(rs.provenance.order_warning);
}

#[test]
fn chains_are_pure_functions_of_source_spec_seed() {
    let (features, labels) = imbalanced(50, 5);
    let set = LabeledSet::new(features.view(), labels, vec![0]);
    let spec = SamplerSpec::parse("under(0.4)+smote(k=2,m=1)+boot(strat)").unwrap();
    let a = apply_chain(&set, &spec, 42).unwrap();
    let b = apply_chain(&set, &spec, 42).unwrap();
    assert_eq!(a, b);
    let c = apply_chain(&set, &spec, 43).unwrap();
    assert_ne!(a, c);
}

#[test]
fn materialize_weighted_counts_multiplicities() {
    let rows = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]];
    let design = DesignMatrix::raw(rows, array![0.0, 1.0, 0.0]);
    let rs = ResampledSet {
        row_indices: vec![0, 0, 1],
        synthetic_rows: vec![SyntheticRow {
            features: vec![1.0, 0.5],
            base: vec![1.0, 0.0],
            neighbor: vec![1.0, 1.0],
            u: 0.5,
        }],
        provenance: Provenance {
            spec: SamplerSpec::identity(),
            seed: 0,
            stage_seeds: vec![],
            order_warning: false,
        },
    };
    let w = materialize_weighted(&design, &rs);
    assert_eq!(w.n_rows(), 3); // rows 0 and 1 kept, row 2 dropped, 1 synthetic
    assert_eq!(w.weights().to_vec(), vec![2.0, 1.0, 1.0]);
    assert_eq!(w.response().to_vec(), vec![0.0, 1.0, 1.0]);

    let r = materialize_rows(&design, &rs);
    assert_eq!(r.n_rows(), 4);
    assert_eq!(r.weights().to_vec(), vec![1.0; 4]);
    assert_eq!(r.response().to_vec(), vec![0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn weighted_and_duplicated_materializations_fit_identically() {
    use crate::glm::{fit, FitControl};
    // 12 non-events, 3 events with a weak signal.
    let mut vals = Vec::new();
    for i in 0..12 {
        vals.push((i as f64 * 0.3 - 2.0, false));
    }
    for i in 0..3 {
        vals.push((1.0 + i as f64 * 0.2, true));
    }
    let (features, labels) = one_d(&vals);
    let n = vals.len();
    let mut rows = Array2::ones((n, 2));
    for i in 0..n {
        rows[[i, 1]] = features[[i, 0]];
    }
    let response = Array1::from_iter(labels.iter().map(|&b| f64::from(u8::from(b))));
    let design = DesignMatrix::raw(rows, response);
    let set = LabeledSet::from_design(&design);

    let rs = apply_chain(&set, &SamplerSpec::parse("over(2:1)").unwrap(), 77).unwrap();
    let by_rows = fit(&materialize_rows(&design, &rs), &FitControl::default()).unwrap();
    let by_weights = fit(&materialize_weighted(&design, &rs), &FitControl::default()).unwrap();
    for (a, b) in by_rows.beta.iter().zip(by_weights.beta.iter()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}
