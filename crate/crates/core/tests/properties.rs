//! Property tests of the invariants that do not need a network oracle.

use btm_core::bezier::{eval_path, path_curvature, BezierPath};
use btm_core::condense::{condense_run, matching_loss, CondenseConfig, MatchSegment, Supervision};
use btm_core::cost::{payload_bytes, SURROGATE_POINTS};
use btm_core::data::{generate_raw, generate_synthetic_clinical, init_synthetic, preprocess, GenConfig, InitStrategy};
use btm_core::eval::{evaluate_training_set, EvalConfig};
use btm_core::metrics::{auprc, auroc};
use btm_core::trajectory::{interp_gamma, train_expert, SgdConfig};
use btm_core::{vector, MlpSpec, ParamVector};
use proptest::prelude::*;

fn brute_auroc(s: &[f64], y: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1.0 && y[j] == 0.0 {
                den += 1.0;
                num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

fn brute_auprc(s: &[f64], y: &[f64]) -> f64 {
    let mut th: Vec<f64> = s.to_vec();
    th.sort_by(|a, b| b.total_cmp(a));
    th.dedup();
    let pos = y.iter().filter(|&&v| v == 1.0).count() as f64;
    let (mut ap, mut prev) = (0.0, 0.0);
    for t in th {
        let tp = s.iter().zip(y).filter(|(&a, &b)| a >= t && b == 1.0).count() as f64;
        let k = s.iter().filter(|&&a| a >= t).count() as f64;
        ap += (tp / pos - prev) * tp / k;
        prev = tp / pos;
    }
    ap
}

/// Scores on a coarse grid (so ties are common) with both classes present.
fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=200).prop_flat_map(|n| {
        (
            prop::collection::vec(0u8..12, n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_filter_map("needs both classes", |(s, y)| {
                let y: Vec<f64> = y.into_iter().map(|b| f64::from(u8::from(b))).collect();
                (y.contains(&0.0) && y.contains(&1.0))
                    .then(|| (s.into_iter().map(|v| f64::from(v) / 11.0).collect(), y))
            })
    })
}

fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

proptest! {
    #[test]
    fn metrics_match_brute_force((s, y) in scored_labels()) {
        prop_assert!((auroc(&s, &y).unwrap() - brute_auroc(&s, &y)).abs() <= 1e-12);
        prop_assert!((auprc(&s, &y).unwrap() - brute_auprc(&s, &y)).abs() <= 1e-12);
    }

    #[test]
    fn metrics_ignore_monotone_transforms((s, y) in scored_labels(), a in 0.1f64..4.0, b in -3.0f64..3.0) {
        let t: Vec<f64> = s.iter().map(|v| (a * v).exp() + b).collect();
        prop_assert_eq!(auroc(&s, &y).unwrap(), auroc(&t, &y).unwrap());
        prop_assert_eq!(auprc(&s, &y).unwrap(), auprc(&t, &y).unwrap());
    }

    #[test]
    fn bezier_endpoints_are_exact((a, p, b) in (1usize..30).prop_flat_map(|n| (vec_of(n), vec_of(n), vec_of(n)))) {
        let path = BezierPath::new(ParamVector(a.clone()), ParamVector(p), ParamVector(b.clone())).unwrap();
        prop_assert_eq!(eval_path(&path, 0.0).unwrap().0, a);
        prop_assert_eq!(eval_path(&path, 1.0).unwrap().0, b);
    }

    #[test]
    fn bezier_second_difference_is_constant((a, p, b) in (1usize..30).prop_flat_map(|n| (vec_of(n), vec_of(n), vec_of(n)))) {
        let path = BezierPath::new(ParamVector(a), ParamVector(p), ParamVector(b)).unwrap();
        let kappa = path_curvature(&path);
        prop_assume!(kappa > 1e-3);
        let h = 1.0 / 64.0;
        let at = |t: f64| eval_path(&path, t).unwrap().0;
        let dd = |t: f64| -> Vec<f64> {
            let (x0, x1, x2) = (at(t - h), at(t), at(t + h));
            (0..x0.len()).map(|i| (x2[i] - 2.0 * x1[i] + x0[i]) / (h * h)).collect()
        };
        let reference = dd(0.5);
        for k in 1..64 {
            let d = dd(k as f64 * h);
            prop_assert!(vector::dist(&d, &reference) <= 1e-9 * vector::norm(&reference));
        }
    }

    #[test]
    fn surrogate_storage_is_three_over_k_plus_one(n in 1usize..5000, k in 1usize..200) {
        let traj = payload_bytes(k + 1, n, 4) as f64;
        let surr = payload_bytes(SURROGATE_POINTS, n, 4) as f64;
        prop_assert!((surr / traj - 3.0 / (k + 1) as f64).abs() < 1e-12);
    }

    #[test]
    fn matching_loss_is_scale_invariant(
        (s, t, x) in (1usize..20).prop_flat_map(|n| (vec_of(n), vec_of(n), vec_of(n))),
        c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
    ) {
        prop_assume!(vector::dist(&s, &t) > 1e-3);
        let seg = |c: f64| MatchSegment {
            theta_start: ParamVector(s.iter().map(|v| c * v).collect()),
            theta_target: ParamVector(t.iter().map(|v| c * v).collect()),
            t_start: 0.0,
            t_end: 0.2,
        };
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let l1 = matching_loss(&x, &seg(1.0)).unwrap();
        let lc = matching_loss(&scaled, &seg(c)).unwrap();
        prop_assert!((l1 - lc).abs() <= 1e-10 * l1.max(1.0));
    }
}

fn small_gen(seed: u64) -> GenConfig {
    GenConfig {
        n_samples: 1500,
        n_features: 6,
        prevalence: 0.2,
        seed,
        ..GenConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn splits_are_deterministic_and_disjoint(seed in any::<u64>(), split_seed in any::<u64>()) {
        let raw = generate_raw(&small_gen(seed)).unwrap();
        let a = preprocess(&raw, split_seed).unwrap();
        let b = preprocess(&raw, split_seed).unwrap();
        prop_assert_eq!(&a, &b);
        let mut all: Vec<usize> = a.train.rows.iter().chain(&a.val.rows).chain(&a.test.rows).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..raw.len()).collect::<Vec<_>>());
    }

    #[test]
    fn normalisation_uses_train_rows_only(seed in any::<u64>(), split_seed in any::<u64>()) {
        let raw = generate_raw(&GenConfig { missing_rate: 0.1, ..small_gen(seed) }).unwrap();
        let ds = preprocess(&raw, split_seed).unwrap();
        // Train features are z-scores of train-median-imputed values.
        for j in 0..ds.feature_dim() {
            let col: Vec<f64> = (0..ds.train.len()).map(|i| ds.train.inputs.get(i, j)).collect();
            prop_assert!(vector::mean(&col).abs() < 1e-9);
            prop_assert!((vector::std_dev(&col) - 1.0).abs() < 1e-9);
            let mut present: Vec<f64> = ds.train.rows.iter().filter_map(|&r| raw.rows[r][j]).collect();
            present.sort_by(f64::total_cmp);
            let m = present.len();
            let median = if m % 2 == 1 { present[m / 2] } else { 0.5 * (present[m / 2 - 1] + present[m / 2]) };
            prop_assert_eq!(ds.normalization_stats[j].median, median);
        }
        // Changing a test row leaves train statistics untouched.
        let mut tampered = raw.clone();
        let victim = ds.test.rows[0];
        tampered.rows[victim] = vec![Some(1e6); tampered.feature_names.len()];
        let ds2 = preprocess(&tampered, split_seed).unwrap();
        prop_assert_eq!(&ds.normalization_stats, &ds2.normalization_stats);
        prop_assert_eq!(&ds.train, &ds2.train);
    }
}

#[test]
fn expert_training_is_deterministic_and_gamma_hits_endpoints() {
    let ds = generate_synthetic_clinical(&small_gen(3)).unwrap();
    let spec = MlpSpec::new(vec![6, 8, 1], 0.25, 4).unwrap();
    let cfg = SgdConfig {
        epochs: 6,
        batch_size: 64,
        seed: 9,
        ..SgdConfig::default()
    };
    let a = train_expert(&ds, &spec, &cfg).unwrap();
    let b = train_expert(&ds, &spec, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(interp_gamma(&a, 0.0).unwrap(), a.checkpoints[0]);
    assert_eq!(&interp_gamma(&a, 1.0).unwrap(), a.end());
}

#[test]
fn condensation_bookkeeping() {
    let ds = generate_synthetic_clinical(&small_gen(5)).unwrap();
    let spec = MlpSpec::new(vec![6, 8, 1], 0.0, 0).unwrap();
    let experts: Vec<_> = (0..2)
        .map(|seed| {
            let s = MlpSpec { seed, ..spec.clone() };
            let cfg = SgdConfig {
                epochs: 10,
                batch_size: 64,
                seed,
                ..SgdConfig::default()
            };
            train_expert(&ds, &s, &cfg).unwrap()
        })
        .collect();
    let paths: Vec<BezierPath> = experts
        .iter()
        .map(|t| BezierPath::linear(t.start().clone(), t.end().clone()).unwrap())
        .collect();
    let synth0 = init_synthetic(&ds, 5, InitStrategy::Real, 1).unwrap();
    let cfg = CondenseConfig {
        max_iters: 40,
        student_steps: 5,
        eval_every: 5,
        eval: EvalConfig {
            epochs: 5,
            n_seeds: 1,
            ..EvalConfig::default()
        },
        ..CondenseConfig::default()
    };
    for supervision in [Supervision::Bezier(&paths), Supervision::Mtt(&experts)] {
        let out = condense_run(supervision, &ds, &spec, &synth0, &cfg).unwrap();
        assert_eq!(out.final_synth.labels, synth0.labels);
        assert_eq!(out.best.labels, synth0.labels);
        assert_eq!(out.history.len(), cfg.max_iters + 1);
        let mut best = f64::NEG_INFINITY;
        for row in &out.history {
            assert!(row.eta_s > 0.0);
            assert!(row.best_val_auprc >= best);
            best = row.best_val_auprc;
        }
        assert_eq!(out.history.iter().filter(|r| r.val_auprc.is_some()).count(), 1 + 40 / 5);
    }
}

#[test]
fn higher_separation_is_easier() {
    let eval = EvalConfig {
        epochs: 15,
        n_seeds: 1,
        ..EvalConfig::default()
    };
    let mut votes = 0;
    for seed in 0..3 {
        let scores: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&sep| {
                let gen = GenConfig {
                    n_samples: 3000,
                    class_separation: sep,
                    seed,
                    ..GenConfig::default()
                };
                let ds = generate_synthetic_clinical(&gen).unwrap();
                let spec = MlpSpec::new(vec![20, 64, 1], 0.25, 0).unwrap();
                evaluate_training_set(&ds.train.inputs, &ds.train.labels, &spec, &ds.test, &eval)
                    .unwrap()
                    .auroc_mean
            })
            .collect();
        votes += usize::from(scores[0] < scores[1] && scores[1] < scores[2]);
    }
    assert!(votes >= 2, "monotone in {votes}/3 seeds");
}
