use approx::assert_relative_eq;
use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;
use pvbench_core::data::{FeatureKind, Features, HourlySample, Timestamp};
use pvbench_core::models::{
    clamp_forecast, ens_fit, ens_predict, evidence_objective, gaussian_weight, gb_fit, gb_predict,
    grow_tree, gti_features, kkt_residual, knn_predict, solve_nu_svr, weighted_quantile, EnsembleWeights,
    FeatureSet, GbConfig, GbModel, ModelError, NnConfig, NnModel, NnParams, Node, QrfConfig, QrfModel,
    SvrConfig,
};
use pvbench_core::solar::SunPosition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn now() -> Timestamp {
    Utc.with_ymd_and_hms(2016, 6, 1, 0, 0, 0).unwrap()
}

fn sample(ts: Timestamp, gti: f64, power: f64, nominal: f64, elevation: f64) -> HourlySample {
    HourlySample {
        timestamp: ts,
        features: Features {
            gti,
            dti: 0.3 * gti,
            bti: 0.7 * gti,
            sun_azimuth: 180.0,
            sun_elevation: elevation,
            temperature: Some(20.0),
        },
        measured_power: power,
        nominal_power: nominal,
    }
}

// ---------------------------------------------------------------- kNN

/// Sorts every training point by distance (index breaks ties) and applies
/// the Gaussian weighting to the first `k`.
fn knn_oracle(points: &[f64], targets: &[f64], dim: usize, q: &[f64], k: usize, sigma: f64) -> f64 {
    let mut d: Vec<(f64, usize)> = points
        .chunks(dim)
        .enumerate()
        .map(|(i, p)| (p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let d1 = d[0].0;
    if d1 == 0.0 {
        let z: Vec<f64> = d.iter().filter(|x| x.0 == 0.0).map(|x| targets[x.1]).collect();
        return z.iter().sum::<f64>() / z.len() as f64;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(di, i) in d.iter().take(k) {
        let w = (-(di * di) / (sigma * sigma * d1 * d1)).exp();
        num += w * targets[i];
        den += w;
    }
    num / den
}

#[test]
fn knn_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (n, dim) in [(50, 1), (300, 3), (1000, 5), (1000, 2)] {
        let points: Vec<f64> = (0..n * dim).map(|_| rng.gen::<f64>()).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1000.0)).collect();
        for _ in 0..50 {
            let q: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            let k = rng.gen_range(1..=60);
            let sigma = rng.gen_range(0.5..5.0);
            let got = knn_predict(&points, &targets, dim, &q, k, sigma).unwrap();
            let want = knn_oracle(&points, &targets, dim, &q, k, sigma);
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn gaussian_weight_at_twice_the_nearest_distance() {
    assert_relative_eq!(gaussian_weight(2.0, 1.0, 4.0), (-0.25f64).exp(), max_relative = 1e-15);
    assert_relative_eq!(gaussian_weight(0.6, 0.3, 4.0), (-0.25f64).exp(), max_relative = 1e-12);
    assert_eq!(gaussian_weight(1.0, 1.0, 1.0), (-1.0f64).exp());
}

#[test]
fn knn_zero_distance_and_errors() {
    let points = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 2.0, 2.0];
    let targets = [10.0, 50.0, 30.0, 90.0];
    // both exact matches are averaged even with k = 1
    assert_eq!(knn_predict(&points, &targets, 2, &[0.0, 0.0], 1, 2.0).unwrap(), 20.0);
    assert!(matches!(
        knn_predict(&[], &[], 2, &[0.0, 0.0], 3, 2.0),
        Err(ModelError::InsufficientData { .. })
    ));
    assert!(knn_predict(&points, &targets, 2, &[0.0], 3, 2.0).is_err());
}

proptest! {
    #[test]
    fn knn_stays_within_target_range(
        data in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, -50.0f64..50.0), 1..80),
        q in (0.0f64..1.0, 0.0f64..1.0),
        k in 1usize..20,
    ) {
        let points: Vec<f64> = data.iter().flat_map(|d| [d.0, d.1]).collect();
        let targets: Vec<f64> = data.iter().map(|d| d.2).collect();
        let p = knn_predict(&points, &targets, 2, &[q.0, q.1], k, 2.0).unwrap();
        let lo = targets.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
    }
}

// ---------------------------------------------------------------- grey box

fn gb_training(c1: f64, c2: f64, noise: impl Fn(usize) -> f64) -> Vec<HourlySample> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let nominal = 750.0;
    (0..400)
        .map(|i| {
            let ts = now() - Duration::hours(1 + i as i64);
            let gti = rng.gen_range(0.0..1100.0);
            let g = gti / 1000.0;
            let p = nominal * (c1 * g + c2 * g * g + noise(i));
            sample(ts, gti, p, nominal, 30.0)
        })
        .collect()
}

#[test]
fn gb_recovers_noise_free_coefficients() {
    let train = gb_training(0.9, -0.1, |_| 0.0);
    let m = gb_fit(&train, now(), &GbConfig::default()).unwrap();
    assert!((m.c1 - 0.9).abs() <= 1e-8 * 0.9);
    assert!((m.c2 + 0.1).abs() <= 1e-8 * 0.1);
}

#[test]
fn gb_is_unbiased_under_symmetric_noise() {
    let delta = 0.02;
    let mut mean = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let signs: Vec<f64> = (0..400).map(|_| if rng.gen::<bool>() { delta } else { -delta }).collect();
        let train = gb_training(1.0, 0.0, |i| signs[i]);
        let m = gb_fit(&train, now(), &GbConfig::default()).unwrap();
        assert!((m.c1 - 1.0).abs() < 5.0 * delta);
        mean += m.c1 / 20.0;
    }
    assert!((mean - 1.0).abs() < delta);
}

#[test]
fn gb_rejects_degenerate_designs() {
    let night: Vec<HourlySample> = (0..100)
        .map(|i| sample(now() - Duration::hours(1 + i), 0.0, 0.0, 500.0, -10.0))
        .collect();
    assert!(gb_fit(&night, now(), &GbConfig::default()).is_err());
    let flat: Vec<HourlySample> = (0..100)
        .map(|i| sample(now() - Duration::hours(1 + i), 0.0, 0.0, 500.0, 20.0))
        .collect();
    assert!(matches!(gb_fit(&flat, now(), &GbConfig::default()), Err(ModelError::RankDeficient)));
    let few = gb_training(0.9, -0.1, |_| 0.0)[..10].to_vec();
    assert!(matches!(
        gb_fit(&few, now(), &GbConfig::default()),
        Err(ModelError::InsufficientData { .. })
    ));
}

#[test]
fn gb_fit_ignores_hours_outside_the_window() {
    let mut train = gb_training(0.9, -0.1, |_| 0.0);
    // garbage older than four weeks and at or after `now`
    train.push(sample(now() - Duration::weeks(5), 500.0, 9999.0, 750.0, 30.0));
    train.push(sample(now(), 500.0, 9999.0, 750.0, 30.0));
    let m = gb_fit(&train, now(), &GbConfig::default()).unwrap();
    assert!((m.c1 - 0.9).abs() < 1e-8);
}

#[test]
fn gb_prediction_arithmetic() {
    assert_eq!(gb_predict(&GbModel::with_coefficients(0.9, -0.1), 0.0, 1000.0), 0.0);
    assert_relative_eq!(gb_predict(&GbModel::with_coefficients(0.9, -0.1), 1000.0, 1000.0), 800.0, max_relative = 1e-12);
    assert_relative_eq!(gb_predict(&GbModel::with_coefficients(1.0, -0.5), 500.0, 2000.0), 750.0, max_relative = 1e-12);
}

#[test]
fn clamping() {
    let up = SunPosition { azimuth: 180.0, elevation: 30.0 };
    let down = SunPosition { azimuth: 0.0, elevation: -1.0 };
    assert_eq!(clamp_forecast(-5.0, 100.0, &up), 0.0);
    assert_eq!(clamp_forecast(120.0, 100.0, &up), 100.0);
    assert_eq!(clamp_forecast(50.0, 100.0, &down), 0.0);
    assert_eq!(clamp_forecast(f64::NAN, 100.0, &up), 0.0);
}

// ---------------------------------------------------------------- QRF

fn qrf_config(n_trees: usize, dim: usize) -> QrfConfig {
    let kinds = [FeatureKind::Gti, FeatureKind::Dti, FeatureKind::Bti, FeatureKind::SunElevation];
    QrfConfig {
        n_trees,
        features: FeatureSet::new(kinds[..dim].to_vec()),
        ..QrfConfig::default()
    }
}

#[test]
fn qrf_constant_targets_give_the_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..600).map(|_| rng.gen_range(0.0..1000.0)).collect();
    let y = vec![42.5; 200];
    let mut m = QrfModel::new(qrf_config(20, 3), 9);
    m.fit_matrix(&x, &y).unwrap();
    for _ in 0..50 {
        let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-100.0..1100.0)).collect();
        for p in [0.05, 0.4, 0.95] {
            assert_eq!(m.quantile_at(&q, p).unwrap(), 42.5);
        }
    }
}

#[test]
fn qrf_single_leaf_hand_cdf() {
    let cfg = QrfConfig {
        n_trees: 1,
        bootstrap: false,
        min_leaf: 5,
        ..qrf_config(1, 1)
    };
    let x = [10.0, 20.0, 30.0, 40.0, 50.0];
    let y = [3.0, 1.0, 5.0, 2.0, 4.0];
    let mut m = QrfModel::new(cfg, 0);
    m.fit_matrix(&x, &y).unwrap();
    assert_eq!(m.trees()[0].nodes.len(), 1);
    assert_eq!(m.quantile_at(&[25.0], 0.4).unwrap(), 2.0);
    assert_eq!(m.quantile_at(&[25.0], 0.41).unwrap(), 3.0);
    assert_eq!(m.quantile_at(&[25.0], 0.2).unwrap(), 1.0);
    assert_eq!(m.quantile_at(&[25.0], 0.99).unwrap(), 5.0);
}

#[test]
fn qrf_single_tree_matches_its_leaf_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = QrfConfig {
        bootstrap: false,
        min_leaf: 4,
        features_per_split: Some(2),
        ..qrf_config(1, 2)
    };
    let x: Vec<f64> = (0..400).map(|_| rng.gen::<f64>()).collect();
    let y: Vec<f64> = x.chunks(2).map(|r| 10.0 * r[0] + rng.gen::<f64>()).collect();
    let mut m = QrfModel::new(cfg, 1);
    m.fit_matrix(&x, &y).unwrap();
    let tree = &m.trees()[0];
    for _ in 0..100 {
        let q = [rng.gen::<f64>(), rng.gen::<f64>()];
        let mut leaf = tree.leaf(&q).to_vec();
        assert!(leaf.len() >= 4);
        leaf.sort_by(f64::total_cmp);
        for p in [0.1, 0.25, 0.4, 0.5, 0.9] {
            // smallest value whose empirical CDF reaches p
            let idx = ((p * leaf.len() as f64).ceil() as usize).max(1) - 1;
            assert_eq!(m.quantile_at(&q, p).unwrap(), leaf[idx]);
        }
    }
}

#[test]
fn qrf_quantiles_are_monotone_in_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x: Vec<f64> = (0..1500).map(|_| rng.gen::<f64>()).collect();
    let y: Vec<f64> = x.chunks(3).map(|r| r[0] * 100.0 + r[1] * 20.0 + rng.gen_range(0.0..30.0)).collect();
    let mut m = QrfModel::new(qrf_config(50, 3), 5);
    m.fit_matrix(&x, &y).unwrap();
    for _ in 0..100 {
        let q: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
        let mut prev = f64::NEG_INFINITY;
        for p in (1..=9).map(|i| i as f64 / 10.0) {
            let v = m.quantile_at(&q, p).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }
}

#[test]
fn qrf_is_deterministic_per_seed_and_respects_min_leaf() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..600).map(|_| rng.gen::<f64>()).collect();
    let y: Vec<f64> = x.chunks(3).map(|r| r.iter().sum()).collect();
    let mut a = QrfModel::new(qrf_config(10, 3), 77);
    let mut b = QrfModel::new(qrf_config(10, 3), 77);
    a.fit_matrix(&x, &y).unwrap();
    b.fit_matrix(&x, &y).unwrap();
    assert_eq!(a, b);
    let cfg = QrfConfig { min_leaf: 7, ..qrf_config(1, 3) };
    let tree = grow_tree(&x, &y, 3, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
    for node in &tree.nodes {
        if let Node::Leaf { values } = node {
            assert!(values.len() >= 7);
        }
    }
}

#[test]
fn weighted_quantile_examples() {
    let mut pairs = vec![(3.0, 1.0), (1.0, 1.0), (2.0, 2.0)];
    assert_eq!(weighted_quantile(&mut pairs, 0.25), 1.0);
    assert_eq!(weighted_quantile(&mut pairs, 0.5), 2.0);
    assert_eq!(weighted_quantile(&mut pairs, 0.76), 3.0);
}

// ---------------------------------------------------------------- SVR

#[test]
fn svr_solutions_satisfy_kkt_and_nu_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let n = rng.gen_range(20..80);
        let dim = rng.gen_range(1..4);
        let x: Vec<f64> = (0..n * dim).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = x
            .chunks(dim)
            .map(|r| (3.0 * r[0]).sin() + 0.5 * r.iter().sum::<f64>() + rng.gen_range(-0.1..0.1))
            .collect();
        let cfg = SvrConfig {
            nu: rng.gen_range(0.1..0.9),
            gamma: rng.gen_range(0.5..3.0),
            c: rng.gen_range(0.2..5.0),
            tolerance: 1e-4,
            ..SvrConfig::default()
        };
        let sol = solve_nu_svr(&x, dim, &y, &cfg).unwrap();
        let residual = kkt_residual(&x, dim, &y, &sol, &cfg);
        assert!(residual <= cfg.tolerance + 1e-9, "residual {residual}");

        let (a, a_star) = sol.alpha.split_at(n);
        let at_bound = (0..n).filter(|&i| a[i] >= cfg.c * (1.0 - 1e-12) || a_star[i] >= cfg.c * (1.0 - 1e-12)).count();
        let support = (0..n).filter(|&i| a[i] > 0.0 || a_star[i] > 0.0).count();
        let nf = n as f64;
        assert!(at_bound as f64 / nf <= cfg.nu + 1.0 / nf, "margin errors {at_bound}/{n} nu {}", cfg.nu);
        assert!(support as f64 / nf >= cfg.nu - 1.0 / nf, "support {support}/{n} nu {}", cfg.nu);
        assert!(sol.epsilon >= -1e-12);
        for (c, (p, m)) in sol.coef.iter().zip(a.iter().zip(a_star)) {
            assert_eq!(*c, p - m);
        }
    }
}

#[test]
fn svr_constant_target_has_zero_tube() {
    let x: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
    let y = vec![0.5; 30];
    let cfg = SvrConfig { nu: 0.5, tolerance: 1e-6, ..SvrConfig::default() };
    let sol = solve_nu_svr(&x, 1, &y, &cfg).unwrap();
    assert!(sol.epsilon.abs() < 1e-4);
}

// ---------------------------------------------------------------- NN

#[test]
fn nn_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let inputs = rng.gen_range(1..5);
        let hidden = rng.gen_range(1..6);
        let n = rng.gen_range(5..30);
        let p = NnParams::random(inputs, hidden, &mut rng);
        assert_eq!(p.w.len(), NnParams::count(inputs, hidden));
        let x: Vec<f64> = (0..n * inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let alpha = rng.gen_range(0.001..1.0);
        let beta = rng.gen_range(1.0..100.0);
        let (_, grad) = evidence_objective(&p, &x, &t, alpha, beta);
        for k in 0..p.w.len() {
            let h = 1e-6;
            let mut plus = p.clone();
            plus.w[k] += h;
            let mut minus = p.clone();
            minus.w[k] -= h;
            let fd = (evidence_objective(&plus, &x, &t, alpha, beta).0 - evidence_objective(&minus, &x, &t, alpha, beta).0)
                / (2.0 * h);
            assert!(
                (grad[k] - fd).abs() <= 1e-5 * grad[k].abs().max(1.0),
                "weight {k}: analytic {} numeric {fd}",
                grad[k]
            );
        }
    }
}

#[test]
fn nn_fit_is_bitwise_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let x: Vec<f64> = (0..300).map(|_| rng.gen_range(0.0..1000.0)).collect();
    let t: Vec<f64> = x.iter().map(|g| 0.85 * g / 1000.0 - 0.05 * (g / 1000.0).powi(2)).collect();
    let cfg = NnConfig { features: gti_features(), ..NnConfig::default() };
    let fit = || {
        let mut m = NnModel::new(cfg.clone(), 1234);
        m.fit_matrix(&x, &t).unwrap();
        m
    };
    let (a, b) = (fit(), fit());
    let bits = |m: &NnModel| m.params().unwrap().w.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.hyper.0.to_bits(), b.hyper.0.to_bits());
    // a smooth one-input curve is learnt closely
    for g in [100.0, 500.0, 900.0] {
        let want = 0.85 * g / 1000.0 - 0.05 * (g / 1000.0f64).powi(2);
        assert!((a.output(&[g]).unwrap() - want).abs() < 0.02);
    }
    let mut other = NnModel::new(cfg, 999);
    other.fit_matrix(&x, &t).unwrap();
    assert_ne!(bits(&a), bits(&other));
}

// ---------------------------------------------------------------- ensemble

#[test]
fn ensemble_prefers_the_exact_member() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let targets: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..500.0)).collect();
    let preds: Vec<f64> = targets.iter().flat_map(|&t| [t, rng.gen_range(0.0..500.0)]).collect();
    let w = ens_fit(&preds, 2, &targets).unwrap();
    assert!((w.raw[0] - 1.0).abs() < 1e-9 && w.raw[1].abs() < 1e-9);
    assert!((w.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn duplicate_members_split_evenly() {
    let targets: Vec<f64> = (0..50).map(|i| (i * 7 % 13) as f64 * 10.0).collect();
    let preds: Vec<f64> = targets.iter().flat_map(|&t| [t, t]).collect();
    let w = ens_fit(&preds, 2, &targets).unwrap();
    assert_eq!(w.raw, vec![0.5, 0.5]);
    assert!((w.normalized[0] - 0.5).abs() < 1e-12);
}

#[test]
fn single_member_and_prediction_arithmetic() {
    let targets = [10.0, 20.0, 30.0];
    let w = ens_fit(&[20.0, 40.0, 60.0], 1, &targets).unwrap();
    assert_relative_eq!(w.raw[0], 0.5, max_relative = 1e-12);
    assert_relative_eq!(w.normalized[0], 1.0, max_relative = 1e-12);

    let half = EnsembleWeights { raw: vec![1.0, 1.0], normalized: vec![0.5, 0.5] };
    assert_eq!(ens_predict(&half, &[100.0, 300.0]).unwrap(), 200.0);
    let first = EnsembleWeights { raw: vec![2.0, 0.0], normalized: vec![1.0, 0.0] };
    assert_eq!(ens_predict(&first, &[123.0, 7.0]).unwrap(), 123.0);
    let neg = EnsembleWeights { raw: vec![1.5, -0.5], normalized: vec![1.5, -0.5] };
    assert_eq!(ens_predict(&neg, &[40.0, 40.0]).unwrap(), 40.0);
    assert!(ens_predict(&half, &[1.0]).is_err());
}

#[test]
fn ensemble_errors() {
    assert!(ens_fit(&[0.0; 20], 2, &[1.0; 10]).is_err());
    assert!(ens_fit(&[1.0, 2.0, 3.0, 4.0], 2, &[1.0, 2.0]).is_err());
    assert!(ens_fit(&[1.0, 2.0, 3.0], 2, &[1.0, 2.0]).is_err());
}

proptest! {
    #[test]
    fn stacked_fit_is_no_worse_than_any_member(
        rows in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0, 0.0f64..100.0, 0.0f64..100.0), 5..60)
    ) {
        let targets: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let preds: Vec<f64> = rows.iter().flat_map(|r| [r.1, r.2, r.3]).collect();
        prop_assume!(preds.iter().any(|p| *p != 0.0));
        let w = ens_fit(&preds, 3, &targets).unwrap();
        let sse = |f: &dyn Fn(usize) -> f64| (0..targets.len()).map(|i| (f(i) - targets[i]).powi(2)).sum::<f64>();
        let stacked = sse(&|i| (0..3).map(|j| w.raw[j] * preds[i * 3 + j]).sum());
        for j in 0..3 {
            let member = sse(&|i| preds[i * 3 + j]);
            prop_assert!(stacked <= member + 1e-9 * member.max(1.0));
        }
    }
}
