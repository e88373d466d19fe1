use approx::assert_relative_eq;
use proptest::prelude::*;
use pvbench_core::eval::{
    compute_metrics, kernel_density, silverman_bandwidth, wilcoxon_signed_rank, MetricAccumulator, Scope, TestMethod,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct transcription of the four error indices.
fn naive(f: &[f64], m: &[f64], n: &[f64]) -> (f64, f64, f64, f64) {
    let len = f.len() as f64;
    let mut abs_n = 0.0;
    let mut sq_n = 0.0;
    let mut bias_n = 0.0;
    let mut abs = 0.0;
    for i in 0..f.len() {
        let e = f[i] - m[i];
        abs_n += e.abs() / n[i];
        sq_n += (e / n[i]) * (e / n[i]);
        bias_n += e / n[i];
        abs += e.abs();
    }
    (100.0 * abs_n / len, 100.0 * (sq_n / len).sqrt(), 100.0 * bias_n / len, abs / len)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn metrics_match_naive_reference_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.gen_range(1..200);
        let nominal: Vec<f64> = (0..n).map(|_| rng.gen_range(10.0..5000.0)).collect();
        let measured: Vec<f64> = nominal.iter().map(|p| rng.gen_range(0.0..*p)).collect();
        let forecast: Vec<f64> = nominal.iter().map(|p| rng.gen_range(0.0..*p)).collect();
        let r = compute_metrics(&forecast, &measured, &nominal).unwrap();
        let (nmae, nrmse, nmbe, mae) = naive(&forecast, &measured, &nominal);
        assert!(close(r.nmae, nmae), "{} vs {}", r.nmae, nmae);
        assert!(close(r.nrmse, nrmse));
        assert!((r.nmbe - nmbe).abs() <= 1e-12 * nmae.max(1e-300));
        assert!(close(r.mae, mae));
        assert_eq!(r.n_hours, n);
    }
}

#[test]
fn hand_example() {
    let r = compute_metrics(&[150.0, 50.0], &[100.0, 100.0], &[200.0, 200.0]).unwrap();
    assert_eq!(r.nmae, 25.0);
    assert_eq!(r.nrmse, 25.0);
    assert_eq!(r.nmbe, 0.0);
    assert_eq!(r.mae, 50.0);
}

#[test]
fn accumulator_merge_matches_single_pass() {
    let f = [10.0, 20.0, 35.0, 0.0, 5.0];
    let m = [12.0, 18.0, 30.0, 1.0, 5.0];
    let n = [50.0, 50.0, 60.0, 60.0, 60.0];
    let mut whole = MetricAccumulator::new();
    let mut a = MetricAccumulator::new();
    let mut b = MetricAccumulator::new();
    for i in 0..f.len() {
        whole.push(f[i], m[i], n[i]);
        if i < 2 {
            a.push(f[i], m[i], n[i]);
        } else {
            b.push(f[i], m[i], n[i]);
        }
    }
    a.merge(&b);
    let x = whole.report(Scope::Overall).unwrap();
    let y = a.report(Scope::Overall).unwrap();
    assert_relative_eq!(x.nmae, y.nmae, max_relative = 1e-14);
    assert_relative_eq!(x.nrmse, y.nrmse, max_relative = 1e-14);
    assert_eq!(x.n_hours, y.n_hours);
    assert!(MetricAccumulator::new().report(Scope::Overall).is_none());
}

proptest! {
    #[test]
    fn index_ordering_holds(
        rows in prop::collection::vec((0.0f64..1000.0, 0.0f64..1000.0, 1.0f64..1000.0), 1..100)
    ) {
        let f: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let m: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let n: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let r = compute_metrics(&f, &m, &n).unwrap();
        prop_assert!(r.nrmse >= r.nmae * (1.0 - 1e-12));
        prop_assert!(r.nmae >= r.nmbe.abs() * (1.0 - 1e-12));
    }

    #[test]
    fn scaling_everything_leaves_normalised_indices_unchanged(
        rows in prop::collection::vec((0.0f64..1000.0, 0.0f64..1000.0, 1.0f64..1000.0), 1..50),
        s in 0.1f64..10.0,
    ) {
        let f: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let m: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let n: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let scaled = |v: &[f64]| v.iter().map(|x| x * s).collect::<Vec<_>>();
        let a = compute_metrics(&f, &m, &n).unwrap();
        let b = compute_metrics(&scaled(&f), &scaled(&m), &scaled(&n)).unwrap();
        prop_assert!((a.nmae - b.nmae).abs() <= 1e-9 * a.nmae.max(1.0));
        prop_assert!((b.mae - s * a.mae).abs() <= 1e-9 * b.mae.max(1.0));
    }
}

/// Two-sided exact p-value by listing all 2^n sign assignments of the
/// (mid-)ranks of the non-zero differences.
fn enumerate_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs()));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && d[idx[j + 1]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    let w_plus: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let total: f64 = ranks.iter().sum();
    let observed = w_plus.min(total - w_plus);
    let mut extreme = 0usize;
    for mask in 0u32..(1 << n) {
        let w: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= observed + 1e-9 {
            extreme += 1;
        }
    }
    (2.0 * extreme as f64 / (1u64 << n) as f64).min(1.0)
}

#[test]
fn exact_p_values_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 5..=10 {
        for rep in 0..40 {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let b: Vec<f64> = if rep % 3 == 0 {
                // force ties in |d|
                a.iter().map(|x| x - (rng.gen_range(-3i32..=3) as f64)).collect()
            } else {
                (0..n).map(|_| rng.gen_range(0.0..10.0)).collect()
            };
            let nonzero = a.iter().zip(&b).filter(|(x, y)| x != y).count();
            if nonzero < 5 {
                continue;
            }
            let r = wilcoxon_signed_rank(&a, &b).unwrap();
            assert_eq!(r.method, TestMethod::Exact);
            let p = enumerate_p(&a, &b);
            assert!((r.p_value - p).abs() < 1e-12, "n={n}: {} vs {p}", r.p_value);
        }
    }
}

#[test]
fn all_positive_five_pairs() {
    let a = [2.0, 3.0, 4.0, 5.0, 6.0];
    let b = [1.0, 1.0, 1.0, 1.0, 1.0];
    let r = wilcoxon_signed_rank(&a, &b).unwrap();
    assert_relative_eq!(r.p_value, 0.0625, max_relative = 1e-12);
    assert_eq!(r.w_minus, 0.0);
    assert_eq!(r.w_plus, 15.0);
}

#[test]
fn too_few_pairs_is_an_error() {
    assert!(wilcoxon_signed_rank(&[1.0, 2.0], &[0.0, 0.0]).is_err());
    assert!(wilcoxon_signed_rank(&[1.0; 8], &[1.0; 8]).is_err());
    assert!(wilcoxon_signed_rank(&[1.0; 8], &[1.0; 7]).is_err());
}

proptest! {
    #[test]
    fn swapping_samples_keeps_p(
        pairs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 6..40)
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let (Ok(x), Ok(y)) = (wilcoxon_signed_rank(&a, &b), wilcoxon_signed_rank(&b, &a)) {
            prop_assert!((x.p_value - y.p_value).abs() < 1e-12);
            prop_assert!((x.w_plus - y.w_minus).abs() < 1e-9);
            prop_assert!(x.p_value > 0.0 && x.p_value <= 1.0);
        }
    }
}

#[test]
fn normal_approximation_for_large_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0) + 0.3).collect();
    let b: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0)).collect();
    let r = wilcoxon_signed_rank(&a, &b).unwrap();
    assert_eq!(r.method, TestMethod::NormalApproximation);
    assert!(r.p_value < 1e-6);
}

#[test]
fn density_integrates_to_one_and_matches_a_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let values: Vec<f64> = (0..300).map(|_| rng.gen_range(-5.0..5.0f64).powi(3) / 10.0).collect();
    let d = kernel_density(&values).unwrap();
    assert_relative_eq!(d.integral(), 1.0, epsilon = 1e-9);
    assert_eq!(d.grid.len(), 512);
    assert_eq!(d.bandwidth, silverman_bandwidth(&values, d.variance.sqrt()));
    // the unnormalised Gaussian sum, rescaled by its own trapezoid area,
    // is the same curve
    let h = d.bandwidth;
    let raw: Vec<f64> = d
        .grid
        .iter()
        .map(|x| values.iter().map(|v| (-(x - v).powi(2) / (2.0 * h * h)).exp()).sum::<f64>())
        .collect();
    let dx = d.grid[1] - d.grid[0];
    let area: f64 = raw.windows(2).map(|w| (w[0] + w[1]) * dx / 2.0).sum();
    for (a, b) in d.density.iter().zip(&raw) {
        assert!((a - b / area).abs() < 1e-9 * (1.0 + a.abs()));
    }
}

#[test]
fn silverman_rule_examples() {
    let v: Vec<f64> = (1..=100).map(f64::from).collect();
    let sd = {
        let m = 50.5;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 99.0).sqrt()
    };
    let h = silverman_bandwidth(&v, sd);
    assert!(h > 0.0 && h < sd);
    let constant = vec![3.0; 40];
    let d = kernel_density(&constant).unwrap();
    assert_relative_eq!(d.integral(), 1.0, epsilon = 1e-9);
    assert_eq!(d.variance, 0.0);
}
