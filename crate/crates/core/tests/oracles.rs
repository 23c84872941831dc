use lesets::baselines::{lasso_fit, ridge_fit, Knn, Standardizer};
use lesets::train::{mean_std, metrics};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Two-pass reference with compensated sums.
fn reference_metrics(y: &[f64], p: &[f64]) -> (f64, Option<f64>) {
    let n = y.len() as f64;
    let kahan = |it: &mut dyn Iterator<Item = f64>| {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for v in it {
            let t = v - c;
            let u = s + t;
            c = (u - s) - t;
            s = u;
        }
        s
    };
    let mae = kahan(&mut y.iter().zip(p).map(|(a, b)| (a - b).abs())) / n;
    let mean = kahan(&mut y.iter().copied()) / n;
    let ss_tot = kahan(&mut y.iter().map(|a| (a - mean) * (a - mean)));
    let ss_res = kahan(&mut y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)));
    (mae, (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot))
}

#[test]
fn metrics_match_reference_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let n = rng.random_range(2..200);
        let scale = 10f64.powi(rng.random_range(-2..4));
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let p: Vec<f64> = y.iter().map(|v| v + rng.random_range(-0.5..0.5) * scale).collect();
        let m = metrics(&y, &p).unwrap();
        let (mae, r2) = reference_metrics(&y, &p);
        assert!(rel_close(m.mae, mae, 1e-12), "{} vs {mae}", m.mae);
        assert!(rel_close(m.r2.unwrap(), r2.unwrap(), 1e-12));
        assert_eq!(m.n, n);
    }
}

#[test]
fn metric_edge_cases() {
    let m = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!((m.mae, m.r2), (0.0, Some(1.0)));
    let m = metrics(&[2.0, 2.0], &[1.0, 3.0]).unwrap();
    assert_eq!((m.mae, m.r2), (1.0, None));
    // predicting the mean scores zero
    let m = metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
    assert_eq!(m.r2, Some(0.0));
    assert!(metrics(&[], &[]).is_err());
    assert!(metrics(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn mean_std_uses_sample_deviation() {
    let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
    assert_eq!(m, 5.0);
    assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
    assert_eq!(mean_std(&[3.0]), Some((3.0, 0.0)));
    assert_eq!(mean_std(&[]), None);
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|j| rng.random_range(-1.0..1.0) * (j + 1) as f64 + j as f64).collect())
        .collect();
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = x
        .iter()
        .map(|r| 3.0 + r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-0.3..0.3))
        .collect();
    (x, y)
}

/// Ridge as ordinary least squares on the augmented system
/// `[Z; sqrt(λ) I] w = [y − ȳ; 0]`, solved by SVD.
fn ridge_oracle(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let (n, d) = (x.len(), x[0].len());
    let nf = n as f64;
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / nf).sqrt())
        .collect();
    let ybar = y.iter().sum::<f64>() / nf;
    let a = DMatrix::from_fn(n + d, d, |i, j| {
        if i < n {
            (x[i][j] - mean[j]) / std[j]
        } else if i - n == j {
            lambda.sqrt()
        } else {
            0.0
        }
    });
    let b = DVector::from_fn(n + d, |i, _| if i < n { y[i] - ybar } else { 0.0 });
    let w = a.svd(true, true).solve(&b, 1e-14).unwrap();
    (ybar, w.iter().copied().collect())
}

#[test]
fn ridge_matches_augmented_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..200 {
        let d = rng.random_range(1..8);
        let n = rng.random_range(d + 2..60);
        let (x, y) = random_problem(&mut rng, n, d);
        let lambda = [0.0, 1e-3, 0.5, 10.0, 1e3][trial % 5];
        let m = ridge_fit(&x, &y, lambda).unwrap();
        let (b0, w) = ridge_oracle(&x, &y, lambda);
        assert!(rel_close(m.intercept, b0, 1e-8));
        for (a, b) in m.coef.iter().zip(&w) {
            assert!(rel_close(*a, *b, 1e-8), "trial {trial} lambda {lambda}: {a} vs {b}");
        }
        for r in x.iter().take(5) {
            let z: f64 = r
                .iter()
                .zip(&m.standardizer.mean)
                .zip(&m.standardizer.std)
                .zip(&w)
                .map(|(((v, mu), s), c)| (v - mu) / s * c)
                .sum();
            assert!(rel_close(m.predict(r).unwrap(), b0 + z, 1e-8));
        }
    }
}

fn permute_columns(x: &[Vec<f64>], order: &[usize]) -> Vec<Vec<f64>> {
    x.iter().map(|r| order.iter().map(|&j| r[j]).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_models_ignore_column_order(seed in any::<u64>(), d in 2usize..6, lambda in 1e-4f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = random_problem(&mut rng, 40, d);
        let order: Vec<usize> = (0..d).rev().collect();
        let xp = permute_columns(&x, &order);
        let q = &x[0];
        let qp: Vec<f64> = order.iter().map(|&j| q[j]).collect();
        let r1 = ridge_fit(&x, &y, lambda).unwrap().predict(q).unwrap();
        let r2 = ridge_fit(&xp, &y, lambda).unwrap().predict(&qp).unwrap();
        prop_assert!(rel_close(r1, r2, 1e-9));
        let l1 = lasso_fit(&x, &y, lambda * 0.1).unwrap().predict(q).unwrap();
        let l2 = lasso_fit(&xp, &y, lambda * 0.1).unwrap().predict(&qp).unwrap();
        prop_assert!(rel_close(l1, l2, 1e-6));
        let k1 = Knn::fit(&x, &y, 3).unwrap().predict(q).unwrap();
        let k2 = Knn::fit(&xp, &y, 3).unwrap().predict(&qp).unwrap();
        prop_assert!(rel_close(k1, k2, 1e-12));
    }

    #[test]
    fn unpenalized_lasso_agrees_with_least_squares(seed in any::<u64>(), d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = random_problem(&mut rng, 50, d);
        let l = lasso_fit(&x, &y, 0.0).unwrap();
        let r = ridge_fit(&x, &y, 0.0).unwrap();
        for (a, b) in l.coef.iter().zip(&r.coef) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn knn_with_all_rows_predicts_the_mean(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = random_problem(&mut rng, n, 3);
        let knn = Knn::fit(&x, &y, n).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        prop_assert!(rel_close(knn.predict(&q).unwrap(), mean, 1e-12));
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_variance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, _) = random_problem(&mut rng, 25, 4);
        let st = Standardizer::fit(&x).unwrap();
        let z: Vec<Vec<f64>> = x.iter().map(|r| st.transform(r).unwrap()).collect();
        for j in 0..4 {
            let m = z.iter().map(|r| r[j]).sum::<f64>() / 25.0;
            let v = z.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / 25.0;
            prop_assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
    }
}
