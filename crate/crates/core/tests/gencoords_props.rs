use nalgebra::{DMatrix, DVector};
use precis_core::gencoords::*;
use proptest::prelude::*;

fn double_factorial(n: i64) -> f64 {
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// k-th derivative at zero of the autocorrelation exp(-h^2 / 4s^2).
fn rho_derivative(k: usize, s: f64) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let j = (k / 2) as i32;
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    sign * double_factorial(2 * j as i64 - 1) / (2.0 * s * s).powi(j)
}

/// Covariance of the generalized noise of order 6, built from the kernel's
/// autocorrelation derivatives.
fn generalized_covariance(s: f64) -> DMatrix<f64> {
    DMatrix::from_fn(7, 7, |i, j| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sign * rho_derivative(i + j, s)
    })
}

#[test]
fn smoothness_table_is_inverse_noise_covariance() {
    for s in [0.25, 0.5, 0.9] {
        let v = generalized_covariance(s);
        let oracle = v.clone().try_inverse().unwrap();
        let table = smoothness_matrix(SmoothnessSpec::new(s, 6).unwrap()).unwrap();
        let sm = table.matrix();
        for i in 0..7 {
            for j in 0..7 {
                let want = oracle[(i, j)];
                let got = sm[(i, j)];
                if (i + j) % 2 == 1 {
                    assert_eq!(got, 0.0);
                    assert!(want.abs() < 1e-9 * oracle.amax());
                } else {
                    assert!(((got - want) / want).abs() < 1e-12, "s={s} ({i},{j}) {got} vs {want}");
                }
            }
        }
        let id = sm * &v;
        assert!((id - DMatrix::identity(7, 7)).amax() < 1e-9);
    }
}

#[test]
fn smaller_orders_are_leading_blocks() {
    let full = smoothness_matrix(SmoothnessSpec::new(0.4, 6).unwrap()).unwrap();
    for p in 0..6 {
        let sub = smoothness_matrix(SmoothnessSpec::new(0.4, p).unwrap()).unwrap();
        assert_eq!(sub.matrix(), &full.matrix().view((0, 0), (p + 1, p + 1)).into_owned());
    }
}

#[test]
fn diagonal_grows_for_wide_kernels() {
    let diag = |s: f64| smoothness_matrix(SmoothnessSpec::new(s, 6).unwrap()).unwrap().matrix().diagonal();
    let d = diag(2.0);
    assert!(d[6] > d[5] && d[3] > d[2] && d[2] > d[1]);
    assert!(diag(1.2)[6] > diag(1.0)[6]);
}

#[test]
fn colored_noise_autocorrelation() {
    let (s, dt, n) = (0.5, 0.1, 100_000);
    let x = colored_noise(11, n, dt, s, 1.0, 1);
    let x: Vec<f64> = x.column(0).iter().copied().collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let max_lag = (3.0 * s / dt).round() as usize;
    for lag in 1..=max_lag {
        let c = (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum::<f64>() / (n - lag) as f64;
        let h = lag as f64 * dt;
        let want = (-h * h / (4.0 * s * s)).exp();
        assert!((c / var - want).abs() < 0.05, "lag {lag}: {} vs {want}", c / var);
    }
    assert!((var.sqrt() - 1.0).abs() < 0.05);
}

fn spd(dim: usize, seed: &[f64]) -> DMatrix<f64> {
    let l = DMatrix::from_fn(dim, dim, |i, j| seed[(i * dim + j) % seed.len()]);
    &l * l.transpose() + DMatrix::identity(dim, dim) * 0.1
}

fn is_pd(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

proptest! {
    #[test]
    fn derivative_operator_is_nilpotent(n in 1usize..4, p in 0usize..7) {
        let d = derivative_operator(n, p);
        let mut acc = DMatrix::identity(d.nrows(), d.ncols());
        for _ in 0..=p {
            acc = &acc * &d;
        }
        prop_assert!(acc.iter().all(|v| *v == 0.0));
        if p > 0 {
            let mut lower = DMatrix::identity(d.nrows(), d.ncols());
            for _ in 0..p {
                lower = &lower * &d;
            }
            prop_assert!(lower.amax() > 0.0);
        }
    }

    #[test]
    fn smoothness_symmetric_checkerboard_pd(s in 0.05f64..0.999, p in 0usize..7) {
        let sm = smoothness_matrix(SmoothnessSpec::new(s, p).unwrap()).unwrap();
        let m = sm.matrix();
        prop_assert_eq!(m, &m.transpose());
        for i in 0..=p {
            for j in 0..=p {
                if (i + j) % 2 == 1 {
                    prop_assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
        let eig = m.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn smoothness_diagonal_decreases_for_narrow_kernels(s in 0.01f64..0.4999) {
        let sm = smoothness_matrix(SmoothnessSpec::new(s, 6).unwrap()).unwrap();
        let d = sm.matrix().diagonal();
        for k in 0..6 {
            prop_assert!(d[k + 1] < d[k], "s={} k={} {} !< {}", s, k, d[k + 1], d[k]);
        }
    }

    #[test]
    fn kronecker_assembly_is_spd(
        s in 0.1f64..0.9,
        p in 0usize..4,
        vals in proptest::collection::vec(-1.0f64..1.0, 9),
    ) {
        let sm = smoothness_matrix(SmoothnessSpec::new(s, p).unwrap()).unwrap();
        let pz = spd(2, &vals);
        let pu = spd(1, &vals[3..]);
        let pw = spd(3, &vals[1..]);
        let g = generalized_precision(&sm, &pz, &pu, &pw).unwrap();
        prop_assert_eq!(g.nrows(), (p + 1) * 6);
        prop_assert!((&g - g.transpose()).amax() < 1e-12);
        prop_assert!(is_pd(&g));
    }

    #[test]
    fn embedding_exact_on_polynomials(
        p in 0usize..7,
        coeffs in proptest::collection::vec(-2.0f64..2.0, 7),
        center in 5usize..25,
        dt in 0.05f64..0.3,
    ) {
        let deg = p;
        let nt = 40;
        let poly = |t: f64, k: usize| -> f64 {
            // k-th derivative of sum c_j t^j
            (k..=deg).map(|j| {
                let fall: f64 = ((j - k + 1)..=j).map(|v| v as f64).product();
                coeffs[j] * fall * t.powi((j - k) as i32)
            }).sum()
        };
        let samples = DMatrix::from_fn(nt, 1, |t, _| poly(t as f64 * dt, 0));
        let g = embed_series(&samples, dt, center, p).unwrap();
        let t0 = center as f64 * dt;
        for k in 0..=p {
            let want = poly(t0, k);
            let got = g.block(k)[0];
            let scale = (0..=deg).map(|j| coeffs[j].abs()).sum::<f64>().max(1.0) * dt.powi(-(k as i32)) * 10f64.powi(k as i32);
            prop_assert!((got - want).abs() <= 1e-9 * scale, "k={} {} vs {}", k, got, want);
        }
    }

    #[test]
    fn colored_noise_scales_with_sigma(seed in 0u64..1000, sigma in 0.01f64..5.0) {
        let a = colored_noise(seed, 200, 0.1, 0.5, 1.0, 2);
        let b = colored_noise(seed, 200, 0.1, 0.5, sigma, 2);
        prop_assert!((a * sigma - b).amax() < 1e-12);
    }
}

#[test]
fn generalized_vector_length_is_checked() {
    assert!(GeneralizedVector::new(2, 2, DVector::zeros(5)).is_err());
    let v = GeneralizedVector::new(2, 2, DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
    assert_eq!(v.block(1).as_slice(), &[3.0, 4.0]);
}
