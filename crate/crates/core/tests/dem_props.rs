use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use precis_core::benchmark::*;
use precis_core::dem::*;
use precis_core::gencoords::Embedder;
use precis_core::ltisim::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(seed: u64, p: usize, d: usize, mode: InputMode) -> (GenerativeModel, EmbeddedData, Posterior) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let a = DMatrix::from_fn(2, 2, |_, _| u(-1.0, 1.0));
    let b = DMatrix::from_fn(2, 1, |_, _| u(-1.0, 1.0));
    let c = DMatrix::from_fn(1, 2, |_, _| u(-1.0, 1.0));
    let plant = StateSpaceModel::deterministic(a, b, c).unwrap();
    let mut model = GenerativeModel::from_plant(&plant, p, d, u(0.2, 0.8), mode);
    let k = model.layout.len();
    model.theta_prior = DVector::from_fn(k, |_, _| u(-1.0, 1.0));
    model.theta_prior_prec = DVector::from_fn(k, |_, _| u(0.5, 3.0));
    model.theta_unknown = vec![true; k];
    model.input_prior_prec = DMatrix::from_element(1, 1, u(0.5, 2.0));
    let nt = 5;
    let data = EmbeddedData {
        dt: 0.1,
        y: (0..nt).map(|_| DVector::from_fn(model.y_len(), |_, _| u(-1.0, 1.0))).collect(),
        u: (0..nt).map(|_| DVector::from_fn(model.u_len(), |_, _| u(-1.0, 1.0))).collect(),
    };
    let big = model.big_x_len();
    let x: Vec<DVector<f64>> = (0..nt).map(|_| DVector::from_fn(big, |_, _| u(-1.0, 1.0))).collect();
    let l = DMatrix::from_fn(big, big, |_, _| u(-0.3, 0.3));
    let sigma_x = &l * l.transpose() + DMatrix::identity(big, big);
    let theta = DVector::from_fn(k, |_, _| u(-1.0, 1.0));
    let posterior = Posterior {
        x,
        sigma_x,
        theta,
        theta_prec: DMatrix::identity(k, k),
        theta_cov: DMatrix::identity(k, k),
        lambda: Vector2::new(u(-1.0, 1.0), u(-1.0, 1.0)),
        lambda_cov: Matrix2::identity(),
        fe_trace: Vec::new(),
    };
    (model, data, posterior)
}

fn fe_at(model: &GenerativeModel, data: &EmbeddedData, post: &Posterior, theta: &DVector<f64>) -> f64 {
    let mut p = post.clone();
    p.theta = theta.clone();
    free_energy(model, &p, data).unwrap().total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn theta_derivatives_match_finite_differences(seed in 0u64..1_000_000, p in 0usize..3, d_raw in 0usize..3, known in any::<bool>()) {
        let d = d_raw.min(p);
        let mode = if known { InputMode::Known } else { InputMode::Estimated };
        let (model, data, post) = random_instance(seed, p, d, mode);
        let k = model.layout.len();
        let h = 1e-3;
        let grad = theta_gradient(&model, &post, &data).unwrap();
        let hess = learn_parameter_precision(&model, &post, &data).unwrap();
        prop_assert!(!hess.projected);
        let mut fd_h = DMatrix::zeros(k, k);
        let mut fd_g = DVector::zeros(k);
        let th = &post.theta;
        for i in 0..k {
            let mut e_i = DVector::zeros(k);
            e_i[i] = h;
            fd_g[i] = (fe_at(&model, &data, &post, &(th + &e_i)) - fe_at(&model, &data, &post, &(th - &e_i))) / (2.0 * h);
            for j in 0..k {
                let mut e_j = DVector::zeros(k);
                e_j[j] = h;
                let f = |a: f64, b: f64| fe_at(&model, &data, &post, &(th + &e_i * a + &e_j * b));
                fd_h[(i, j)] = -(f(1.0, 1.0) - f(1.0, -1.0) - f(-1.0, 1.0) + f(-1.0, -1.0)) / (4.0 * h * h);
            }
        }
        let rel_h = (&fd_h - &hess.matrix).amax() / hess.matrix.amax();
        let rel_g = (&fd_g - &grad).amax() / grad.amax().max(1.0);
        prop_assert!(rel_h < 1e-5, "hessian rel err {}", rel_h);
        prop_assert!(rel_g < 1e-5, "gradient rel err {}", rel_g);
    }

    #[test]
    fn estimate_invariant_to_common_precision_scale(seed in 0u64..1_000_000, log_c in -3.0f64..3.0) {
        let (mut model, data, post) = random_instance(seed, 2, 1, InputMode::Estimated);
        let base = estimate_states(&model, &data, &post.theta, &post.lambda).unwrap();
        model.input_prior_prec *= log_c.exp();
        let lambda = post.lambda + Vector2::new(log_c, log_c);
        let scaled = estimate_states(&model, &data, &post.theta, &lambda).unwrap();
        for (a, b) in base.x.iter().zip(&scaled.x) {
            prop_assert!((a - b).amax() <= 1e-8 * (1.0 + a.amax()));
        }
    }
}

#[test]
fn zero_case_free_energy_vanishes() {
    let plant = benchmark_plant();
    let mut model = GenerativeModel::from_plant(&plant, 2, 1, 0.5, InputMode::Estimated);
    model.temporal = TemporalKind::Identity;
    let k = model.layout.len();
    let big = model.big_x_len();
    let nt = 4;
    let data = EmbeddedData {
        dt: 0.1,
        y: vec![DVector::zeros(model.y_len()); nt],
        u: vec![DVector::zeros(model.u_len()); nt],
    };
    let post = Posterior {
        x: vec![DVector::zeros(big); nt],
        sigma_x: DMatrix::identity(big, big),
        theta: model.theta_prior.clone(),
        theta_prec: DMatrix::identity(k, k),
        theta_cov: DMatrix::identity(k, k),
        lambda: Vector2::zeros(),
        lambda_cov: Matrix2::identity(),
        fe_trace: Vec::new(),
    };
    let fe = free_energy(&model, &post, &data).unwrap();
    for v in fe.as_array() {
        assert_eq!(v, 0.0);
    }
}

#[test]
fn doubling_sensor_precision() {
    let (model, data, post) = random_instance(3, 2, 1, InputMode::Estimated);
    let base = free_energy(&model, &post, &data).unwrap();
    let mut doubled = post.clone();
    doubled.lambda[0] += 2f64.ln();
    let fe = free_energy(&model, &doubled, &data).unwrap();
    assert!((fe.weighted_pe_y - 2.0 * base.weighted_pe_y).abs() < 1e-12 * base.weighted_pe_y.abs());
    let nt = data.len() as f64;
    let extra = nt * (model.layout.m * (model.state_order + 1)) as f64 * 2f64.ln() / 2.0;
    assert!((fe.noise_entropy - base.noise_entropy - extra).abs() < 1e-9);
    let sum: f64 = fe.as_array()[..9].iter().sum();
    assert!((sum - fe.total).abs() < 1e-9 * fe.total.abs().max(1.0));
}

#[test]
fn free_energy_rejects_non_spd_covariance() {
    let (model, data, mut post) = random_instance(4, 1, 1, InputMode::Known);
    post.sigma_x[(0, 0)] = -5.0;
    assert!(free_energy(&model, &post, &data).is_err());
}

#[test]
fn prediction_error_examples() {
    let plant = benchmark_plant();
    let model = GenerativeModel::from_plant(&plant, 2, 2, 0.5, InputMode::Estimated);
    let th = model.theta_prior.clone();
    let z = |n: usize| DVector::zeros(n);
    let e = prediction_errors(&model, &th, &z(model.x_len()), &z(model.u_len()), &z(model.y_len()), &z(model.u_len())).unwrap();
    assert_eq!(e.len(), model.eps_len());
    assert!(e.iter().all(|v| *v == 0.0));

    // perturbing the zeroth state block moves the output error by -C δ
    let x = DVector::from_fn(model.x_len(), |i, _| 0.1 * i as f64);
    let y = DVector::from_fn(model.y_len(), |i, _| 0.3 - 0.2 * i as f64);
    let u = DVector::from_element(model.u_len(), 0.4);
    let base = prediction_errors(&model, &th, &x, &u, &y, &u).unwrap();
    let mut xd = x.clone();
    xd[0] += 0.7;
    xd[1] -= 0.2;
    let moved = prediction_errors(&model, &th, &xd, &u, &y, &u).unwrap();
    let dy = &moved.rows(0, model.y_len()) - &base.rows(0, model.y_len());
    assert_eq!(dy[0], -(plant.c[(0, 0)] * 0.7 - plant.c[(0, 1)] * 0.2));
    assert!(dy.rows(1, model.y_len() - 1).iter().all(|v| *v == 0.0));

    assert!(prediction_errors(&model, &th, &z(3), &z(model.u_len()), &z(model.y_len()), &z(model.u_len())).is_err());
}

#[test]
fn prediction_error_vanishes_on_polynomial_trajectory() {
    // double integrator under a constant force: third derivatives vanish,
    // so an order-2 embedding is exact
    let plant = mass_spring_damper(1.0, 0.0, 0.0).unwrap();
    let force = 0.6;
    let tr = simulate(&plant, scalar_input(move |_| force), 0.1, 3.0, &NoiseSpec::none(), 0).unwrap();
    let model = GenerativeModel::from_plant(&plant, 2, 0, 0.5, InputMode::Known);
    let emb = Embedder::new(2, 0.1).unwrap();
    let xs = emb.embed_all(&tr.states).unwrap();
    let ys = emb.embed_all(&tr.outputs).unwrap();
    let us = Embedder::new(0, 0.1).unwrap().embed_all(&tr.inputs).unwrap();
    for t in 1..tr.len() - 1 {
        let e = prediction_errors(&model, &model.theta_prior, xs[t].values(), us[t].values(), ys[t].values(), us[t].values()).unwrap();
        assert!(e.norm() < 1e-6, "t={t} |e|={}", e.norm());
    }
}

#[test]
fn noise_precision_examples() {
    let (pz, pw) = noise_precision_from_lambda(&Vector2::zeros(), 2, 1);
    assert_eq!(pz, DMatrix::identity(1, 1));
    assert_eq!(pw, DMatrix::identity(2, 2));
    let (pz, _) = noise_precision_from_lambda(&Vector2::new(10f64.ln(), 0.0), 2, 3);
    assert!((pz - DMatrix::identity(3, 3) * 10.0).amax() < 1e-12);
    let (_, pw) = noise_precision_from_lambda(&Vector2::new(0.0, -2.0), 2, 1);
    assert!((pw[(0, 0)] - 0.1353).abs() < 1e-4 && pw[(1, 1)] == pw[(0, 0)] && pw[(0, 1)] == 0.0);
}

#[test]
fn noise_free_states_are_recovered() {
    let plant = benchmark_plant();
    let tr = simulate(&plant, scalar_input(gaussian_bump_input), 0.1, 32.0, &NoiseSpec::none(), 0).unwrap();
    let model = GenerativeModel::from_plant(&plant, 6, 6, 0.5, InputMode::Known);
    let data = EmbeddedData::from_series(&tr.outputs, &tr.inputs, 0.1, 6, 6).unwrap();
    let lambda = Vector2::new(noise_log_precision(0.0), noise_log_precision(0.0));
    let est = estimate_states(&model, &data, &model.theta_prior, &lambda).unwrap();
    let sse = (est.states() - &tr.states).norm_squared();
    assert!(sse < 1e-4, "state sse {sse:e}");
}

#[test]
fn dominant_input_prior_pins_inputs() {
    let plant = benchmark_plant();
    let noise = NoiseSpec {
        kernel_width: 0.5,
        sigma_w: 0.005,
        sigma_z: 0.01,
        process_rows: ProcessNoiseRows::Rows(vec![1]),
    };
    let tr = simulate(&plant, scalar_input(gaussian_bump_input), 0.1, 32.0, &noise, 1).unwrap();
    let mut model = GenerativeModel::from_plant(&plant, 6, 2, 0.5, InputMode::Estimated);
    model.input_prior_prec = DMatrix::from_element(1, 1, 1e14);
    let data = EmbeddedData::from_series(&tr.outputs, &tr.inputs, 0.1, 6, 2).unwrap();
    let lambda = Vector2::new(log_precision(0.01), log_precision(0.005));
    let est = estimate_states(&model, &data, &model.theta_prior, &lambda).unwrap();
    let us = est.inputs().unwrap();
    let eta = Embedder::new(2, 0.1).unwrap().embed_all(&tr.inputs).unwrap();
    for t in 0..tr.len() {
        assert!((us[(t, 0)] - eta[t].values()[0]).abs() < 1e-6, "t={t}");
    }
}

fn small_sysid(sz: f64, sw: f64, pin_process: bool) -> SysIdSetup {
    let noise = NoiseSpec {
        kernel_width: 0.5,
        sigma_w: sw,
        sigma_z: sz,
        process_rows: ProcessNoiseRows::Rows(vec![1]),
    };
    let mut s = SysIdSetup::benchmark(noise);
    if pin_process {
        s.lambda_prior = Vector2::new(0.0, log_precision(sw));
        s.lambda_prior_prec = Vector2::new(1.0, 1e6);
    }
    s
}

#[test]
fn fully_known_model_only_moves_lambda() {
    let s = small_sysid(0.01, 0.005, false);
    let tr = simulate_benchmark(&s.plant, &s.noise, s.dt, s.duration, 2).unwrap();
    let data = EmbeddedData::from_series(&tr.outputs, &tr.inputs, s.dt, 6, 6).unwrap();
    let model = GenerativeModel::from_plant(&s.plant, 6, 6, 0.5, InputMode::Known);
    let res = learn_parameters(&model, &data, &LearnSchedule::default(), None).unwrap();
    assert_eq!(res.posterior.theta, model.theta_prior);
    assert!(res.history.iter().all(|r| r.theta_step == 0.0));
    assert!(res.history.last().unwrap().lambda != model.lambda_prior);
    let tr = &res.posterior.fe_trace;
    assert!(tr.windows(2).all(|w| w[1] >= w[0] - 1e-9));
}

#[test]
fn benchmark_run_ascends_and_keeps_known_entries() {
    let s = small_sysid(0.01, 0.005, false);
    let truth = s.true_theta();
    for run in run_sysid_seeds(&s, &[0, 1, 2]) {
        let run = run.unwrap();
        let post = &run.result.posterior;
        for (i, e) in run.unknown_errors(&BENCHMARK_UNKNOWN).iter().enumerate() {
            assert!(e.abs() < 0.05, "seed {} entry {i} error {e}", run.seed);
        }
        for i in (0..truth.len()).filter(|i| !BENCHMARK_UNKNOWN.contains(i)) {
            assert!((post.theta[i] - run.theta_prior[i]).abs() < 1e-3);
        }
        let fe = &post.fe_trace;
        assert!(fe.iter().all(|v| v.is_finite()));
        let tail = &fe[fe.len().saturating_sub(11)..];
        assert!(tail.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let unknown_trace = |r: &IterationRecord| BENCHMARK_UNKNOWN.iter().map(|&i| r.theta_prec_diag[i]).sum::<f64>();
        for w in run.result.history.windows(2) {
            assert!(unknown_trace(&w[1]) >= unknown_trace(&w[0]) * (1.0 - 1e-9));
        }
        let cov_check = &post.theta_prec * &post.theta_cov;
        assert!((cov_check - DMatrix::identity(truth.len(), truth.len())).amax() < 1e-6);
    }
}

#[test]
fn sensor_log_precision_is_recovered() {
    for (sz, sw) in [(0.1, 0.05), (0.01, 0.005)] {
        let s = small_sysid(sz, sw, true);
        let seeds: Vec<u64> = (0..10).collect();
        let lz: Vec<f64> = run_sysid_seeds(&s, &seeds)
            .into_iter()
            .map(|r| r.unwrap().result.posterior.lambda[0])
            .collect();
        let truth = log_precision(sz);
        let med = median(&lz);
        assert!((med - truth).abs() < 0.2, "sigma_z {sz}: median {med} vs {truth}");
    }
}

#[test]
fn single_point_sweep_has_one_row() {
    let s = small_sysid(0.1, 0.05, true);
    let rows = sweep_prior_precision(&s, &[10.0], &[0]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].sse.len(), 1);
}

#[test]
fn lower_noise_gives_lower_error() {
    let low = small_sysid(0.001, 0.005, true);
    let base = small_sysid(0.1, 0.005, true);
    let seeds = [0, 1, 2, 3, 4];
    let sse = |s: &SysIdSetup| median(&run_sysid_seeds(s, &seeds).into_iter().map(|r| r.unwrap().sse).collect::<Vec<_>>());
    assert!(sse(&low) < sse(&base));
}

#[test]
fn learning_rejects_bad_initial_theta() {
    let s = small_sysid(0.01, 0.005, false);
    let tr = simulate_benchmark(&s.plant, &s.noise, s.dt, s.duration, 0).unwrap();
    let data = EmbeddedData::from_series(&tr.outputs, &tr.inputs, s.dt, 6, 6).unwrap();
    let model = sysid_model(&s, draw_prior(&s, 0));
    assert!(learn_parameters(&model, &data, &LearnSchedule::default(), Some((DVector::zeros(2), Vector2::zeros()))).is_err());
}
