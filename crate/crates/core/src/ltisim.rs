//! Continuous-time LTI plants, the spring-damper benchmark and a seeded
//! RK4 simulator with colored process and sensor noise.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{mismatch, Error, Result};
use crate::gencoords::colored_noise_from;

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub process_noise_prec: DMatrix<f64>,
    pub sensor_noise_prec: DMatrix<f64>,
}

fn check_spd(what: &'static str, m: &DMatrix<f64>, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(mismatch(what, format!("{dim}x{dim}"), format!("{}x{}", m.nrows(), m.ncols())));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-12 * m.abs().max().max(1.0) {
        return Err(Error::InvalidParameter(format!("{what} is not symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::InvalidParameter(format!("{what} is not positive definite")));
    }
    Ok(())
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        process_noise_prec: DMatrix<f64>,
        sensor_noise_prec: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(mismatch("A", "non-empty square", format!("{}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n {
            return Err(mismatch("B rows", n, b.nrows()));
        }
        if c.ncols() != n {
            return Err(mismatch("C columns", n, c.ncols()));
        }
        check_spd("process noise precision", &process_noise_prec, n)?;
        check_spd("sensor noise precision", &sensor_noise_prec, c.nrows())?;
        Ok(Self {
            a,
            b,
            c,
            process_noise_prec,
            sensor_noise_prec,
        })
    }

    /// Plant with identity noise precisions.
    pub fn deterministic(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = c.nrows();
        Self::new(a, b, c, DMatrix::identity(n, n), DMatrix::identity(m, m))
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
}

/// Spring-damper with position output: x = [position, velocity].
pub fn mass_spring_damper(mass: f64, k: f64, b: f64) -> Result<StateSpaceModel> {
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
    }
    if k < 0.0 || b < 0.0 {
        return Err(Error::InvalidParameter("stiffness and damping must be non-negative".into()));
    }
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -k / mass, -b / mass]);
    let bm = DMatrix::from_row_slice(2, 1, &[0.0, 1.0 / mass]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    StateSpaceModel::deterministic(a, bm, c)
}

/// The benchmark plant: m = 1.4 kg, k = 0.8 N/m, b = 0.4 Ns/m.
pub fn benchmark_plant() -> StateSpaceModel {
    mass_spring_damper(1.4, 0.8, 0.4).expect("valid benchmark constants")
}

/// u(t) = exp(-0.25 (t - 12)^2).
pub fn gaussian_bump_input(t: f64) -> f64 {
    (-0.25 * (t - 12.0).powi(2)).exp()
}

/// Which state rows receive process noise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProcessNoiseRows {
    All,
    Rows(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kernel_width: f64,
    pub sigma_w: f64,
    pub sigma_z: f64,
    pub process_rows: ProcessNoiseRows,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            kernel_width: 0.0,
            sigma_w: 0.0,
            sigma_z: 0.0,
            process_rows: ProcessNoiseRows::All,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    /// nt x n
    pub states: DMatrix<f64>,
    /// nt x m
    pub outputs: DMatrix<f64>,
    /// nt x r
    pub inputs: DMatrix<f64>,
    /// Process noise at half-step resolution, (2nt - 1) x n.
    pub process_noise: DMatrix<f64>,
    /// nt x m
    pub sensor_noise: DMatrix<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns t, x1.., y1.., u1...
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.states.ncols()).map(|i| format!("x{i}")));
        header.extend((1..=self.outputs.ncols()).map(|i| format!("y{i}")));
        header.extend((1..=self.inputs.ncols()).map(|i| format!("u{i}")));
        w.write_record(&header)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.states.row(k).iter().map(|v| v.to_string()));
            row.extend(self.outputs.row(k).iter().map(|v| v.to_string()));
            row.extend(self.inputs.row(k).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Number of samples on [0, duration] at spacing dt, both ends included.
pub fn sample_count(dt: f64, duration: f64) -> usize {
    (duration / dt + 1e-9).floor() as usize + 1
}

/// Fixed-step RK4 from x(0) = 0. Process noise is a smooth colored series
/// sampled at dt/2 so each RK4 stage sees its own noise value; sensor noise
/// is colored at dt. Process noise is drawn before sensor noise from a
/// single ChaCha8 stream seeded by `seed`.
pub fn simulate<F>(
    model: &StateSpaceModel,
    input: F,
    dt: f64,
    duration: f64,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Trajectory>
where
    F: Fn(f64) -> DVector<f64>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(duration >= dt) {
        return Err(Error::InvalidParameter("duration must be at least dt".into()));
    }
    let n = model.n_states();
    let m = model.n_outputs();
    let r = model.n_inputs();
    let nt = sample_count(dt, duration);
    let times: Vec<f64> = (0..nt).map(|k| k as f64 * dt).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = match &noise.process_rows {
        ProcessNoiseRows::All => (0..n).collect(),
        ProcessNoiseRows::Rows(v) => {
            if let Some(&bad) = v.iter().find(|&&i| i >= n) {
                return Err(mismatch("process noise row", format!("< {n}"), bad));
            }
            v.clone()
        }
    };
    let n_half = 2 * nt - 1;
    let mut process_noise = DMatrix::zeros(n_half, n);
    if noise.sigma_w > 0.0 && !rows.is_empty() {
        let wc = colored_noise_from(&mut rng, n_half, dt / 2.0, noise.kernel_width, noise.sigma_w, rows.len());
        for (j, &row) in rows.iter().enumerate() {
            process_noise.set_column(row, &wc.column(j));
        }
    }
    let sensor_noise = if noise.sigma_z > 0.0 {
        colored_noise_from(&mut rng, nt, dt, noise.kernel_width, noise.sigma_z, m)
    } else {
        DMatrix::zeros(nt, m)
    };

    let mut inputs = DMatrix::zeros(nt, r);
    for (k, &t) in times.iter().enumerate() {
        let u = input(t);
        if u.len() != r {
            return Err(mismatch("input dimension", r, u.len()));
        }
        inputs.set_row(k, &u.transpose());
    }

    let f = |t: f64, x: &DVector<f64>, w: DVector<f64>| -> DVector<f64> { &model.a * x + &model.b * input(t) + w };
    let w_at = |i: usize| -> DVector<f64> { process_noise.row(i).transpose() };
    let mut states = DMatrix::zeros(nt, n);
    let mut x = DVector::zeros(n);
    for k in 0..nt - 1 {
        let t = times[k];
        let k1 = f(t, &x, w_at(2 * k));
        let k2 = f(t + dt / 2.0, &(&x + &k1 * (dt / 2.0)), w_at(2 * k + 1));
        let k3 = f(t + dt / 2.0, &(&x + &k2 * (dt / 2.0)), w_at(2 * k + 1));
        let k4 = f(t + dt, &(&x + &k3 * dt), w_at(2 * k + 2));
        x = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        states.set_row(k + 1, &x.transpose());
    }
    let outputs = &states * model.c.transpose() + &sensor_noise;
    Ok(Trajectory {
        dt,
        times,
        states,
        outputs,
        inputs,
        process_noise,
        sensor_noise,
    })
}

/// Scalar input helper: wraps a scalar signal into a 1-vector.
pub fn scalar_input(f: impl Fn(f64) -> f64) -> impl Fn(f64) -> DVector<f64> {
    move |t| DVector::from_element(1, f(t))
}
