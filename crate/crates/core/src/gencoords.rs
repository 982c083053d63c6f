//! Generalized coordinates: derivative shift operator, Gaussian-kernel
//! smoothness matrix, Taylor embedding of sampled series and colored noise.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{mismatch, Error, Result};

/// Largest order for which the smoothness matrix is tabulated.
pub const MAX_SMOOTHNESS_ORDER: usize = 6;

/// Kernel support used by the colored-noise generator, in kernel widths.
pub const KERNEL_SUPPORT: f64 = 6.0;

/// A variable stacked with its first `order` temporal derivatives,
/// blocks ordered `[v, v', v'', ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedVector {
    base_dim: usize,
    order: usize,
    values: DVector<f64>,
}

impl GeneralizedVector {
    pub fn new(base_dim: usize, order: usize, values: DVector<f64>) -> Result<Self> {
        if base_dim == 0 {
            return Err(Error::InvalidParameter("base_dim must be positive".into()));
        }
        let len = base_dim * (order + 1);
        if values.len() != len {
            return Err(mismatch("generalized vector", len, values.len()));
        }
        Ok(Self {
            base_dim,
            order,
            values,
        })
    }

    pub fn zeros(base_dim: usize, order: usize) -> Self {
        Self {
            base_dim,
            order,
            values: DVector::zeros(base_dim * (order + 1)),
        }
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    /// The k-th derivative block.
    pub fn block(&self, k: usize) -> DVector<f64> {
        self.values.rows(k * self.base_dim, self.base_dim).into_owned()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessSpec {
    pub kernel_width: f64,
    pub order: usize,
}

impl SmoothnessSpec {
    pub fn new(kernel_width: f64, order: usize) -> Result<Self> {
        if !(kernel_width > 0.0) || !kernel_width.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kernel width must be positive, got {kernel_width}"
            )));
        }
        Ok(Self {
            kernel_width,
            order,
        })
    }
}

/// Temporal precision S over the derivative blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalPrecision {
    matrix: DMatrix<f64>,
}

impl TemporalPrecision {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn order(&self) -> usize {
        self.matrix.nrows() - 1
    }

    /// Identity temporal precision; useful for white-noise models and tests.
    pub fn identity(order: usize) -> Self {
        Self {
            matrix: DMatrix::identity(order + 1, order + 1),
        }
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(mismatch(
                "temporal precision",
                "non-empty square",
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        Ok(Self { matrix })
    }

    /// ln|S| via Cholesky.
    pub fn ln_det(&self) -> Result<f64> {
        ln_det_spd(&self.matrix)
    }
}

/// Block-superdiagonal shift D of size n(p+1).
pub fn derivative_operator(base_dim: usize, order: usize) -> DMatrix<f64> {
    let k = order + 1;
    let shift = DMatrix::from_fn(k, k, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    shift.kronecker(&DMatrix::<f64>::identity(base_dim, base_dim))
}

/// Smoothness matrix for a Gaussian kernel of width s, orders up to 6.
pub fn smoothness_matrix(spec: SmoothnessSpec) -> Result<TemporalPrecision> {
    if spec.order > MAX_SMOOTHNESS_ORDER {
        return Err(Error::UnsupportedOrder(spec.order));
    }
    let s = spec.kernel_width;
    let s2 = s * s;
    let s4 = s2 * s2;
    let s6 = s4 * s2;
    let s8 = s6 * s2;
    let s10 = s8 * s2;
    let s12 = s10 * s2;
    #[rustfmt::skip]
    let full: [[f64; 7]; 7] = [
        [35.0 / 16.0,       0.0,               35.0 / 8.0 * s2,   0.0,              7.0 / 4.0 * s4,    0.0,               s6 / 6.0],
        [0.0,               35.0 / 4.0 * s2,   0.0,               7.0 * s4,         0.0,               s6,                0.0],
        [35.0 / 8.0 * s2,   0.0,               77.0 / 4.0 * s4,   0.0,              19.0 / 2.0 * s6,   0.0,               s8],
        [0.0,               7.0 * s4,          0.0,               8.0 * s6,         0.0,               4.0 / 3.0 * s8,    0.0],
        [7.0 / 4.0 * s4,    0.0,               19.0 / 2.0 * s6,   0.0,              17.0 / 3.0 * s8,   0.0,               2.0 / 3.0 * s10],
        [0.0,               s6,                0.0,               4.0 / 3.0 * s8,   0.0,               4.0 / 15.0 * s10,  0.0],
        [s6 / 6.0,          0.0,               s8,                0.0,              2.0 / 3.0 * s10,   0.0,               4.0 / 45.0 * s12],
    ];
    let k = spec.order + 1;
    Ok(TemporalPrecision {
        matrix: DMatrix::from_fn(k, k, |i, j| full[i][j]),
    })
}

fn check_square(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(mismatch(
            what,
            "non-empty square",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// Block diagonal of the given square blocks.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// blkdiag(S⊗Π^z, S⊗P^u, S⊗Π^w).
pub fn generalized_precision(
    s: &TemporalPrecision,
    sensor_prec: &DMatrix<f64>,
    input_prior_prec: &DMatrix<f64>,
    process_prec: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    generalized_precision_split(s, s, sensor_prec, input_prior_prec, process_prec)
}

/// Same as [`generalized_precision`] with a separate temporal precision for
/// the input block, used when inputs are embedded to a different order.
pub fn generalized_precision_split(
    s: &TemporalPrecision,
    s_input: &TemporalPrecision,
    sensor_prec: &DMatrix<f64>,
    input_prior_prec: &DMatrix<f64>,
    process_prec: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_square("sensor precision", sensor_prec)?;
    check_square("input prior precision", input_prior_prec)?;
    check_square("process precision", process_prec)?;
    let z = s.matrix.kronecker(sensor_prec);
    let u = s_input.matrix.kronecker(input_prior_prec);
    let w = s.matrix.kronecker(process_prec);
    Ok(block_diag(&[&z, &u, &w]))
}

/// ln|M| for a symmetric positive definite M.
pub fn ln_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("matrix is not positive definite".into()))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Inverse of the Taylor map from derivatives at `center` to the samples
/// at `offsets` (in steps of dt).
fn taylor_inverse(offsets: &[f64], dt: f64) -> Result<DMatrix<f64>> {
    let k = offsets.len();
    let t = DMatrix::from_fn(k, k, |j, c| (offsets[j] * dt).powi(c as i32) / factorial(c));
    t.try_inverse()
        .ok_or_else(|| Error::Degenerate("singular Taylor matrix".into()))
}

/// Derivative estimates of `samples` (rows are time) at `center_index`
/// using the p+1 samples centered on it.
pub fn embed_series(
    samples: &DMatrix<f64>,
    dt: f64,
    center_index: usize,
    order: usize,
) -> Result<GeneralizedVector> {
    let nt = samples.nrows();
    let lo = order / 2;
    let hi = order - lo;
    if center_index < lo || center_index + hi >= nt {
        return Err(Error::Boundary {
            center: center_index,
            order,
            len: nt,
        });
    }
    let emb = Embedder::new(order, dt)?;
    Ok(emb.embed_window(samples, center_index - lo, center_index))
}

/// Precomputed Taylor inverses for embedding every sample of a series.
/// Near the ends the window is shifted inward so it always holds p+1 samples.
#[derive(Clone, Debug)]
pub struct Embedder {
    order: usize,
    dt: f64,
    // indexed by the position of the center inside the window
    inverses: Vec<DMatrix<f64>>,
}

impl Embedder {
    pub fn new(order: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let inverses = (0..=order)
            .map(|c| {
                let offsets: Vec<f64> = (0..=order).map(|j| j as f64 - c as f64).collect();
                taylor_inverse(&offsets, dt)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            order,
            dt,
            inverses,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn embed_window(&self, samples: &DMatrix<f64>, start: usize, center: usize) -> GeneralizedVector {
        let dim = samples.ncols();
        let k = self.order + 1;
        let tinv = &self.inverses[center - start];
        let window = samples.rows(start, k);
        // derivs: k x dim, row c = c-th derivative
        let derivs = tinv * window;
        let values = DVector::from_fn(k * dim, |idx, _| derivs[(idx / dim, idx % dim)]);
        GeneralizedVector {
            base_dim: dim,
            order: self.order,
            values,
        }
    }

    /// Embeds every sample; fails only if the series is shorter than p+1.
    pub fn embed_all(&self, samples: &DMatrix<f64>) -> Result<Vec<GeneralizedVector>> {
        let nt = samples.nrows();
        let k = self.order + 1;
        if nt < k {
            return Err(Error::Boundary {
                center: 0,
                order: self.order,
                len: nt,
            });
        }
        let lo = self.order / 2;
        Ok((0..nt)
            .map(|t| {
                let start = t.saturating_sub(lo).min(nt - k);
                self.embed_window(samples, start, t)
            })
            .collect())
    }
}

/// Unit-L2 Gaussian kernel exp(-tau^2 / 2s^2) sampled at dt, truncated at
/// ±KERNEL_SUPPORT·s.
pub fn gaussian_kernel(dt: f64, s: f64) -> Vec<f64> {
    let half = (KERNEL_SUPPORT * s / dt).ceil() as i64;
    let mut k: Vec<f64> = (-half..=half)
        .map(|j| {
            let tau = j as f64 * dt;
            (-tau * tau / (2.0 * s * s)).exp()
        })
        .collect();
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    k.iter_mut().for_each(|v| *v /= norm);
    k
}

/// Colored noise drawn from `rng`: white Gaussian samples convolved with a
/// unit-L2 Gaussian kernel so the marginal standard deviation is `std_dev`.
/// `kernel_width == 0` gives white noise. Rows are time.
pub fn colored_noise_from<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n_samples: usize,
    dt: f64,
    kernel_width: f64,
    std_dev: f64,
    dim: usize,
) -> DMatrix<f64> {
    if kernel_width <= 0.0 {
        let mut out = DMatrix::zeros(n_samples, dim);
        for j in 0..dim {
            for t in 0..n_samples {
                let v: f64 = StandardNormal.sample(rng);
                out[(t, j)] = v * std_dev;
            }
        }
        return out;
    }
    let kernel = gaussian_kernel(dt, kernel_width);
    let pad = kernel.len() - 1;
    let mut out = DMatrix::zeros(n_samples, dim);
    for j in 0..dim {
        let white: Vec<f64> = (0..n_samples + pad)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        for t in 0..n_samples {
            let acc: f64 = kernel
                .iter()
                .zip(&white[t..t + kernel.len()])
                .map(|(k, w)| k * w)
                .sum();
            out[(t, j)] = acc * std_dev;
        }
    }
    out
}

/// Seeded colored noise, see [`colored_noise_from`].
pub fn colored_noise(
    seed: u64,
    n_samples: usize,
    dt: f64,
    kernel_width: f64,
    std_dev: f64,
    dim: usize,
) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    colored_noise_from(&mut rng, n_samples, dt, kernel_width, std_dev, dim)
}
