use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::model::{EmbeddedData, GenerativeModel};
use super::problem::Problem;
use crate::error::{mismatch, Error, Result};
use crate::gencoords::ln_det_spd;

/// Labeled terms of the time-integrated free energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeEnergyBreakdown {
    pub weighted_pe_y: f64,
    pub weighted_pe_u: f64,
    pub weighted_pe_x: f64,
    pub param_pe: f64,
    pub hyper_pe: f64,
    pub state_entropy: f64,
    pub noise_entropy: f64,
    pub param_entropy: f64,
    pub hyper_entropy: f64,
    pub total: f64,
}

impl FreeEnergyBreakdown {
    #[allow(clippy::too_many_arguments)]
    pub fn from_terms(
        weighted_pe_y: f64,
        weighted_pe_u: f64,
        weighted_pe_x: f64,
        param_pe: f64,
        hyper_pe: f64,
        state_entropy: f64,
        noise_entropy: f64,
        param_entropy: f64,
        hyper_entropy: f64,
    ) -> Self {
        let total = weighted_pe_y
            + weighted_pe_u
            + weighted_pe_x
            + param_pe
            + hyper_pe
            + state_entropy
            + noise_entropy
            + param_entropy
            + hyper_entropy;
        Self {
            weighted_pe_y,
            weighted_pe_u,
            weighted_pe_x,
            param_pe,
            hyper_pe,
            state_entropy,
            noise_entropy,
            param_entropy,
            hyper_entropy,
            total,
        }
    }

    pub const FIELD_NAMES: [&'static str; 10] = [
        "pe_y",
        "pe_u",
        "pe_x",
        "pe_theta",
        "pe_lambda",
        "h_states",
        "h_noise",
        "h_theta",
        "h_lambda",
        "F",
    ];

    pub fn as_array(&self) -> [f64; 10] {
        [
            self.weighted_pe_y,
            self.weighted_pe_u,
            self.weighted_pe_x,
            self.param_pe,
            self.hyper_pe,
            self.state_entropy,
            self.noise_entropy,
            self.param_entropy,
            self.hyper_entropy,
            self.total,
        ]
    }
}

/// Conditional means and covariances. Σ^X is shared by every time step
/// because the per-step curvature does not depend on the data.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    /// Per-step X = [x̃; ũ] (ũ only when inputs are estimated).
    pub x: Vec<DVector<f64>>,
    pub sigma_x: DMatrix<f64>,
    pub theta: DVector<f64>,
    /// Π^θ, includes the prior precision.
    pub theta_prec: DMatrix<f64>,
    pub theta_cov: DMatrix<f64>,
    pub lambda: Vector2<f64>,
    pub lambda_cov: Matrix2<f64>,
    pub fe_trace: Vec<f64>,
}

fn ln_det_checked(what: &str, m: &DMatrix<f64>) -> Result<f64> {
    ln_det_spd(m).map_err(|_| Error::Degenerate(format!("{what} is not positive definite")))
}

/// Evaluates every term of the free energy at the given posterior.
pub fn free_energy(model: &GenerativeModel, posterior: &Posterior, data: &EmbeddedData) -> Result<FreeEnergyBreakdown> {
    let pb = Problem::new(model, data)?;
    if posterior.x.len() != data.len() {
        return Err(mismatch("posterior length", data.len(), posterior.x.len()));
    }
    if let Some(v) = posterior.x.iter().find(|v| v.len() != pb.big_n) {
        return Err(mismatch("posterior state", pb.big_n, v.len()));
    }
    if posterior.theta.len() != model.layout.len() {
        return Err(mismatch("theta", model.layout.len(), posterior.theta.len()));
    }
    if posterior.sigma_x.nrows() != pb.big_n || posterior.sigma_x.ncols() != pb.big_n {
        return Err(mismatch("Sigma^X", pb.big_n, posterior.sigma_x.nrows()));
    }
    let asm = pb.assemble(&posterior.theta, &posterior.x);
    let lx = ln_det_checked("Sigma^X", &posterior.sigma_x)?;
    let lt = ln_det_checked("Sigma^theta", &posterior.theta_cov)?;
    let lam_cov = DMatrix::from_column_slice(2, 2, posterior.lambda_cov.as_slice());
    let ll = ln_det_checked("Sigma^lambda", &lam_cov)?;
    Ok(pb.combine(&asm, &posterior.theta, &posterior.lambda, lx, lt, ll))
}

/// Gradient of the free energy w.r.t. θ with every other posterior field
/// held fixed.
pub fn theta_gradient(model: &GenerativeModel, posterior: &Posterior, data: &EmbeddedData) -> Result<DVector<f64>> {
    let pb = Problem::new(model, data)?;
    let g = pb.gen(&posterior.theta);
    let w = pb.precision(&posterior.lambda);
    let mut grad = -(model.theta_prior_prec.component_mul(&(&posterior.theta - &model.theta_prior)));
    for (t, x) in posterior.x.iter().enumerate() {
        let e = pb.residual(&g, x, t);
        let jt = pb.jac_theta(x, t);
        grad -= jt.transpose() * (&w * e);
    }
    Ok(grad)
}

/// Parameter precision and whether it had to be projected onto the PSD cone.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterPrecision {
    pub matrix: DMatrix<f64>,
    pub projected: bool,
}

/// Π^θ = -∂²F/∂θ² at the posterior mean, other posterior fields fixed.
pub fn learn_parameter_precision(
    model: &GenerativeModel,
    posterior: &Posterior,
    data: &EmbeddedData,
) -> Result<ParameterPrecision> {
    let pb = Problem::new(model, data)?;
    let asm = pb.assemble(&posterior.theta, &posterior.x);
    let h = pb.theta_precision(&asm, &posterior.lambda);
    Ok(nearest_psd(h))
}

/// Symmetrizes and clips negative eigenvalues to zero.
pub fn nearest_psd(h: DMatrix<f64>) -> ParameterPrecision {
    let sym = (&h + h.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|v| *v >= 0.0) {
        return ParameterPrecision {
            matrix: sym,
            projected: false,
        };
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let matrix = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    ParameterPrecision {
        matrix,
        projected: true,
    }
}
