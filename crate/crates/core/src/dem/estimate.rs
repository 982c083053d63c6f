use nalgebra::{DMatrix, DVector, Vector2};

use super::model::{EmbeddedData, GenerativeModel, InputMode};
use super::problem::{robust_cholesky, Problem};
use crate::error::{mismatch, Result};

/// Per-step conditional means with their shared covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct StateEstimate {
    pub x: Vec<DVector<f64>>,
    pub sigma_x: DMatrix<f64>,
    pub warnings: Vec<String>,
    n: usize,
    r: usize,
    x_len: usize,
    input_estimated: bool,
}

impl StateEstimate {
    /// Zeroth-order state estimates, rows are time.
    pub fn states(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.x.len(), self.n, |t, i| self.x[t][i])
    }

    /// Zeroth-order input estimates; `None` when inputs were known.
    pub fn inputs(&self) -> Option<DMatrix<f64>> {
        self.input_estimated
            .then(|| DMatrix::from_fn(self.x.len(), self.r, |t, j| self.x[t][self.x_len + j]))
    }
}

/// Maximizes the precision-weighted prediction error per time step for
/// fixed θ and λ.
pub fn estimate_states(
    model: &GenerativeModel,
    data: &EmbeddedData,
    theta: &DVector<f64>,
    lambda: &Vector2<f64>,
) -> Result<StateEstimate> {
    let pb = Problem::new(model, data)?;
    if theta.len() != model.layout.len() {
        return Err(mismatch("theta", model.layout.len(), theta.len()));
    }
    let g = pb.gen(theta);
    let ex = pb.jac_x(&g);
    let w = pb.precision(lambda);
    let m = pb.state_curvature(&ex).total(lambda);
    let (chol, regularized) = robust_cholesky(&m)?;
    let mut warnings = Vec::new();
    if regularized {
        warnings.push("state curvature was singular; solved with a diagonal ridge".to_string());
    }
    let x = pb.solve_states(&g, &ex, &w, &chol, true);
    Ok(StateEstimate {
        x,
        sigma_x: chol.inverse(),
        warnings,
        n: model.layout.n,
        r: model.layout.r,
        x_len: model.x_len(),
        input_estimated: model.input_mode == InputMode::Estimated,
    })
}
