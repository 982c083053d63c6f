//! Free-energy estimation over generalized coordinates: state and input
//! estimation, parameter and noise-precision learning, and the free-energy
//! bookkeeping shared by both.

mod estimate;
mod free_energy;
mod learn;
mod model;
mod problem;

pub use estimate::{estimate_states, StateEstimate};
pub use free_energy::{
    free_energy, learn_parameter_precision, nearest_psd, theta_gradient, FreeEnergyBreakdown, ParameterPrecision,
    Posterior,
};
pub use learn::{learn_parameters, IterationRecord, LearnResult, LearnSchedule};
pub use model::{EmbeddedData, GenerativeModel, InputMode, TemporalKind, ThetaLayout};

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::Result;

/// Stacked prediction error [ε^y; ε^u; ε^x] for one time step. `u` is the
/// generalized input and `eta_u` its prior mean; in known-input mode the
/// input block is omitted and `eta_u` is ignored.
pub fn prediction_errors(
    model: &GenerativeModel,
    theta: &DVector<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
    eta_u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (big_x, prior) = match model.input_mode {
        InputMode::Known => (x.clone(), u.clone()),
        InputMode::Estimated => {
            let mut v = DVector::zeros(x.len() + u.len());
            v.rows_mut(0, x.len()).copy_from(x);
            v.rows_mut(x.len(), u.len()).copy_from(u);
            (v, eta_u.clone())
        }
    };
    let data = EmbeddedData {
        dt: 1.0,
        y: vec![y.clone()],
        u: vec![prior],
    };
    let pb = problem::Problem::new(model, &data)?;
    if big_x.len() != pb.big_n {
        return Err(crate::error::mismatch("generalized state", pb.big_n, big_x.len()));
    }
    Ok(pb.residual(&pb.gen(theta), &big_x, 0))
}

/// Π^z = e^λz I_m, Π^w = e^λw I_n.
pub fn noise_precision_from_lambda(lambda: &Vector2<f64>, n: usize, m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::identity(m, m) * lambda[0].exp(),
        DMatrix::identity(n, n) * lambda[1].exp(),
    )
}
