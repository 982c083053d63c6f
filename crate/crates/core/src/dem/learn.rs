//! Parameter and noise-precision learning by alternating a profiled
//! Gauss-Newton step on θ with a Newton step on λ, each guarded by a
//! step-halving line search on the free energy.

use nalgebra::{DVector, Matrix2, SymmetricEigen, Vector2};

use super::free_energy::{FreeEnergyBreakdown, Posterior};
use super::model::{EmbeddedData, GenerativeModel};
use super::problem::{Problem, Profiled};
use crate::error::{mismatch, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnSchedule {
    pub max_iterations: usize,
    /// stop once |ΔF| stays below this for `patience` iterations
    pub tolerance: f64,
    pub patience: usize,
    pub max_halvings: usize,
    /// largest |Δλ| component per iteration
    pub lambda_step_max: f64,
    /// floor on the eigenvalues of the negative λ Hessian
    pub lambda_curvature_floor: f64,
}

impl Default for LearnSchedule {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            patience: 3,
            max_halvings: 25,
            lambda_step_max: 2.0,
            lambda_curvature_floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub theta: DVector<f64>,
    pub lambda: Vector2<f64>,
    pub theta_prec_diag: DVector<f64>,
    pub fe: FreeEnergyBreakdown,
    /// accepted step fraction, 0 when the line search found no ascent
    pub theta_step: f64,
    pub lambda_step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnResult {
    pub posterior: Posterior,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl LearnResult {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

fn record(iteration: usize, theta: &DVector<f64>, lambda: &Vector2<f64>, prof: &Profiled, a_th: f64, a_l: f64) -> IterationRecord {
    IterationRecord {
        iteration,
        theta: theta.clone(),
        lambda: *lambda,
        theta_prec_diag: prof.theta_prec.diagonal(),
        fe: prof.fe,
        theta_step: a_th,
        lambda_step: a_l,
    }
}

/// Newton direction for λ from the partial derivatives, with the negative
/// Hessian floored to stay positive definite and the step capped.
fn lambda_direction(g: &Vector2<f64>, h: &Matrix2<f64>, sched: &LearnSchedule) -> Vector2<f64> {
    let neg = -h;
    let neg = (neg + neg.transpose()) * 0.5;
    let eig = SymmetricEigen::new(neg);
    let vals = eig.eigenvalues.map(|v| v.max(sched.lambda_curvature_floor));
    let v = eig.eigenvectors;
    let mut dl = v * (v.transpose() * g).component_div(&vals);
    let big = dl.amax();
    if big > sched.lambda_step_max {
        dl *= sched.lambda_step_max / big;
    }
    dl
}

/// Learns θ (entries flagged unknown) and λ starting from the prior means,
/// or from `init` when given.
pub fn learn_parameters(
    model: &GenerativeModel,
    data: &EmbeddedData,
    schedule: &LearnSchedule,
    init: Option<(DVector<f64>, Vector2<f64>)>,
) -> Result<LearnResult> {
    let pb = Problem::new(model, data)?;
    let free = model.unknown_indices();
    let (mut theta, mut lambda) = init.unwrap_or_else(|| (model.theta_prior.clone(), model.lambda_prior));
    if theta.len() != model.layout.len() {
        return Err(mismatch("initial theta", model.layout.len(), theta.len()));
    }
    let mut warnings = Vec::new();
    let mut prof = pb.profile(&theta, &lambda, false)?;
    let mut fe_trace = vec![prof.fe.total];
    let mut history = vec![record(0, &theta, &lambda, &prof, 0.0, 0.0)];
    let mut quiet = 0;
    let mut converged = false;

    for it in 1..=schedule.max_iterations {
        let f_start = prof.fe.total;

        let mut a_th = 0.0;
        if !free.is_empty() {
            let (step, _, regularized) = pb.theta_step(&theta, &lambda, &prof, &free)?;
            if regularized {
                warnings.push(format!("iteration {it}: parameter curvature regularized"));
            }
            let mut a = 1.0;
            for _ in 0..=schedule.max_halvings {
                let cand = &theta + &step * a;
                match pb.profile(&cand, &lambda, false) {
                    Ok(p) if p.fe.total >= prof.fe.total => {
                        theta = cand;
                        prof = p;
                        a_th = a;
                        break;
                    }
                    Ok(_) | Err(Error::Degenerate(_)) => a *= 0.5,
                    Err(e) => return Err(e),
                }
            }
        }

        let (g, h) = pb.lambda_derivatives(&prof, &lambda)?;
        let dl = lambda_direction(&g, &h, schedule);
        let mut a_l = 0.0;
        if dl.amax() > 0.0 {
            let mut a = 1.0;
            for _ in 0..=schedule.max_halvings {
                let cand = lambda + dl * a;
                match pb.profile(&theta, &cand, false) {
                    Ok(p) if p.fe.total >= prof.fe.total => {
                        // do not step past the maximum along the search ray
                        let (g_new, _) = pb.lambda_derivatives(&p, &cand)?;
                        if g_new.dot(&dl) >= 0.0 {
                            lambda = cand;
                            prof = p;
                            a_l = a;
                            break;
                        }
                        a *= 0.5;
                    }
                    Ok(_) | Err(Error::Degenerate(_)) => a *= 0.5,
                    Err(e) => return Err(e),
                }
            }
        }

        if prof.regularized {
            warnings.push(format!("iteration {it}: state curvature regularized"));
        }
        let f = prof.fe.total;
        if !f.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                detail: "free energy is not finite".into(),
            });
        }
        fe_trace.push(f);
        history.push(record(it, &theta, &lambda, &prof, a_th, a_l));
        if (f - f_start).abs() < schedule.tolerance {
            quiet += 1;
            if quiet >= schedule.patience {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }

    let theta_cov = prof
        .theta_prec
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("parameter precision is not positive definite".into()))?
        .inverse();
    let lambda_cov = prof
        .lambda_prec
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("hyperparameter precision is singular".into()))?;
    let posterior = Posterior {
        x: prof.xs,
        sigma_x: prof.sigma_x,
        theta,
        theta_prec: prof.theta_prec,
        theta_cov,
        lambda,
        lambda_cov,
        fe_trace,
    };
    Ok(LearnResult {
        posterior,
        history,
        converged,
        warnings,
    })
}
