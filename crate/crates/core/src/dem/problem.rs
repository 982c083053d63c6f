//! Per-step generalized prediction errors, their Jacobians and the
//! precision-weighted sums shared by estimation and learning.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2, Vector2};

use super::free_energy::FreeEnergyBreakdown;
use super::model::{EmbeddedData, GenerativeModel, InputMode};
use crate::error::{Error, Result};
use crate::gencoords::{derivative_operator, ln_det_spd};

/// Generalized plant matrices: D - Ã, B̃ and C̃.
pub(crate) struct GenMats {
    pub dma: DMatrix<f64>,
    pub bt: DMatrix<f64>,
    pub ct: DMatrix<f64>,
}

/// Sums over time of block-wise weighted residuals and θ-curvatures, with
/// the noise precisions factored out as e^λ.
pub(crate) struct Assembly {
    pub q_y: f64,
    pub q_u: f64,
    pub q_x: f64,
    pub h_z: DMatrix<f64>,
    pub h_w: DMatrix<f64>,
}

/// State curvature M = e^λz M_z + M_u + e^λw M_w.
pub(crate) struct StateCurvature {
    pub m_z: DMatrix<f64>,
    pub m_u: DMatrix<f64>,
    pub m_w: DMatrix<f64>,
}

impl StateCurvature {
    pub fn total(&self, lambda: &Vector2<f64>) -> DMatrix<f64> {
        &self.m_z * lambda[0].exp() + &self.m_u + &self.m_w * lambda[1].exp()
    }
}

/// Everything evaluated at the conditional state optimum for given (θ, λ).
pub(crate) struct Profiled {
    pub xs: Vec<DVector<f64>>,
    pub sigma_x: DMatrix<f64>,
    pub curvature: StateCurvature,
    pub m_chol: Cholesky<f64, Dyn>,
    pub asm: Assembly,
    pub theta_prec: DMatrix<f64>,
    pub lambda_prec: Matrix2<f64>,
    pub fe: FreeEnergyBreakdown,
    pub regularized: bool,
}

pub(crate) struct Problem<'a> {
    pub model: &'a GenerativeModel,
    pub data: &'a EmbeddedData,
    wz0: DMatrix<f64>,
    ww0: DMatrix<f64>,
    wu: DMatrix<f64>,
    ln_det_s: f64,
    ln_det_input_block: f64,
    pub ny: usize,
    pub nu: usize,
    pub nx: usize,
    pub ou: usize,
    pub ox: usize,
    pub big_n: usize,
    pub eps_len: usize,
}

/// Cholesky with a diagonal ridge fallback; the flag reports regularization.
pub(crate) fn robust_cholesky(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, bool)> {
    if let Some(c) = m.clone().cholesky() {
        return Ok((c, false));
    }
    let scale = m.diagonal().abs().max().max(1e-300);
    let mut ridge = scale * 1e-12;
    for _ in 0..12 {
        let shifted = m + DMatrix::identity(m.nrows(), m.ncols()) * ridge;
        if let Some(c) = shifted.cholesky() {
            return Ok((c, true));
        }
        ridge *= 10.0;
    }
    Err(Error::Degenerate("curvature is not positive definite".into()))
}

/// Gradient and Hessian of ln|A0 + e^λz Az + e^λw Aw| w.r.t. λ, given the
/// inverse of the full matrix.
fn ln_det_exp_derivs(inv: &DMatrix<f64>, parts: [&DMatrix<f64>; 2], lambda: &Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
    let ka: Vec<DMatrix<f64>> = parts.iter().map(|p| inv * *p).collect();
    let mut g = Vector2::zeros();
    let mut h = Matrix2::zeros();
    for i in 0..2 {
        g[i] = lambda[i].exp() * ka[i].trace();
    }
    for i in 0..2 {
        for j in 0..2 {
            let cross = (lambda[i] + lambda[j]).exp() * (&ka[i] * &ka[j]).trace();
            h[(i, j)] = if i == j { g[i] } else { 0.0 } - cross;
        }
    }
    (g, h)
}

impl<'a> Problem<'a> {
    pub fn new(model: &'a GenerativeModel, data: &'a EmbeddedData) -> Result<Self> {
        model.validate()?;
        data.check(model)?;
        let l = model.layout;
        let p = model.state_order;
        let s = model.temporal.matrix(p)?;
        let ln_det_s = s.ln_det()?;
        let wz0 = s.matrix().kronecker(&DMatrix::<f64>::identity(l.m, l.m));
        let ww0 = s.matrix().kronecker(&DMatrix::<f64>::identity(l.n, l.n));
        let (wu, ln_det_input_block) = match model.input_mode {
            InputMode::Known => (DMatrix::zeros(0, 0), 0.0),
            InputMode::Estimated => {
                let su = model.temporal.matrix(model.input_order)?;
                let w = su.matrix().kronecker(&model.input_prior_prec);
                let ld = l.r as f64 * su.ln_det()? + (model.input_order + 1) as f64 * ln_det_spd(&model.input_prior_prec)?;
                (w, ld)
            }
        };
        let ny = model.y_len();
        let nx = model.x_len();
        let nu = match model.input_mode {
            InputMode::Known => 0,
            InputMode::Estimated => model.u_len(),
        };
        Ok(Self {
            model,
            data,
            wz0,
            ww0,
            wu,
            ln_det_s,
            ln_det_input_block,
            ny,
            nu,
            nx,
            ou: ny,
            ox: ny + nu,
            big_n: model.big_x_len(),
            eps_len: model.eps_len(),
        })
    }

    pub fn n_t(&self) -> usize {
        self.data.len()
    }

    pub fn gen(&self, theta: &DVector<f64>) -> GenMats {
        let l = self.model.layout;
        let p = self.model.state_order;
        let d = self.model.input_order;
        let (a, b, c) = l.unvectorize(theta);
        let eye = DMatrix::<f64>::identity(p + 1, p + 1);
        let dma = derivative_operator(l.n, p) - eye.kronecker(&a);
        let sel = DMatrix::from_fn(p + 1, d + 1, |i, j| if i == j { 1.0 } else { 0.0 });
        let bt = sel.kronecker(&b);
        let ct = eye.kronecker(&c);
        GenMats { dma, bt, ct }
    }

    /// ∂ε/∂X, constant in X.
    pub fn jac_x(&self, g: &GenMats) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.eps_len, self.big_n);
        e.view_mut((0, 0), (self.ny, self.nx)).copy_from(&(-&g.ct));
        if self.nu > 0 {
            e.view_mut((self.ou, self.nx), (self.nu, self.nu)).fill_with_identity();
            e.view_mut((self.ox, self.nx), (self.nx, self.nu)).copy_from(&(-&g.bt));
        }
        e.view_mut((self.ox, 0), (self.nx, self.nx)).copy_from(&g.dma);
        e
    }

    fn input_of<'b>(&'b self, x: &'b DVector<f64>, t: usize) -> DVector<f64> {
        match self.model.input_mode {
            InputMode::Known => self.data.u[t].clone(),
            InputMode::Estimated => x.rows(self.nx, self.nu).into_owned(),
        }
    }

    /// ε = [ỹ - C̃x̃; ũ - η̃^u; (D - Ã)x̃ - B̃ũ].
    pub fn residual(&self, g: &GenMats, x: &DVector<f64>, t: usize) -> DVector<f64> {
        let xt = x.rows(0, self.nx);
        let ut = self.input_of(x, t);
        let mut e = DVector::zeros(self.eps_len);
        e.rows_mut(0, self.ny).copy_from(&(&self.data.y[t] - &g.ct * xt));
        if self.nu > 0 {
            e.rows_mut(self.ou, self.nu).copy_from(&(&ut - &self.data.u[t]));
        }
        e.rows_mut(self.ox, self.nx).copy_from(&(&g.dma * xt - &g.bt * &ut));
        e
    }

    /// ∂ε/∂θ at a given X; ε is linear in θ for fixed X.
    pub fn jac_theta(&self, x: &DVector<f64>, t: usize) -> DMatrix<f64> {
        let l = self.model.layout;
        let p = self.model.state_order;
        let d = self.model.input_order;
        let ut = self.input_of(x, t);
        let mut e = DMatrix::zeros(self.eps_len, l.len());
        for k in 0..=p {
            for i in 0..l.n {
                let row = self.ox + k * l.n + i;
                for j in 0..l.n {
                    e[(row, l.a(i, j))] = -x[k * l.n + j];
                }
                if k <= d {
                    for j in 0..l.r {
                        e[(row, l.b(i, j))] = -ut[k * l.r + j];
                    }
                }
            }
            for i in 0..l.m {
                let row = k * l.m + i;
                for j in 0..l.n {
                    e[(row, l.c(i, j))] = -x[k * l.n + j];
                }
            }
        }
        e
    }

    /// Π̃ for the stacked error.
    pub fn precision(&self, lambda: &Vector2<f64>) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.eps_len, self.eps_len);
        w.view_mut((0, 0), (self.ny, self.ny)).copy_from(&(&self.wz0 * lambda[0].exp()));
        if self.nu > 0 {
            w.view_mut((self.ou, self.ou), (self.nu, self.nu)).copy_from(&self.wu);
        }
        w.view_mut((self.ox, self.ox), (self.nx, self.nx)).copy_from(&(&self.ww0 * lambda[1].exp()));
        w
    }

    /// ln|Π̃|.
    pub fn ln_det_precision(&self, lambda: &Vector2<f64>) -> f64 {
        let l = self.model.layout;
        let k = (self.model.state_order + 1) as f64;
        let z = l.m as f64 * self.ln_det_s + k * l.m as f64 * lambda[0];
        let w = l.n as f64 * self.ln_det_s + k * l.n as f64 * lambda[1];
        z + self.ln_det_input_block + w
    }

    pub fn state_curvature(&self, ex: &DMatrix<f64>) -> StateCurvature {
        let ey = ex.rows(0, self.ny);
        let exx = ex.rows(self.ox, self.nx);
        let m_z = ey.transpose() * &self.wz0 * ey;
        let m_w = exx.transpose() * &self.ww0 * exx;
        let m_u = if self.nu > 0 {
            let eu = ex.rows(self.ou, self.nu);
            eu.transpose() * &self.wu * eu
        } else {
            DMatrix::zeros(self.big_n, self.big_n)
        };
        StateCurvature { m_z, m_u, m_w }
    }

    pub fn assemble(&self, theta: &DVector<f64>, xs: &[DVector<f64>]) -> Assembly {
        let g = self.gen(theta);
        let k = self.model.layout.len();
        let mut asm = Assembly {
            q_y: 0.0,
            q_u: 0.0,
            q_x: 0.0,
            h_z: DMatrix::zeros(k, k),
            h_w: DMatrix::zeros(k, k),
        };
        for (t, x) in xs.iter().enumerate() {
            let e = self.residual(&g, x, t);
            let ey = e.rows(0, self.ny);
            let exx = e.rows(self.ox, self.nx);
            asm.q_y += (ey.transpose() * &self.wz0 * ey)[(0, 0)];
            asm.q_x += (exx.transpose() * &self.ww0 * exx)[(0, 0)];
            if self.nu > 0 {
                let eu = e.rows(self.ou, self.nu);
                asm.q_u += (eu.transpose() * &self.wu * eu)[(0, 0)];
            }
            let jt = self.jac_theta(x, t);
            let jy = jt.rows(0, self.ny);
            let jx = jt.rows(self.ox, self.nx);
            asm.h_z += jy.transpose() * &self.wz0 * jy;
            asm.h_w += jx.transpose() * &self.ww0 * jx;
        }
        asm
    }

    pub fn theta_precision(&self, asm: &Assembly, lambda: &Vector2<f64>) -> DMatrix<f64> {
        &asm.h_z * lambda[0].exp() + &asm.h_w * lambda[1].exp() + DMatrix::from_diagonal(&self.model.theta_prior_prec)
    }

    pub fn lambda_precision(&self, asm: &Assembly, lambda: &Vector2<f64>) -> Matrix2<f64> {
        let pl = self.model.lambda_prior_prec;
        Matrix2::new(0.5 * lambda[0].exp() * asm.q_y + pl[0], 0.0, 0.0, 0.5 * lambda[1].exp() * asm.q_x + pl[1])
    }

    /// Free-energy terms given the log-determinants of the three posterior
    /// covariances.
    pub fn combine(
        &self,
        asm: &Assembly,
        theta: &DVector<f64>,
        lambda: &Vector2<f64>,
        ln_det_sigma_x: f64,
        ln_det_sigma_theta: f64,
        ln_det_sigma_lambda: f64,
    ) -> FreeEnergyBreakdown {
        let m = self.model;
        let nt = self.n_t() as f64;
        let eth = theta - &m.theta_prior;
        let param_pe = -0.5 * eth.iter().zip(m.theta_prior_prec.iter()).map(|(e, p)| p * e * e).sum::<f64>();
        let el = lambda - m.lambda_prior;
        let hyper_pe = -0.5 * (m.lambda_prior_prec[0] * el[0] * el[0] + m.lambda_prior_prec[1] * el[1] * el[1]);
        let ln_p_theta: f64 = m.theta_prior_prec.iter().map(|p| p.ln()).sum();
        let ln_p_lambda: f64 = m.lambda_prior_prec.iter().map(|p| p.ln()).sum();
        FreeEnergyBreakdown::from_terms(
            -0.5 * lambda[0].exp() * asm.q_y,
            -0.5 * asm.q_u,
            -0.5 * lambda[1].exp() * asm.q_x,
            param_pe,
            hyper_pe,
            0.5 * nt * ln_det_sigma_x,
            0.5 * nt * self.ln_det_precision(lambda),
            0.5 * (ln_det_sigma_theta + ln_p_theta),
            0.5 * (ln_det_sigma_lambda + ln_p_lambda),
        )
    }

    /// Conditional state means for fixed (θ, λ). With `warm` set, each step
    /// starts from the previous step's estimate propagated by the derivative
    /// shift and takes one Gauss-Newton step, which is exact for this
    /// linear-Gaussian problem.
    pub fn solve_states(
        &self,
        g: &GenMats,
        ex: &DMatrix<f64>,
        w: &DMatrix<f64>,
        m_chol: &Cholesky<f64, Dyn>,
        warm: bool,
    ) -> Vec<DVector<f64>> {
        let wex_t = ex.transpose() * w;
        let shift = if warm {
            let p = self.model.state_order;
            let mut s = DMatrix::identity(self.big_n, self.big_n);
            let dx = derivative_operator(self.model.layout.n, p) * self.data.dt;
            let mut view = s.view_mut((0, 0), (self.nx, self.nx));
            view += dx;
            if self.nu > 0 {
                let du = derivative_operator(self.model.layout.r, self.model.input_order) * self.data.dt;
                let mut view = s.view_mut((self.nx, self.nx), (self.nu, self.nu));
                view += du;
            }
            Some(s)
        } else {
            None
        };
        let mut xs: Vec<DVector<f64>> = Vec::with_capacity(self.n_t());
        for t in 0..self.n_t() {
            let x0 = match (&shift, xs.last()) {
                (Some(s), Some(prev)) => s * prev,
                _ => DVector::zeros(self.big_n),
            };
            let e0 = self.residual(g, &x0, t);
            let step = m_chol.solve(&(&wex_t * e0));
            xs.push(x0 - step);
        }
        xs
    }

    /// States at their conditional optimum and the free energy with all
    /// covariances at their Laplace values.
    pub fn profile(&self, theta: &DVector<f64>, lambda: &Vector2<f64>, warm: bool) -> Result<Profiled> {
        let g = self.gen(theta);
        let ex = self.jac_x(&g);
        let w = self.precision(lambda);
        let curvature = self.state_curvature(&ex);
        let m = curvature.total(lambda);
        let (m_chol, regularized) = robust_cholesky(&m)?;
        let xs = self.solve_states(&g, &ex, &w, &m_chol, warm);
        let sigma_x = m_chol.inverse();
        let ln_det_m = 2.0 * m_chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let asm = self.assemble(theta, &xs);
        let theta_prec = self.theta_precision(&asm, lambda);
        let ln_det_theta_prec = ln_det_spd(&theta_prec)?;
        let lambda_prec = self.lambda_precision(&asm, lambda);
        let ln_det_lambda_prec = lambda_prec.determinant().ln();
        let fe = self.combine(&asm, theta, lambda, -ln_det_m, -ln_det_theta_prec, -ln_det_lambda_prec);
        if !fe.total.is_finite() {
            return Err(Error::Degenerate("free energy is not finite".into()));
        }
        Ok(Profiled {
            xs,
            sigma_x,
            curvature,
            m_chol,
            asm,
            theta_prec,
            lambda_prec,
            fe,
            regularized,
        })
    }

    /// Gradient and Hessian of the free energy w.r.t. λ with states and θ
    /// held at the profiled values.
    pub fn lambda_derivatives(&self, prof: &Profiled, lambda: &Vector2<f64>) -> Result<(Vector2<f64>, Matrix2<f64>)> {
        let m = self.model;
        let l = m.layout;
        let nt = self.n_t() as f64;
        let k = (m.state_order + 1) as f64;
        let e = Vector2::new(lambda[0].exp(), lambda[1].exp());
        let q = Vector2::new(prof.asm.q_y, prof.asm.q_x);
        let mut g = Vector2::new(-0.5 * e[0] * q[0], -0.5 * e[1] * q[1]);
        let mut h = Matrix2::new(g[0], 0.0, 0.0, g[1]);

        g[0] += 0.5 * nt * k * l.m as f64;
        g[1] += 0.5 * nt * k * l.n as f64;

        let pl = m.lambda_prior_prec;
        g -= pl.component_mul(&(lambda - m.lambda_prior));
        h -= Matrix2::from_diagonal(&pl);

        let (gs, hs) = ln_det_exp_derivs(&prof.sigma_x, [&prof.curvature.m_z, &prof.curvature.m_w], lambda);
        g -= gs * (0.5 * nt);
        h -= hs * (0.5 * nt);

        let theta_cov = prof
            .theta_prec
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Degenerate("parameter precision is not positive definite".into()))?
            .inverse();
        let (gp, hp) = ln_det_exp_derivs(&theta_cov, [&prof.asm.h_z, &prof.asm.h_w], lambda);
        g -= gp * 0.5;
        h -= hp * 0.5;

        for i in 0..2 {
            let a = 0.5 * e[i] * q[i];
            let ratio = a / (a + pl[i]);
            g[i] -= 0.5 * ratio;
            h[(i, i)] -= 0.5 * (ratio - ratio * ratio);
        }
        Ok((g, h))
    }

    /// Gauss-Newton step for the free entries of θ with the states profiled
    /// out (Schur complement of the joint curvature). Returns the full-length
    /// step and the gradient restricted to the free entries.
    pub fn theta_step(
        &self,
        theta: &DVector<f64>,
        lambda: &Vector2<f64>,
        prof: &Profiled,
        free: &[usize],
    ) -> Result<(DVector<f64>, DVector<f64>, bool)> {
        let nf = free.len();
        let g = self.gen(theta);
        let ex = self.jac_x(&g);
        let w = self.precision(lambda);
        let wex = &w * &ex;
        let mut hff = DMatrix::zeros(nf, nf);
        let mut schur = DMatrix::zeros(nf, nf);
        let mut grad = DVector::zeros(nf);
        let l = prof.m_chol.l();
        for (t, x) in prof.xs.iter().enumerate() {
            let e = self.residual(&g, x, t);
            let jt = self.jac_theta(x, t);
            let gt = jt.select_columns(free);
            let wg = &w * &gt;
            hff += gt.transpose() * &wg;
            grad -= wg.transpose() * &e;
            let kt = wex.transpose() * &gt;
            let z = l
                .solve_lower_triangular(&kt)
                .ok_or_else(|| Error::Degenerate("singular state curvature".into()))?;
            schur += z.transpose() * z;
        }
        for (a, &i) in free.iter().enumerate() {
            let p = self.model.theta_prior_prec[i];
            hff[(a, a)] += p;
            grad[a] -= p * (theta[i] - self.model.theta_prior[i]);
        }
        let hs = hff - schur;
        let hs = (&hs + hs.transpose()) * 0.5;
        let (chol, regularized) = robust_cholesky(&hs)?;
        let step_free = chol.solve(&grad);
        let mut step = DVector::zeros(theta.len());
        for (a, &i) in free.iter().enumerate() {
            step[i] = step_free[a];
        }
        Ok((step, grad, regularized))
    }
}
