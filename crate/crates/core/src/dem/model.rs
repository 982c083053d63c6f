use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{mismatch, Error, Result};
use crate::gencoords::{smoothness_matrix, Embedder, SmoothnessSpec, TemporalPrecision};
use crate::ltisim::StateSpaceModel;

/// Row-major vectorization of (A, B, C) into θ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThetaLayout {
    pub n: usize,
    pub r: usize,
    pub m: usize,
}

impl ThetaLayout {
    pub fn len(&self) -> usize {
        self.n * self.n + self.n * self.r + self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn a(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    pub fn b(&self, i: usize, j: usize) -> usize {
        self.n * self.n + i * self.r + j
    }

    pub fn c(&self, i: usize, j: usize) -> usize {
        self.n * self.n + self.n * self.r + i * self.n + j
    }

    pub fn vectorize(&self, a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DVector<f64> {
        let mut th = DVector::zeros(self.len());
        for i in 0..self.n {
            for j in 0..self.n {
                th[self.a(i, j)] = a[(i, j)];
            }
            for j in 0..self.r {
                th[self.b(i, j)] = b[(i, j)];
            }
        }
        for i in 0..self.m {
            for j in 0..self.n {
                th[self.c(i, j)] = c[(i, j)];
            }
        }
        th
    }

    pub fn unvectorize(&self, th: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let a = DMatrix::from_fn(self.n, self.n, |i, j| th[self.a(i, j)]);
        let b = DMatrix::from_fn(self.n, self.r, |i, j| th[self.b(i, j)]);
        let c = DMatrix::from_fn(self.m, self.n, |i, j| th[self.c(i, j)]);
        (a, b, c)
    }

    pub fn of_plant(plant: &StateSpaceModel) -> Self {
        Self {
            n: plant.n_states(),
            r: plant.n_inputs(),
            m: plant.n_outputs(),
        }
    }
}

/// Temporal precision used for every noise block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TemporalKind {
    /// Gaussian-kernel smoothness matrix with the given width.
    Gaussian(f64),
    /// Identity over derivative blocks.
    Identity,
}

impl TemporalKind {
    pub fn matrix(&self, order: usize) -> Result<TemporalPrecision> {
        match *self {
            TemporalKind::Gaussian(s) => smoothness_matrix(SmoothnessSpec::new(s, order)?),
            TemporalKind::Identity => Ok(TemporalPrecision::identity(order)),
        }
    }
}

/// Whether the input is observed (system identification) or inferred
/// against a prior (state and input estimation).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    Known,
    Estimated,
}

/// Priors and structure of the generalized-coordinate model.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeModel {
    pub layout: ThetaLayout,
    /// state/output embedding order p
    pub state_order: usize,
    /// input embedding order d
    pub input_order: usize,
    pub temporal: TemporalKind,
    pub input_mode: InputMode,
    /// P^u, r x r
    pub input_prior_prec: DMatrix<f64>,
    /// η^θ
    pub theta_prior: DVector<f64>,
    /// diagonal of P^θ
    pub theta_prior_prec: DVector<f64>,
    /// entries updated during learning
    pub theta_unknown: Vec<bool>,
    /// η^λ = [λz, λw]
    pub lambda_prior: Vector2<f64>,
    /// diagonal of P^λ
    pub lambda_prior_prec: Vector2<f64>,
}

impl GenerativeModel {
    /// Model with θ at the plant's values, all entries known, unit P^λ and
    /// λ prior at zero.
    pub fn from_plant(
        plant: &StateSpaceModel,
        state_order: usize,
        input_order: usize,
        kernel_width: f64,
        input_mode: InputMode,
    ) -> Self {
        let layout = ThetaLayout::of_plant(plant);
        let theta_prior = layout.vectorize(&plant.a, &plant.b, &plant.c);
        let k = layout.len();
        Self {
            layout,
            state_order,
            input_order,
            temporal: TemporalKind::Gaussian(kernel_width),
            input_mode,
            input_prior_prec: DMatrix::identity(layout.r, layout.r),
            theta_prior,
            theta_prior_prec: DVector::from_element(k, 1.0),
            theta_unknown: vec![false; k],
            lambda_prior: Vector2::zeros(),
            lambda_prior_prec: Vector2::new(1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.layout.len();
        if self.theta_prior.len() != k {
            return Err(mismatch("theta prior", k, self.theta_prior.len()));
        }
        if self.theta_prior_prec.len() != k {
            return Err(mismatch("theta prior precision", k, self.theta_prior_prec.len()));
        }
        if self.theta_unknown.len() != k {
            return Err(mismatch("theta unknown flags", k, self.theta_unknown.len()));
        }
        if self.theta_prior_prec.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("P^theta must be positive".into()));
        }
        if self.lambda_prior_prec.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("P^lambda must be positive".into()));
        }
        let r = self.layout.r;
        if self.input_prior_prec.nrows() != r || self.input_prior_prec.ncols() != r {
            return Err(mismatch("input prior precision", format!("{r}x{r}"), format!("{}x{}", self.input_prior_prec.nrows(), self.input_prior_prec.ncols())));
        }
        if self.input_mode == InputMode::Estimated && self.input_prior_prec.clone().cholesky().is_none() {
            return Err(Error::InvalidParameter("P^u must be positive definite".into()));
        }
        if let TemporalKind::Gaussian(s) = self.temporal {
            SmoothnessSpec::new(s, self.state_order)?;
        }
        Ok(())
    }

    pub fn unknown_indices(&self) -> Vec<usize> {
        (0..self.layout.len()).filter(|&i| self.theta_unknown[i]).collect()
    }

    pub fn x_len(&self) -> usize {
        self.layout.n * (self.state_order + 1)
    }

    pub fn u_len(&self) -> usize {
        self.layout.r * (self.input_order + 1)
    }

    pub fn y_len(&self) -> usize {
        self.layout.m * (self.state_order + 1)
    }

    /// Length of the per-step unknown vector X.
    pub fn big_x_len(&self) -> usize {
        match self.input_mode {
            InputMode::Known => self.x_len(),
            InputMode::Estimated => self.x_len() + self.u_len(),
        }
    }

    /// Length of the per-step stacked prediction error.
    pub fn eps_len(&self) -> usize {
        let u = match self.input_mode {
            InputMode::Known => 0,
            InputMode::Estimated => self.u_len(),
        };
        self.y_len() + u + self.x_len()
    }
}

/// Embedded observations. `u` holds the embedded known input in
/// [`InputMode::Known`] and the input prior η̃^u otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedData {
    pub dt: f64,
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

impl EmbeddedData {
    /// Embeds outputs to order p and inputs to order d; rows are time.
    pub fn from_series(
        outputs: &DMatrix<f64>,
        inputs: &DMatrix<f64>,
        dt: f64,
        state_order: usize,
        input_order: usize,
    ) -> Result<Self> {
        if outputs.nrows() != inputs.nrows() {
            return Err(mismatch("series length", outputs.nrows(), inputs.nrows()));
        }
        let y = Embedder::new(state_order, dt)?
            .embed_all(outputs)?
            .into_iter()
            .map(|g| g.into_values())
            .collect();
        let u = Embedder::new(input_order, dt)?
            .embed_all(inputs)?
            .into_iter()
            .map(|g| g.into_values())
            .collect();
        Ok(Self { dt, y, u })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub(crate) fn check(&self, model: &GenerativeModel) -> Result<()> {
        if self.y.is_empty() {
            return Err(Error::InvalidParameter("no data".into()));
        }
        if self.u.len() != self.y.len() {
            return Err(mismatch("embedded input length", self.y.len(), self.u.len()));
        }
        if let Some(v) = self.y.iter().find(|v| v.len() != model.y_len()) {
            return Err(mismatch("embedded output", model.y_len(), v.len()));
        }
        if let Some(v) = self.u.iter().find(|v| v.len() != model.u_len()) {
            return Err(mismatch("embedded input", model.u_len(), v.len()));
        }
        Ok(())
    }
}
