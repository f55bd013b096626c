use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussmix::GaussianMixture;
use crate::linalg::{matrix_from_rows, matrix_to_rows};

/// `x_{k+1} = F x_k + B u_k + w_k`, `y_k = H x_k + v_k` with mixture prior,
/// process noise `w` and measurement noise `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct LinearGmModel {
    f: DMatrix<f64>,
    b: DMatrix<f64>,
    h: DMatrix<f64>,
    prior: GaussianMixture,
    process_noise: GaussianMixture,
    meas_noise: GaussianMixture,
    g_max: usize,
}

#[allow(non_snake_case)]
#[derive(Serialize, Deserialize)]
struct ModelJson {
    F: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    B: Option<Vec<Vec<f64>>>,
    H: Vec<Vec<f64>>,
    prior: GaussianMixture,
    process_noise: GaussianMixture,
    meas_noise: GaussianMixture,
    g_max: usize,
}

impl TryFrom<ModelJson> for LinearGmModel {
    type Error = Error;
    fn try_from(j: ModelJson) -> Result<Self> {
        let f = matrix_from_rows(&j.F, "F")?;
        let b = match j.B {
            Some(rows) => matrix_from_rows(&rows, "B")?,
            None => DMatrix::zeros(f.nrows(), 0),
        };
        let h = matrix_from_rows(&j.H, "H")?;
        LinearGmModel::new(f, b, h, j.prior, j.process_noise, j.meas_noise, j.g_max)
    }
}

impl From<LinearGmModel> for ModelJson {
    fn from(m: LinearGmModel) -> Self {
        let b = if m.b.ncols() == 0 { None } else { Some(matrix_to_rows(&m.b)) };
        ModelJson {
            F: matrix_to_rows(&m.f),
            B: b,
            H: matrix_to_rows(&m.h),
            prior: m.prior,
            process_noise: m.process_noise,
            meas_noise: m.meas_noise,
            g_max: m.g_max,
        }
    }
}

impl LinearGmModel {
    pub fn new(
        f: DMatrix<f64>,
        b: DMatrix<f64>,
        h: DMatrix<f64>,
        prior: GaussianMixture,
        process_noise: GaussianMixture,
        meas_noise: GaussianMixture,
        g_max: usize,
    ) -> Result<Self> {
        let n = f.nrows();
        if n == 0 || f.ncols() != n {
            return Err(Error::invalid("F must be square and nonempty"));
        }
        let mismatch = |expected, got, context| Err(Error::DimensionMismatch { expected, got, context });
        if b.nrows() != n {
            return mismatch(n, b.nrows(), "rows of B");
        }
        if h.ncols() != n || h.nrows() == 0 {
            return mismatch(n, h.ncols(), "columns of H");
        }
        if prior.dim() != n {
            return mismatch(n, prior.dim(), "prior");
        }
        if process_noise.dim() != n {
            return mismatch(n, process_noise.dim(), "process noise");
        }
        if meas_noise.dim() != h.nrows() {
            return mismatch(h.nrows(), meas_noise.dim(), "measurement noise");
        }
        if g_max == 0 {
            return Err(Error::invalid("g_max must be at least 1"));
        }
        if f.iter().chain(b.iter()).chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("model matrices must be finite"));
        }
        Ok(Self { f, b, h, prior, process_noise, meas_noise, g_max })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn prior(&self) -> &GaussianMixture {
        &self.prior
    }

    pub fn process_noise(&self) -> &GaussianMixture {
        &self.process_noise
    }

    pub fn meas_noise(&self) -> &GaussianMixture {
        &self.meas_noise
    }

    pub fn g_max(&self) -> usize {
        self.g_max
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    /// Same model with a different state matrix.
    pub fn with_f(&self, f: DMatrix<f64>) -> Result<Self> {
        Self::new(
            f,
            self.b.clone(),
            self.h.clone(),
            self.prior.clone(),
            self.process_noise.clone(),
            self.meas_noise.clone(),
            self.g_max,
        )
    }

    /// Shipped 1D localization model: a random walk observed directly, with
    /// five-component prior, process noise and measurement noise.
    pub fn localization() -> Self {
        Self::from_json(include_str!("../../fixtures/localization_1d.json")).expect("fixture is valid")
    }

    /// The localization model with the walk misread as `x_{k+1} = 0.5 x_k + w_k`.
    pub fn localization_mismatched() -> Self {
        Self::from_json(include_str!("../../fixtures/localization_1d_mismatched.json")).expect("fixture is valid")
    }
}
