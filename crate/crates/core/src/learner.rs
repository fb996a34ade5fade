//! The base-learner contract consumed by the ensemble builders, and the
//! closed-form linear least-squares learner.
//!
//! Ensemble construction only ever calls [`Learner::fit`] and
//! [`Regressor::predict`]; any regression model trained by residual
//! minimisation can be plugged in by implementing these two traits.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ka::{KaModel, KaSpec};

/// A trained deterministic model.
pub trait Regressor {
    fn dim(&self) -> usize;

    fn predict(&self, x: &[f64]) -> Result<f64>;
}

/// Something that can fit a [`Regressor`] to a subset of a dataset.
///
/// `rows` selects and orders the training records. Fitting must be a pure
/// function of `(self, data, rows, seed)`.
pub trait Learner: Sync {
    type Model: Regressor + Clone + Send + Sync;

    fn fit(&self, data: &Dataset, rows: &[usize], seed: u64) -> Result<Self::Model>;
}

/// `y - predict(x)` for each selected record, in `rows` order.
pub fn residuals<M: Regressor + ?Sized>(
    model: &M,
    data: &Dataset,
    rows: &[usize],
) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::Empty("record set"));
    }
    rows.iter()
        .map(|&i| Ok(data.output(i) - model.predict(data.input(i))?))
        .collect()
}

pub fn training_rmse<M: Regressor + ?Sized>(
    model: &M,
    data: &Dataset,
    rows: &[usize],
) -> Result<f64> {
    let r = residuals(model, data, rows)?;
    Ok((r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt())
}

fn all_rows(data: &Dataset) -> Vec<usize> {
    (0..data.len()).collect()
}

/// Fits on every record of `data` and reports the training RMSE.
pub fn fit_all<L: Learner>(learner: &L, data: &Dataset, seed: u64) -> Result<(L::Model, f64)> {
    let rows = all_rows(data);
    let model = learner.fit(data, &rows, seed)?;
    let rmse = training_rmse(&model, data, &rows)?;
    Ok((model, rmse))
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Dimension {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSpec {
    /// Ridge factor used only when the plain normal equations are singular,
    /// scaled by the mean diagonal of the centred Gram matrix. Zero disables
    /// the fallback; singular systems are then an error.
    pub ridge: f64,
}

impl Default for LinearSpec {
    fn default() -> Self {
        Self { ridge: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Self {
        Self { weights, intercept }
    }
}

impl Regressor for LinearModel {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), x)?;
        Ok(self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }
}

impl Learner for LinearSpec {
    type Model = LinearModel;

    fn fit(&self, data: &Dataset, rows: &[usize], _seed: u64) -> Result<LinearModel> {
        if rows.is_empty() {
            return Err(Error::Empty("record set"));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ridge must be >= 0, got {}",
                self.ridge
            )));
        }
        let m = data.dim();
        let n = rows.len() as f64;

        // Centring removes the intercept from the penalised system.
        let mut mean_x = vec![0.0; m];
        let mut mean_y = 0.0;
        for &i in rows {
            for (mx, v) in mean_x.iter_mut().zip(data.input(i)) {
                *mx += v;
            }
            mean_y += data.output(i);
        }
        mean_x.iter_mut().for_each(|v| *v /= n);
        mean_y /= n;

        let mut gram = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        let mut xc = vec![0.0; m];
        for &i in rows {
            for ((c, v), mx) in xc.iter_mut().zip(data.input(i)).zip(&mean_x) {
                *c = v - mx;
            }
            let yc = data.output(i) - mean_y;
            for a in 0..m {
                rhs[a] += xc[a] * yc;
                for b in 0..=a {
                    gram[a * m + b] += xc[a] * xc[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                gram[b * m + a] = gram[a * m + b];
            }
        }

        let weights = match cholesky_solve(&mut gram.clone(), &rhs, m) {
            Err(Error::Singular) if self.ridge > 0.0 => {
                let trace: f64 = (0..m).map(|a| gram[a * m + a]).sum();
                let scale = if m > 0 {
                    (trace / m as f64).max(1.0)
                } else {
                    1.0
                };
                for a in 0..m {
                    gram[a * m + a] += self.ridge * scale;
                }
                cholesky_solve(&mut gram, &rhs, m)?
            }
            other => other?,
        };
        let intercept = mean_y - weights.iter().zip(&mean_x).map(|(w, x)| w * x).sum::<f64>();
        Ok(LinearModel { weights, intercept })
    }
}

/// Solves `A w = b` for symmetric positive definite `A` (row-major, `m x m`),
/// overwriting `A` with its Cholesky factor.
fn cholesky_solve(a: &mut [f64], b: &[f64], m: usize) -> Result<Vec<f64>> {
    let max_diag = (0..m).map(|i| a[i * m + i].abs()).fold(0.0, f64::max);
    let tol = max_diag * 1e-13;
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        if !(d > tol) {
            return Err(Error::Singular);
        }
        let d = d.sqrt();
        a[j * m + j] = d;
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / d;
        }
    }
    let mut z = b.to_vec();
    for i in 0..m {
        for k in 0..i {
            z[i] -= a[i * m + k] * z[k];
        }
        z[i] /= a[i * m + i];
    }
    for i in (0..m).rev() {
        for k in i + 1..m {
            z[i] -= a[k * m + i] * z[k];
        }
        z[i] /= a[i * m + i];
    }
    Ok(z)
}

/// Serializable choice of base learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerSpec {
    Linear(LinearSpec),
    #[serde(rename = "ka")]
    KolmogorovArnold(KaSpec),
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::KolmogorovArnold(KaSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    KolmogorovArnold(KaModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Linear(_) => "linear",
            Model::KolmogorovArnold(_) => "ka",
        }
    }
}

impl Regressor for Model {
    fn dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.dim(),
            Model::KolmogorovArnold(m) => m.dim(),
        }
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Linear(m) => m.predict(x),
            Model::KolmogorovArnold(m) => m.predict(x),
        }
    }
}

impl Learner for LearnerSpec {
    type Model = Model;

    fn fit(&self, data: &Dataset, rows: &[usize], seed: u64) -> Result<Model> {
        match self {
            LearnerSpec::Linear(s) => s.fit(data, rows, seed).map(Model::Linear),
            LearnerSpec::KolmogorovArnold(s) => {
                s.fit(data, rows, seed).map(Model::KolmogorovArnold)
            }
        }
    }
}
