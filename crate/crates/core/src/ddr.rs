//! Divisive data resorting.
//!
//! The builder keeps a working order of record indices. At every step of a
//! [`DivisionSchedule`] the order is cut into `w` consecutive clusters, one
//! model is fitted per cluster, and each cluster is stably re-sorted by the
//! residuals of its own model. The models of the last step form the
//! ensemble; evaluating them all at one input gives a sample from the
//! (approximate) conditional output distribution.

use std::ops::Range;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learner::{Learner, Regressor};
use crate::rng;

/// Strictly increasing cluster counts starting at 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DivisionSchedule(Vec<usize>);

impl DivisionSchedule {
    pub fn new(steps: Vec<usize>) -> Result<Self> {
        if steps.first() != Some(&1) {
            return Err(Error::Schedule("must start with 1".into()));
        }
        if steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Schedule(format!(
                "must be strictly increasing: {steps:?}"
            )));
        }
        Ok(Self(steps))
    }

    /// `1, 2, 4, ..., 2^levels`.
    pub fn doubling(levels: u32) -> Self {
        Self((0..=levels).map(|l| 1usize << l).collect())
    }

    /// The schedule of the reference synthetic experiment.
    pub fn reference() -> Self {
        Self(vec![1, 2, 3, 5, 7, 11, 17, 23, 29])
    }

    pub fn parse(s: &str) -> Result<Self> {
        let steps = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Schedule(format!("not an integer: {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(steps)
    }

    pub fn steps(&self) -> &[usize] {
        &self.0
    }

    pub fn final_clusters(&self) -> usize {
        *self.0.last().unwrap()
    }

    /// Every final cluster must hold at least two records.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        let w = self.final_clusters();
        if n == 0 {
            return Err(Error::Empty("dataset"));
        }
        if w > 1 && 2 * w > n {
            return Err(Error::Schedule(format!(
                "{w} clusters need at least {} records, have {n}",
                2 * w
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for DivisionSchedule {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DivisionSchedule> for Vec<usize> {
    fn from(s: DivisionSchedule) -> Self {
        s.0
    }
}

/// Cuts `n` positions into `w` consecutive runs; the first `n % w` runs get
/// one extra position.
pub fn split_consecutive(n: usize, w: usize) -> Result<Vec<Range<usize>>> {
    if w == 0 {
        return Err(Error::Schedule("cluster count must be >= 1".into()));
    }
    if w > 1 && 2 * w > n {
        return Err(Error::Schedule(format!(
            "cannot split {n} records into {w} clusters of >= 2"
        )));
    }
    if n == 0 {
        return Err(Error::Empty("dataset"));
    }
    let (base, extra) = (n / w, n % w);
    let mut start = 0;
    Ok((0..w)
        .map(|c| {
            let len = base + usize::from(c < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// Stable ascending sort of each cluster's records by `key` (indexed by
/// position in `order`). Records never leave their cluster.
fn sort_clusters_by(order: &mut [usize], clusters: &[Range<usize>], key: &mut [f64]) {
    for c in clusters {
        let mut pairs: Vec<(f64, usize)> = key[c.clone()]
            .iter()
            .copied()
            .zip(order[c.clone()].iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (p, (k, idx)) in c.clone().zip(pairs) {
            order[p] = idx;
            key[p] = k;
        }
    }
}

/// Residuals of every record against its cluster's model, by position.
fn cluster_residuals<M: Regressor + Sync>(
    data: &Dataset,
    order: &[usize],
    clusters: &[Range<usize>],
    models: &[M],
) -> Result<Vec<f64>> {
    let parts = clusters
        .par_iter()
        .zip(models.par_iter())
        .map(|(c, m)| {
            order[c.clone()]
                .iter()
                .map(|&i| Ok(data.output(i) - m.predict(data.input(i))?))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// Re-sorts each cluster of `order` by the residuals of that cluster's
/// model; returns the residuals in the new position order.
pub fn resort_within_clusters<M: Regressor + Sync>(
    data: &Dataset,
    order: &mut [usize],
    clusters: &[Range<usize>],
    models: &[M],
) -> Result<Vec<f64>> {
    if clusters.len() != models.len() {
        return Err(Error::LengthMismatch {
            left: clusters.len(),
            right: models.len(),
        });
    }
    let mut res = cluster_residuals(data, order, clusters, models)?;
    sort_clusters_by(order, clusters, &mut res);
    Ok(res)
}

fn fit_clusters<L: Learner>(
    learner: &L,
    data: &Dataset,
    order: &[usize],
    clusters: &[Range<usize>],
    seed: u64,
    step: usize,
) -> Result<Vec<L::Model>> {
    clusters
        .par_iter()
        .enumerate()
        .map(|(c, range)| {
            let s = rng::derive_seed(seed, &[step as u64, c as u64]);
            learner
                .fit(data, &order[range.clone()], s)
                .map_err(|e| Error::Provenance {
                    step,
                    cluster: c,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Per-step diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub clusters: usize,
    /// Mean `|y - M(x)|` over all records, each against its cluster's model.
    pub mean_abs_residual: f64,
}

/// Models trained on consecutive runs of a record order.
#[derive(Clone, Debug)]
pub struct Ensemble<M> {
    pub models: Vec<M>,
    /// Record indices in final working order.
    pub order: Vec<usize>,
    pub steps: Vec<StepReport>,
}

impl<M: Regressor> Ensemble<M> {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// One output per model, sorted ascending.
    pub fn predict_sample(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut s = self
            .models
            .iter()
            .map(|m| m.predict(x))
            .collect::<Result<Vec<_>>>()?;
        s.sort_by(f64::total_cmp);
        Ok(s)
    }
}

/// Runs the full divisive resorting procedure; `seed` is the master seed
/// from which per-model seeds are derived by `(step, cluster)`.
pub fn build_ensemble<L: Learner>(
    data: &Dataset,
    schedule: &DivisionSchedule,
    learner: &L,
    seed: u64,
) -> Result<Ensemble<L::Model>> {
    schedule.validate_for(data.len())?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut steps = Vec::with_capacity(schedule.steps().len());
    let mut models = Vec::new();
    for (step, &w) in schedule.steps().iter().enumerate() {
        let clusters = split_consecutive(data.len(), w)?;
        models = fit_clusters(learner, data, &order, &clusters, seed, step)?;
        let res = resort_within_clusters(data, &mut order, &clusters, &models)?;
        steps.push(StepReport {
            clusters: w,
            mean_abs_residual: res.iter().map(|r| r.abs()).sum::<f64>() / res.len() as f64,
        });
    }
    Ok(Ensemble {
        models,
        order,
        steps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlidingWindowSpec {
    /// Records per window.
    pub length: usize,
    /// Shift between consecutive windows.
    pub stride: usize,
}

impl SlidingWindowSpec {
    pub fn new(length: usize, stride: usize) -> Result<Self> {
        if stride == 0 || stride > length {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= stride <= length, got stride {stride}, length {length}"
            )));
        }
        Ok(Self { length, stride })
    }

    pub fn windows(&self, n: usize) -> Result<Vec<Range<usize>>> {
        if self.length > n {
            return Err(Error::InvalidParameter(format!(
                "window length {} exceeds {n} records",
                self.length
            )));
        }
        let count = (n - self.length) / self.stride + 1;
        Ok((0..count)
            .map(|k| k * self.stride..k * self.stride + self.length)
            .collect())
    }
}

/// Fits one fresh model per overlapping window of `order`.
pub fn build_sliding_ensemble<L: Learner>(
    data: &Dataset,
    order: &[usize],
    window: SlidingWindowSpec,
    learner: &L,
    seed: u64,
) -> Result<Ensemble<L::Model>> {
    if order.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: order.len(),
            right: data.len(),
        });
    }
    let windows = window.windows(order.len())?;
    let models = fit_clusters(
        learner,
        data,
        order,
        &windows,
        rng::derive_seed(seed, &[u64::MAX]),
        0,
    )?;
    Ok(Ensemble {
        models,
        order: order.to_vec(),
        steps: Vec::new(),
    })
}

/// Bagging-style baseline: one random permutation split into `w`
/// consecutive clusters, no resorting.
pub fn build_random_disjoint_ensemble<L: Learner>(
    data: &Dataset,
    w: usize,
    learner: &L,
    seed: u64,
) -> Result<Ensemble<L::Model>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    // a single cluster holds every record, so its order is left as given
    if w > 1 {
        order.shuffle(&mut rng::seeded(rng::derive_seed(seed, &[u64::MAX - 1])));
    }
    let clusters = split_consecutive(data.len(), w)?;
    let models = fit_clusters(learner, data, &order, &clusters, seed, 0)?;
    let res = cluster_residuals(data, &order, &clusters, &models)?;
    Ok(Ensemble {
        models,
        order,
        steps: vec![StepReport {
            clusters: w,
            mean_abs_residual: res.iter().map(|r| r.abs()).sum::<f64>() / res.len() as f64,
        }],
    })
}

/// Expectation model plus a model of the squared expectation residual.
#[derive(Clone, Debug)]
pub struct ExpectationVariance<M> {
    pub expectation: M,
    pub variance: M,
    /// Fraction of training records whose raw variance prediction was
    /// negative and had to be clamped.
    pub clamped_fraction: f64,
}

impl<M: Regressor> ExpectationVariance<M> {
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.expectation.predict(x)
    }

    /// Raw variance-model output, possibly negative.
    pub fn predict_variance_raw(&self, x: &[f64]) -> Result<f64> {
        self.variance.predict(x)
    }

    pub fn predict_variance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.variance.predict(x)?.max(0.0))
    }
}

pub fn fit_expectation_variance<L: Learner>(
    data: &Dataset,
    learner: &L,
    seed: u64,
) -> Result<ExpectationVariance<L::Model>> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let rows: Vec<usize> = (0..data.len()).collect();
    let expectation = learner.fit(data, &rows, rng::derive_seed(seed, &[0]))?;
    let sq = rows
        .iter()
        .map(|&i| {
            let r = data.output(i) - expectation.predict(data.input(i))?;
            Ok(r * r)
        })
        .collect::<Result<Vec<_>>>()?;
    let vdata = data.with_outputs(sq)?;
    let variance = learner.fit(&vdata, &rows, rng::derive_seed(seed, &[1]))?;
    let negative = rows
        .iter()
        .map(|&i| variance.predict(vdata.input(i)).map(|v| v < 0.0))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&b| b)
        .count();
    Ok(ExpectationVariance {
        expectation,
        variance,
        clamped_fraction: negative as f64 / rows.len() as f64,
    })
}
