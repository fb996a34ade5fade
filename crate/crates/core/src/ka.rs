//! Kolmogorov-Arnold regression with piecewise-linear inner and outer
//! functions:
//!
//! ```text
//! y = sum_k Phi_k( sum_j f_kj(x_j) )
//! ```
//!
//! Inner functions live on `[0, 1]`; each outer function lives on an interval
//! covering the inner sums seen during training. Targets are min-max scaled
//! to `[0, 1]` internally, so the step sizes do not depend on output units.
//!
//! Identification is a per-record relaxed projection. For a record with
//! residual `r` the correction `lambda * r` is split between the outer nodes
//! (a Kaczmarz step on the two nodes bracketing each inner sum) and the inner
//! sums (a minimum-norm shift of the inner sums through the current outer
//! slopes, realised by a Kaczmarz step on the inner nodes). The relaxation
//! `lambda` decays from `initial_relaxation` to `mu` over training.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnRange, Dataset};
use crate::error::{Error, Result};
use crate::learner::{Learner, Regressor};
use crate::rng;

/// Univariate continuous piecewise-linear function with equidistant nodes.
/// Arguments outside `[lo, hi]` are clamped to the boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(lo: f64, hi: f64, nodes: Vec<f64>) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("bad domain [{lo}, {hi}]")));
        }
        if nodes.len() < 2 {
            return Err(Error::InvalidParameter("need at least 2 nodes".into()));
        }
        Ok(Self { lo, hi, nodes })
    }

    pub fn constant(lo: f64, hi: f64, q: usize, value: f64) -> Result<Self> {
        Self::new(lo, hi, vec![value; q])
    }

    /// `f(t) = t` on `[lo, hi]`.
    pub fn identity(lo: f64, hi: f64, q: usize) -> Result<Self> {
        let step = (hi - lo) / (q.max(2) - 1) as f64;
        Self::new(lo, hi, (0..q).map(|i| lo + step * i as f64).collect())
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [f64] {
        &mut self.nodes
    }

    fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes.len() - 1) as f64
    }

    /// Left node index of the segment holding `t` (after clamping) and the
    /// interpolation weight of the right node.
    #[inline]
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let last = self.nodes.len() - 2;
        let p = ((t - self.lo) / self.spacing()).clamp(0.0, (last + 1) as f64);
        let i = (p as usize).min(last);
        (i, p - i as f64)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let (i, w) = self.locate(t);
        self.nodes[i] * (1.0 - w) + self.nodes[i + 1] * w
    }

    /// Slope of the segment holding `t` (after clamping).
    #[inline]
    pub fn slope(&self, t: f64) -> f64 {
        let (i, _) = self.locate(t);
        (self.nodes[i + 1] - self.nodes[i]) / self.spacing()
    }

    /// The same function sampled onto a new equidistant grid over `[lo, hi]`.
    pub fn resampled(&self, lo: f64, hi: f64) -> Result<Self> {
        let q = self.nodes.len();
        let step = (hi - lo) / (q - 1) as f64;
        Self::new(
            lo,
            hi,
            (0..q).map(|i| self.eval(lo + step * i as f64)).collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KaSpec {
    /// Number of outer functions; `None` means `2m + 1`.
    pub addends: Option<usize>,
    pub inner_nodes: usize,
    pub outer_nodes: usize,
    /// Final relaxation of the per-record projection.
    pub mu: f64,
    /// Sweeps through the training records.
    pub passes: usize,
    /// Relaxation at the first record; decays to `mu` over training.
    pub initial_relaxation: f64,
    /// Fraction of each correction assigned to the outer functions.
    pub outer_share: f64,
    /// Lower bound on the squared norm of the outer slopes when scaling the
    /// inner correction, as a fraction of its initial value `1/n`. Without
    /// it, noisy residuals in flat regions of the outer functions produce
    /// arbitrarily large inner moves.
    pub slope_floor: f64,
    /// Visit the training records in a fresh seeded random order on every
    /// pass instead of the order given. Resorted clusters arrive sorted by
    /// residual, and a per-record learner drifts towards the tail of such a
    /// sequence.
    pub shuffle: bool,
}

impl Default for KaSpec {
    fn default() -> Self {
        Self {
            addends: None,
            inner_nodes: 5,
            outer_nodes: 7,
            mu: 0.002,
            passes: 4,
            initial_relaxation: 1.2,
            outer_share: 0.3,
            slope_floor: 0.02,
            shuffle: true,
        }
    }
}

impl KaSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.inner_nodes < 2 || self.outer_nodes < 2 {
            return bad("node counts must be >= 2".into());
        }
        if self.addends == Some(0) {
            return bad("addends must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("mu must lie in [0, 1], got {}", self.mu));
        }
        if !(0.0..=2.0).contains(&self.initial_relaxation) {
            return bad(format!(
                "initial relaxation must lie in [0, 2], got {}",
                self.initial_relaxation
            ));
        }
        if !(0.0..=1.0).contains(&self.outer_share) {
            return bad(format!(
                "outer share must lie in [0, 1], got {}",
                self.outer_share
            ));
        }
        if !(self.slope_floor >= 0.0 && self.slope_floor.is_finite()) {
            return bad(format!(
                "slope floor must be finite and >= 0, got {}",
                self.slope_floor
            ));
        }
        Ok(())
    }

    pub fn addends_for(&self, dim: usize) -> usize {
        self.addends.unwrap_or(2 * dim + 1)
    }

    /// Relaxation used at training step `t` of `total`.
    pub fn relaxation(&self, t: usize, total: usize) -> f64 {
        if self.mu == 0.0 || self.initial_relaxation <= self.mu || total <= 1 {
            return self.mu;
        }
        let s = t as f64 / total as f64;
        self.initial_relaxation * (self.mu / self.initial_relaxation).powf(s * s)
    }
}

/// A trained (or initialised) Kolmogorov-Arnold model.
#[derive(Clone, Debug, PartialEq)]
pub struct KaModel {
    pub(crate) dim: usize,
    pub(crate) addends: usize,
    /// `addends x dim`, row-major by addend.
    pub(crate) inner: Vec<PiecewiseLinear>,
    pub(crate) outer: Vec<PiecewiseLinear>,
    pub(crate) target: ColumnRange,
    pub(crate) outer_share: f64,
    pub(crate) slope_floor: f64,
}

/// Widen an outer domain once an inner sum leaves it by more than this
/// fraction of its width.
const DOMAIN_SLACK: f64 = 0.01;

impl KaModel {
    /// Builds a model from explicit functions. `inner` is row-major by addend.
    pub fn from_parts(
        dim: usize,
        inner: Vec<PiecewiseLinear>,
        outer: Vec<PiecewiseLinear>,
        target: ColumnRange,
    ) -> Result<Self> {
        let addends = outer.len();
        if addends == 0 || dim == 0 || inner.len() != addends * dim {
            return Err(Error::InvalidParameter(format!(
                "need {} inner functions for {addends} addends of dimension {dim}, got {}",
                addends * dim,
                inner.len()
            )));
        }
        if inner.iter().any(|f| f.domain() != (0.0, 1.0)) {
            return Err(Error::InvalidParameter(
                "inner domains must be [0, 1]".into(),
            ));
        }
        Ok(Self {
            dim,
            addends,
            inner,
            outer,
            target,
            outer_share: KaSpec::default().outer_share,
            slope_floor: KaSpec::default().slope_floor,
        })
    }

    pub fn with_outer_share(mut self, share: f64) -> Self {
        self.outer_share = share;
        self
    }

    pub fn with_slope_floor(mut self, floor: f64) -> Self {
        self.slope_floor = floor;
        self
    }

    pub fn outer_share(&self) -> f64 {
        self.outer_share
    }

    pub fn slope_floor(&self) -> f64 {
        self.slope_floor
    }

    /// Random inner functions and outer functions set to the identity ramp
    /// divided by the number of addends, so the initial model is the mean of
    /// the inner sums. Outer domains cover the inner sums of `rows`.
    pub fn initialise(spec: &KaSpec, data: &Dataset, rows: &[usize], seed: u64) -> Result<Self> {
        spec.validate()?;
        if rows.is_empty() {
            return Err(Error::Empty("record set"));
        }
        let dim = data.dim();
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        let addends = spec.addends_for(dim);
        let mut r = rng::seeded(seed);
        let mut inner = Vec::with_capacity(addends * dim);
        for _ in 0..addends * dim {
            let nodes = (0..spec.inner_nodes)
                .map(|_| r.gen::<f64>() - 0.5)
                .collect();
            inner.push(PiecewiseLinear::new(0.0, 1.0, nodes)?);
        }

        let mut lo = vec![f64::INFINITY; addends];
        let mut hi = vec![f64::NEG_INFINITY; addends];
        let (mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in rows {
            let x = data.input(i);
            for k in 0..addends {
                let u = inner_sum(&inner[k * dim..(k + 1) * dim], x);
                lo[k] = lo[k].min(u);
                hi[k] = hi[k].max(u);
            }
            ylo = ylo.min(data.output(i));
            yhi = yhi.max(data.output(i));
        }
        let outer = lo
            .iter()
            .zip(&hi)
            .map(|(&l, &h)| {
                let (l, h) = if h - l > 1e-9 {
                    (l, h)
                } else {
                    (l - 0.5, h + 0.5)
                };
                let mut f = PiecewiseLinear::identity(l, h, spec.outer_nodes)?;
                for v in f.nodes_mut() {
                    *v /= addends as f64;
                }
                Ok(f)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            dim,
            addends,
            inner,
            outer,
            target: ColumnRange { lo: ylo, hi: yhi },
            outer_share: spec.outer_share,
            slope_floor: spec.slope_floor,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn addends(&self) -> usize {
        self.addends
    }

    pub fn inner(&self, k: usize, j: usize) -> &PiecewiseLinear {
        &self.inner[k * self.dim + j]
    }

    pub fn outer(&self, k: usize) -> &PiecewiseLinear {
        &self.outer[k]
    }

    pub fn target_range(&self) -> ColumnRange {
        self.target
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// The superposition in scaled target units.
    pub fn evaluate_scaled(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.scaled(x))
    }

    #[inline]
    fn scaled(&self, x: &[f64]) -> f64 {
        (0..self.addends)
            .map(|k| self.outer[k].eval(self.sum_k(k, x)))
            .sum()
    }

    #[inline]
    fn sum_k(&self, k: usize, x: &[f64]) -> f64 {
        inner_sum(&self.inner[k * self.dim..(k + 1) * self.dim], x)
    }

    fn scale_target(&self, y: f64) -> f64 {
        if self.target.hi > self.target.lo {
            self.target.to_unit(y)
        } else {
            y - self.target.lo
        }
    }

    fn unscale(&self, v: f64) -> f64 {
        if self.target.hi > self.target.lo {
            self.target.from_unit(v)
        } else {
            v + self.target.lo
        }
    }

    /// Total number of nodal values: all inner nodes, then all outer nodes.
    pub fn num_params(&self) -> usize {
        self.inner
            .iter()
            .chain(&self.outer)
            .map(|f| f.nodes.len())
            .sum()
    }

    fn param_slot(&self, mut p: usize) -> (usize, usize) {
        for (f, func) in self.inner.iter().chain(&self.outer).enumerate() {
            if p < func.nodes.len() {
                return (f, p);
            }
            p -= func.nodes.len();
        }
        panic!("parameter index out of range");
    }

    fn func_mut(&mut self, f: usize) -> &mut PiecewiseLinear {
        let n_inner = self.inner.len();
        if f < n_inner {
            &mut self.inner[f]
        } else {
            &mut self.outer[f - n_inner]
        }
    }

    pub fn param(&self, p: usize) -> f64 {
        let (f, i) = self.param_slot(p);
        self.inner.iter().chain(&self.outer).nth(f).unwrap().nodes[i]
    }

    pub fn set_param(&mut self, p: usize, v: f64) {
        let (f, i) = self.param_slot(p);
        self.func_mut(f).nodes[i] = v;
    }

    /// Gradient of the scaled output with respect to every nodal value, in
    /// [`num_params`](Self::num_params) order, from interpolation weights and
    /// outer slopes.
    pub fn nodal_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut g = vec![0.0; self.num_params()];
        let mut offset = 0;
        let mut slopes = Vec::with_capacity(self.addends);
        for k in 0..self.addends {
            slopes.push(self.outer[k].slope(self.sum_k(k, x)));
        }
        for (idx, f) in self.inner.iter().enumerate() {
            let k = idx / self.dim;
            let (i, w) = f.locate(x[idx % self.dim]);
            g[offset + i] += slopes[k] * (1.0 - w);
            g[offset + i + 1] += slopes[k] * w;
            offset += f.nodes.len();
        }
        for (k, f) in self.outer.iter().enumerate() {
            let (i, w) = f.locate(self.sum_k(k, x));
            g[offset + i] += 1.0 - w;
            g[offset + i + 1] += w;
            offset += f.nodes.len();
        }
        Ok(g)
    }

    /// One projection step towards record `(x, y)` (target in original
    /// units) with relaxation `mu`. For `0 <= mu <= 1` the step removes the
    /// fraction `mu` of the residual to first order.
    pub fn update_single(&mut self, x: &[f64], y: f64, mu: f64) -> Result<f64> {
        self.check(x)?;
        let ys = self.scale_target(y);
        let r = self.step(x, ys, mu, &mut Scratch::new(self.addends));
        if !r.is_finite() {
            return Err(Error::Diverged("non-finite residual".into()));
        }
        Ok(r)
    }

    /// Re-grids every outer domain onto the range of inner sums over `rows`,
    /// undoing widening caused by transient excursions.
    fn fit_domains(&mut self, data: &Dataset, rows: &[usize]) -> Result<()> {
        let mut lo = vec![f64::INFINITY; self.addends];
        let mut hi = vec![f64::NEG_INFINITY; self.addends];
        for &i in rows {
            let x = data.input(i);
            for k in 0..self.addends {
                let u = self.sum_k(k, x);
                lo[k] = lo[k].min(u);
                hi[k] = hi[k].max(u);
            }
        }
        for k in 0..self.addends {
            if hi[k] - lo[k] > 1e-9 && (lo[k], hi[k]) != self.outer[k].domain() {
                self.outer[k] = self.outer[k].resampled(lo[k], hi[k])?;
            }
        }
        Ok(())
    }

    /// Re-grids outer domains that the current inner sums of `x` have left.
    fn widen_domains(&mut self, x: &[f64], sums: &mut [f64]) -> Result<()> {
        for (k, slot) in sums.iter_mut().enumerate().take(self.addends) {
            let u = self.sum_k(k, x);
            *slot = u;
            let (lo, hi) = self.outer[k].domain();
            let slack = DOMAIN_SLACK * (hi - lo);
            if u < lo - slack || u > hi + slack {
                if !u.is_finite() {
                    return Err(Error::Diverged(format!("inner sum of addend {k} is {u}")));
                }
                self.outer[k] = self.outer[k].resampled(lo.min(u), hi.max(u))?;
            }
        }
        Ok(())
    }

    /// Returns the residual before the update.
    fn step(&mut self, x: &[f64], ys: f64, mu: f64, s: &mut Scratch) -> f64 {
        let n = self.addends;
        let m = self.dim;
        let mut yhat = 0.0;
        let mut slope_sq = 0.0;
        let mut outer_norm = 0.0;
        for k in 0..n {
            let u = self.sum_k(k, x);
            let f = &self.outer[k];
            let (i, w) = f.locate(u);
            yhat += f.nodes[i] * (1.0 - w) + f.nodes[i + 1] * w;
            let sl = (f.nodes[i + 1] - f.nodes[i]) / f.spacing();
            s.slot[k] = i;
            s.weight[k] = w;
            s.slope[k] = sl;
            slope_sq += sl * sl;
            outer_norm += w * w + (1.0 - w) * (1.0 - w);
        }
        let r = ys - yhat;
        if r == 0.0 || mu == 0.0 {
            return r;
        }

        let share = if slope_sq > 1e-12 {
            self.outer_share
        } else {
            1.0
        };

        if share < 1.0 {
            let inner_step = mu * (1.0 - share) * r / slope_sq.max(self.slope_floor / n as f64);
            for k in 0..n {
                let du = inner_step * s.slope[k];
                let funcs = &mut self.inner[k * m..(k + 1) * m];
                let mut norm = 0.0;
                for (f, &xj) in funcs.iter().zip(x) {
                    let (_, w) = f.locate(xj);
                    norm += w * w + (1.0 - w) * (1.0 - w);
                }
                let c = du / norm;
                for (f, &xj) in funcs.iter_mut().zip(x) {
                    let (i, w) = f.locate(xj);
                    f.nodes[i] += c * (1.0 - w);
                    f.nodes[i + 1] += c * w;
                }
            }
        }

        let c = mu * share * r / outer_norm;
        for k in 0..n {
            let (i, w) = (s.slot[k], s.weight[k]);
            let nodes = &mut self.outer[k].nodes;
            nodes[i] += c * (1.0 - w);
            nodes[i + 1] += c * w;
        }
        r
    }

    /// Runs `spec.passes` sweeps over `rows`, in the given order or, with
    /// `spec.shuffle`, in an order drawn from `seed` for each pass.
    pub fn train(
        &mut self,
        spec: &KaSpec,
        data: &Dataset,
        rows: &[usize],
        seed: u64,
    ) -> Result<()> {
        spec.validate()?;
        self.outer_share = spec.outer_share;
        self.slope_floor = spec.slope_floor;
        let total = spec.passes * rows.len();
        let mut scratch = Scratch::new(self.addends);
        let mut sums = vec![0.0; self.addends];
        let mut visit = rows.to_vec();
        let mut t = 0;
        for pass in 0..spec.passes {
            if spec.shuffle {
                visit.shuffle(&mut rng::seeded(rng::derive_seed(seed, &[pass as u64])));
            }
            for &i in &visit {
                let x = data.input(i);
                self.widen_domains(x, &mut sums)?;
                let ys = self.scale_target(data.output(i));
                let r = self.step(x, ys, spec.relaxation(t, total), &mut scratch);
                if !r.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite residual at pass {pass}, record {i}; reduce the step size"
                    )));
                }
                t += 1;
            }
            if pass + 1 < spec.passes {
                self.fit_domains(data, rows)?;
            }
        }
        if self
            .outer
            .iter()
            .chain(&self.inner)
            .any(|f| f.nodes.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Diverged("non-finite nodal value".into()));
        }
        Ok(())
    }
}

struct Scratch {
    slot: Vec<usize>,
    weight: Vec<f64>,
    slope: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            slot: vec![0; n],
            weight: vec![0.0; n],
            slope: vec![0.0; n],
        }
    }
}

#[inline]
fn inner_sum(funcs: &[PiecewiseLinear], x: &[f64]) -> f64 {
    funcs.iter().zip(x).map(|(f, &v)| f.eval(v)).sum()
}

impl Regressor for KaModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.unscale(self.scaled(x)))
    }
}

impl Learner for KaSpec {
    type Model = KaModel;

    fn fit(&self, data: &Dataset, rows: &[usize], seed: u64) -> Result<KaModel> {
        let mut model = KaModel::initialise(self, data, rows, seed)?;
        model.train(self, data, rows, rng::derive_seed(seed, &[u64::MAX]))?;
        Ok(model)
    }
}
