//! End-to-end experiment drivers: distribution recovery on the synthetic
//! system, the wine-quality protocol and the variance comparison.
//!
//! Every driver is a pure function of its config; all randomness is derived
//! from the config's master seed.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, NormalizationMaps, SyntheticSpec, REFERENCE_PROBES, SYNTHETIC_DIM};
use crate::ddr::{
    build_ensemble, build_random_disjoint_ensemble, build_sliding_ensemble,
    fit_expectation_variance, DivisionSchedule, Ensemble, SlidingWindowSpec, StepReport,
};
use crate::error::{Error, Result};
use crate::learner::{LearnerSpec, Model};
use crate::rng;
use crate::stats::{self, KsOutcome};

const TAG_DATA: u64 = 1;
const TAG_LEARNER: u64 = 2;
const TAG_BASELINE: u64 = 3;
const TAG_PROBES: u64 = 4;
const TAG_ORACLE: u64 = 5;
const TAG_SLIDING: u64 = 6;
const TAG_SPLIT: u64 = 7;

/// Pearson correlation, or `None` when either vector is constant.
pub fn correlation(u: &[f64], v: &[f64]) -> Result<Option<f64>> {
    match stats::pearson(u, v) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Mean and standard deviation of a sample; a single value has std 0.
fn moments(sample: &[f64]) -> Result<(f64, f64)> {
    if sample.len() == 1 {
        return Ok((sample[0], 0.0));
    }
    stats::sample_mean_std(sample)
}

fn random_probes(count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(seed);
    (0..count)
        .map(|_| (0..SYNTHETIC_DIM).map(|_| r.gen()).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub records: usize,
    pub noise_amplitude: f64,
    pub schedule: DivisionSchedule,
    pub learner: LearnerSpec,
    /// Fine-ECDF ensemble over the final order; `None` uses the main
    /// ensemble for the distribution test.
    pub window: Option<SlidingWindowSpec>,
    /// Size of the random-disjoint baseline ensemble.
    pub baseline_models: usize,
    pub probes: usize,
    pub oracle_samples: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            records: 200_000,
            noise_amplitude: 0.4,
            schedule: DivisionSchedule::reference(),
            learner: LearnerSpec::default(),
            window: Some(SlidingWindowSpec {
                length: 6_000,
                stride: 1_000,
            }),
            baseline_models: 29,
            probes: 100,
            oracle_samples: 20_000,
            alpha: 0.05,
            seed: 1,
        }
    }
}

impl BenchmarkConfig {
    /// Settings of the original large experiment: a million records,
    /// 30000/5000 windows and 10^5-point oracles.
    pub fn paper_scale() -> Self {
        Self {
            records: 1_000_000,
            window: Some(SlidingWindowSpec {
                length: 30_000,
                stride: 5_000,
            }),
            oracle_samples: 100_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate_for(self.records)?;
        if self.probes == 0 || self.oracle_samples == 0 {
            return Err(Error::InvalidParameter(
                "probes and oracle samples must be >= 1".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if let Some(w) = self.window {
            SlidingWindowSpec::new(w.length, w.stride)?.windows(self.records)?;
        }
        SyntheticSpec::new(self.noise_amplitude, 0)?;
        Ok(())
    }
}

/// Comparison of one ensemble with the oracle at one probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAtProbe {
    pub mean: f64,
    pub std: f64,
    pub ks: KsOutcome,
}

impl EnsembleAtProbe {
    fn new(sample: &[f64], oracle: &[f64], alpha: f64) -> Result<Self> {
        let (mean, std) = moments(sample)?;
        Ok(Self {
            mean,
            std,
            ks: stats::ks_two_sample(sample, oracle, alpha)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub x: Vec<f64>,
    pub oracle_mean: f64,
    pub oracle_std: f64,
    /// Main DDR ensemble.
    pub ddr: EnsembleAtProbe,
    /// Sliding-window ensemble, when configured.
    pub sliding: Option<EnsembleAtProbe>,
    pub random: EnsembleAtProbe,
}

impl ProbeResult {
    /// The ensemble used for the DDR distribution test: the fine
    /// sliding-window ensemble when present.
    pub fn ddr_distribution(&self) -> &EnsembleAtProbe {
        self.sliding.as_ref().unwrap_or(&self.ddr)
    }
}

/// Samples kept for plotting at one of the reference probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSample {
    pub x: Vec<f64>,
    pub ensemble: Vec<f64>,
    pub oracle: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub probes: usize,
    /// Probes where the DDR distribution (sliding-window ensemble if
    /// configured) passes the KS test.
    pub ddr_ks_passes: usize,
    /// Same for the main DDR ensemble.
    pub ddr_main_ks_passes: usize,
    pub random_ks_passes: usize,
    pub ddr_mean_correlation: Option<f64>,
    pub random_mean_correlation: Option<f64>,
    pub ddr_std_correlation: Option<f64>,
    pub random_std_correlation: Option<f64>,
    pub oracle_mean_std: f64,
    pub ddr_mean_std: f64,
    pub random_mean_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub steps: Vec<StepReport>,
    pub ddr_models: usize,
    pub sliding_models: usize,
    pub random_models: usize,
    pub summary: BenchmarkSummary,
    pub probes: Vec<ProbeResult>,
    #[serde(skip)]
    pub reference: Vec<ReferenceSample>,
}

fn summarize(rows: &[ProbeResult]) -> Result<BenchmarkSummary> {
    let col = |f: &dyn Fn(&ProbeResult) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let oracle_mean = col(&|r| r.oracle_mean);
    let oracle_std = col(&|r| r.oracle_std);
    let ddr_mean = col(&|r| r.ddr.mean);
    let ddr_std = col(&|r| r.ddr.std);
    let random_mean = col(&|r| r.random.mean);
    let random_std = col(&|r| r.random.std);
    let corr = |u: &[f64], v: &[f64]| {
        if u.len() < 2 {
            Ok(None)
        } else {
            correlation(u, v)
        }
    };
    Ok(BenchmarkSummary {
        probes: rows.len(),
        ddr_ks_passes: rows.iter().filter(|r| r.ddr_distribution().ks.pass).count(),
        ddr_main_ks_passes: rows.iter().filter(|r| r.ddr.ks.pass).count(),
        random_ks_passes: rows.iter().filter(|r| r.random.ks.pass).count(),
        ddr_mean_correlation: corr(&ddr_mean, &oracle_mean)?,
        random_mean_correlation: corr(&random_mean, &oracle_mean)?,
        ddr_std_correlation: corr(&ddr_std, &oracle_std)?,
        random_std_correlation: corr(&random_std, &oracle_std)?,
        oracle_mean_std: stats::mean(&oracle_std)?,
        ddr_mean_std: stats::mean(&ddr_std)?,
        random_mean_std: stats::mean(&random_std)?,
    })
}

/// Trains DDR, sliding-window and random-disjoint ensembles on synthetic
/// data and compares them with Monte-Carlo oracles at random probes.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let system = SyntheticSpec::new(cfg.noise_amplitude, rng::derive_seed(cfg.seed, &[TAG_DATA]))?;
    let data = system.generate(cfg.records)?;

    let ddr = build_ensemble(
        &data,
        &cfg.schedule,
        &cfg.learner,
        rng::derive_seed(cfg.seed, &[TAG_LEARNER]),
    )?;
    let sliding = match cfg.window {
        Some(w) => Some(build_sliding_ensemble(
            &data,
            &ddr.order,
            w,
            &cfg.learner,
            rng::derive_seed(cfg.seed, &[TAG_SLIDING]),
        )?),
        None => None,
    };
    let random = build_random_disjoint_ensemble(
        &data,
        cfg.baseline_models,
        &cfg.learner,
        rng::derive_seed(cfg.seed, &[TAG_BASELINE]),
    )?;

    let probes = random_probes(cfg.probes, rng::derive_seed(cfg.seed, &[TAG_PROBES]));
    let mut rows = Vec::with_capacity(probes.len());
    for (p, x) in probes.into_iter().enumerate() {
        let oracle = system.oracle_sample(
            &x,
            cfg.oracle_samples,
            rng::derive_seed(cfg.seed, &[TAG_ORACLE, p as u64]),
        )?;
        let (oracle_mean, oracle_std) = moments(&oracle)?;
        let at =
            |e: &Ensemble<Model>| EnsembleAtProbe::new(&e.predict_sample(&x)?, &oracle, cfg.alpha);
        rows.push(ProbeResult {
            oracle_mean,
            oracle_std,
            ddr: at(&ddr)?,
            sliding: sliding.as_ref().map(at).transpose()?,
            random: at(&random)?,
            x,
        });
    }

    let fine = sliding.as_ref().unwrap_or(&ddr);
    let reference = REFERENCE_PROBES
        .iter()
        .enumerate()
        .map(|(p, x)| {
            Ok(ReferenceSample {
                x: x.to_vec(),
                ensemble: fine.predict_sample(x)?,
                oracle: system.oracle_sample(
                    x,
                    cfg.oracle_samples,
                    rng::derive_seed(cfg.seed, &[TAG_ORACLE, u64::MAX - p as u64]),
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BenchmarkReport {
        config: cfg.clone(),
        steps: ddr.steps.clone(),
        ddr_models: ddr.len(),
        sliding_models: sliding.as_ref().map_or(0, Ensemble::len),
        random_models: random.len(),
        summary: summarize(&rows)?,
        probes: rows,
        reference,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WineConfig {
    /// Fraction of records used for training; the rest is validation.
    pub train_fraction: f64,
    pub schedule: DivisionSchedule,
    pub learner: LearnerSpec,
    pub seed: u64,
}

impl Default for WineConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.85,
            schedule: DivisionSchedule::new(vec![1, 2, 3, 5, 7, 11]).expect("valid schedule"),
            learner: LearnerSpec::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WineReport {
    pub config: WineConfig,
    pub train_records: usize,
    pub validation_records: usize,
    pub steps: Vec<StepReport>,
    /// RMSE of ensemble-mean predictions on the validation split, in
    /// original output units.
    pub rmse: f64,
    /// Mean over validation records of the ensemble sample std.
    pub mean_std: f64,
    pub normalization: NormalizationMaps,
}

/// Seeded shuffle split into `(train, validation)` row indices.
pub fn train_validation_split(
    n: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let cut = (n as f64 * train_fraction).round() as usize;
    if cut == 0 || cut == n {
        return Err(Error::InvalidParameter(format!(
            "split of {n} records leaves an empty side"
        )));
    }
    let validation = idx.split_off(cut);
    Ok((idx, validation))
}

/// Splits, normalizes on the training part, trains a DDR ensemble and
/// scores ensemble means and spreads on the validation part.
pub fn run_wine(data: &Dataset, cfg: &WineConfig) -> Result<WineReport> {
    let (train_idx, valid_idx) = train_validation_split(
        data.len(),
        cfg.train_fraction,
        rng::derive_seed(cfg.seed, &[TAG_SPLIT]),
    )?;
    let train = data.select(&train_idx);
    let valid = data.select(&valid_idx);
    let maps = NormalizationMaps::fit(&train)?;
    let train_n = maps.apply(&train)?;
    cfg.schedule.validate_for(train_n.len())?;
    let ens = build_ensemble(
        &train_n,
        &cfg.schedule,
        &cfg.learner,
        rng::derive_seed(cfg.seed, &[TAG_LEARNER]),
    )?;

    let mut means = Vec::with_capacity(valid.len());
    let mut stds = Vec::with_capacity(valid.len());
    for (x, _) in valid.records() {
        let sample: Vec<f64> = ens
            .predict_sample(&maps.normalize_input(x))?
            .into_iter()
            .map(|v| maps.denormalize_output(v))
            .collect();
        let (m, s) = moments(&sample)?;
        means.push(m);
        stds.push(s);
    }
    Ok(WineReport {
        config: cfg.clone(),
        train_records: train.len(),
        validation_records: valid.len(),
        steps: ens.steps,
        rmse: stats::rmse(&means, valid.outputs())?,
        mean_std: stats::mean(&stds)?,
        normalization: maps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceConfig {
    pub records: usize,
    pub noise_amplitude: f64,
    pub schedule: DivisionSchedule,
    pub learner: LearnerSpec,
    pub probes: usize,
    pub oracle_samples: usize,
    pub seed: u64,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        Self {
            records: 100_000,
            noise_amplitude: 0.4,
            schedule: DivisionSchedule::reference(),
            learner: LearnerSpec::default(),
            probes: 100,
            oracle_samples: 20_000,
            seed: 1,
        }
    }
}

impl VarianceConfig {
    pub fn paper_scale() -> Self {
        Self {
            records: 1_000_000,
            oracle_samples: 100_000,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceProbe {
    pub x: Vec<f64>,
    pub oracle_mean: f64,
    pub oracle_variance: f64,
    pub ddr_mean: f64,
    pub ddr_variance: f64,
    pub two_model_mean: f64,
    pub two_model_variance: f64,
}

/// Correlations with the oracle; `None` marks a constant vector, for
/// instance the zero oracle variance of noise-free data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceSummary {
    pub ddr_mean_correlation: Option<f64>,
    pub ddr_variance_correlation: Option<f64>,
    pub two_model_mean_correlation: Option<f64>,
    pub two_model_variance_correlation: Option<f64>,
    /// Fraction of training records where the variance model went negative.
    pub clamped_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub config: VarianceConfig,
    pub steps: Vec<StepReport>,
    pub summary: VarianceSummary,
    pub probes: Vec<VarianceProbe>,
}

/// Moments from a DDR ensemble and from the expectation/variance pair,
/// both against Monte-Carlo oracles at random probes.
pub fn run_variance(cfg: &VarianceConfig) -> Result<VarianceReport> {
    cfg.schedule.validate_for(cfg.records)?;
    if cfg.probes == 0 || cfg.oracle_samples < 2 {
        return Err(Error::InvalidParameter(
            "need >= 1 probe and >= 2 oracle samples".into(),
        ));
    }
    let system = SyntheticSpec::new(cfg.noise_amplitude, rng::derive_seed(cfg.seed, &[TAG_DATA]))?;
    let data = system.generate(cfg.records)?;
    let learner_seed = rng::derive_seed(cfg.seed, &[TAG_LEARNER]);
    let ens = build_ensemble(&data, &cfg.schedule, &cfg.learner, learner_seed)?;
    let ev = fit_expectation_variance(
        &data,
        &cfg.learner,
        rng::derive_seed(learner_seed, &[u64::MAX]),
    )?;

    let mut rows = Vec::with_capacity(cfg.probes);
    for (p, x) in random_probes(cfg.probes, rng::derive_seed(cfg.seed, &[TAG_PROBES]))
        .into_iter()
        .enumerate()
    {
        let oracle = system.oracle_sample(
            &x,
            cfg.oracle_samples,
            rng::derive_seed(cfg.seed, &[TAG_ORACLE, p as u64]),
        )?;
        let (om, os) = moments(&oracle)?;
        let (dm, ds) = moments(&ens.predict_sample(&x)?)?;
        rows.push(VarianceProbe {
            oracle_mean: om,
            oracle_variance: os * os,
            ddr_mean: dm,
            ddr_variance: ds * ds,
            two_model_mean: ev.predict_mean(&x)?,
            two_model_variance: ev.predict_variance(&x)?,
            x,
        });
    }

    let col = |f: fn(&VarianceProbe) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let corr = |a: &[f64], b: &[f64]| {
        if a.len() < 2 {
            Ok(None)
        } else {
            correlation(a, b)
        }
    };
    let om = col(|r| r.oracle_mean);
    let ov = col(|r| r.oracle_variance);
    let summary = VarianceSummary {
        ddr_mean_correlation: corr(&col(|r| r.ddr_mean), &om)?,
        ddr_variance_correlation: corr(&col(|r| r.ddr_variance), &ov)?,
        two_model_mean_correlation: corr(&col(|r| r.two_model_mean), &om)?,
        two_model_variance_correlation: corr(&col(|r| r.two_model_variance), &ov)?,
        clamped_fraction: ev.clamped_fraction,
    };
    Ok(VarianceReport {
        config: cfg.clone(),
        steps: ens.steps,
        summary,
        probes: rows,
    })
}
