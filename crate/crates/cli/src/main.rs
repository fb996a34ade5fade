//! `ddr`: train divisive data resorting ensembles and run the distribution,
//! wine-quality and variance experiments.

mod run;
mod svg;

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ddr_core::dataset::{load_csv, ColumnRange, CsvOptions, OutputColumn, REFERENCE_PROBES};
use ddr_core::ddr::{build_ensemble, build_random_disjoint_ensemble, build_sliding_ensemble};
use ddr_core::experiments::{
    run_benchmark, run_variance, run_wine, BenchmarkConfig, VarianceConfig, WineConfig, WineReport,
};
use ddr_core::persist::{load_models, save_models, EnsembleKind, EnsembleManifest, FORMAT_VERSION};
use ddr_core::stats::{ks_two_sample, sample_mean_std, Ecdf};
use ddr_core::{
    DivisionSchedule, Ensemble, KaSpec, LearnerSpec, LinearSpec, NormalizationMaps,
    SlidingWindowSpec, SyntheticSpec,
};

use run::{overlay_config, RunDir};

const OUT_DIR_ENV: &str = "DDR_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "ddr",
    version,
    about = "Divisive data resorting ensembles for aleatoric uncertainty"
)]
struct Cli {
    /// Output directory for this run (one run per directory at a time)
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "ddr-out")]
    out_dir: PathBuf,

    /// JSON file with config fields; command-line flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset from the stochastic benchmark system
    Synth(SynthArgs),
    /// Train a DDR or random-disjoint ensemble on a CSV dataset
    Train(TrainArgs),
    /// Write per-probe ECDFs of a trained ensemble
    Ecdf(EcdfArgs),
    /// Compare DDR and random-disjoint ensembles against Monte-Carlo oracles
    Benchmark(BenchmarkArgs),
    /// Wine-quality protocol: validation RMSE and mean predicted std
    Wine(WineArgs),
    /// Expectation and variance accuracy of DDR moments and the two-model method
    Variance(VarianceArgs),
}

#[derive(Args, Debug, Default)]
struct LearnerArgs {
    /// Base learner: ka or linear
    #[arg(long)]
    learner: Option<String>,
    /// Final relaxation of the KA identification
    #[arg(long)]
    mu: Option<f64>,
    /// Passes through the training records per KA model
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long)]
    inner_nodes: Option<usize>,
    #[arg(long)]
    outer_nodes: Option<usize>,
    /// Number of KA outer functions (default 2m+1)
    #[arg(long)]
    addends: Option<usize>,
    /// Ridge fallback factor of the linear learner
    #[arg(long)]
    ridge: Option<f64>,
}

impl LearnerArgs {
    fn apply(&self, spec: LearnerSpec) -> Result<LearnerSpec> {
        let mut spec = match self.learner.as_deref() {
            None => spec,
            Some("ka") => match spec {
                s @ LearnerSpec::KolmogorovArnold(_) => s,
                _ => LearnerSpec::KolmogorovArnold(KaSpec::default()),
            },
            Some("linear") => match spec {
                s @ LearnerSpec::Linear(_) => s,
                _ => LearnerSpec::Linear(LinearSpec::default()),
            },
            Some(other) => bail!("unknown learner {other:?} (expected ka or linear)"),
        };
        match &mut spec {
            LearnerSpec::KolmogorovArnold(ka) => {
                ensure!(
                    self.ridge.is_none(),
                    "--ridge applies to the linear learner only"
                );
                set(&mut ka.mu, self.mu);
                set(&mut ka.passes, self.passes);
                set(&mut ka.inner_nodes, self.inner_nodes);
                set(&mut ka.outer_nodes, self.outer_nodes);
                if self.addends.is_some() {
                    ka.addends = self.addends;
                }
                ka.validate()?;
            }
            LearnerSpec::Linear(lin) => {
                ensure!(
                    self.mu.is_none()
                        && self.passes.is_none()
                        && self.inner_nodes.is_none()
                        && self.outer_nodes.is_none()
                        && self.addends.is_none(),
                    "KA options given with the linear learner"
                );
                set(&mut lin.ridge, self.ridge);
            }
        }
        Ok(spec)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_schedule(s: &str) -> Result<DivisionSchedule, String> {
    DivisionSchedule::parse(s).map_err(|e| e.to_string())
}

fn parse_window(s: &str) -> Result<SlidingWindowSpec, String> {
    let (r, d) = s.split_once(',').ok_or("expected LENGTH,STRIDE")?;
    let r = r.trim().parse().map_err(|e| format!("{e}"))?;
    let d = d.trim().parse().map_err(|e| format!("{e}"))?;
    SlidingWindowSpec::new(r, d).map_err(|e| e.to_string())
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "," | "comma" => Ok(b','),
        ";" | "semicolon" => Ok(b';'),
        "\\t" | "tab" => Ok(b'\t'),
        _ => Err(format!("unsupported delimiter {s:?}")),
    }
}

#[derive(Args, Debug)]
struct CsvArgs {
    /// Field delimiter: ',' or ';' (or 'tab')
    #[arg(long, value_parser = parse_delimiter, default_value = ",")]
    delimiter: u8,
    /// The file has no header row
    #[arg(long)]
    no_header: bool,
    /// Output column: 0-based index or header name (default: last column)
    #[arg(long)]
    output_column: Option<String>,
}

impl CsvArgs {
    fn options(&self) -> CsvOptions {
        let output = match &self.output_column {
            None => OutputColumn::Last,
            Some(s) => match s.parse::<usize>() {
                Ok(i) => OutputColumn::Index(i),
                Err(_) => OutputColumn::Name(s.clone()),
            },
        };
        CsvOptions {
            delimiter: self.delimiter,
            has_header: !self.no_header,
            output,
        }
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of records
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Perturbation amplitude (0 gives a deterministic dataset)
    #[arg(long)]
    noise: Option<f64>,
    /// Use the original experiment's dataset size
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthConfig {
    records: usize,
    noise_amplitude: f64,
    seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            records: 100_000,
            noise_amplitude: 0.4,
            seed: 1,
        }
    }
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let base = if a.paper_scale {
        SynthConfig {
            records: 1_000_000,
            ..SynthConfig::default()
        }
    } else {
        SynthConfig::default()
    };
    let mut cfg = overlay_config(base, cli.config.as_deref())?;
    set(&mut cfg.records, a.n);
    set(&mut cfg.seed, a.seed);
    set(&mut cfg.noise_amplitude, a.noise);

    let mut run = RunDir::open(&cli.out_dir)?;
    let data = SyntheticSpec::new(cfg.noise_amplitude, cfg.seed)?.generate(cfg.records)?;
    data.write_csv(&run.file("synth.csv"))?;
    println!(
        "wrote {} records to {}",
        data.len(),
        cli.out_dir.join("synth.csv").display()
    );
    run.finish("synth", &cfg)
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training data CSV
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
    /// Cluster counts per step, e.g. 1,2,3,5,7,11,17,23,29
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<DivisionSchedule>,
    /// Also train a sliding-window ensemble: LENGTH,STRIDE in records
    #[arg(long, value_parser = parse_window)]
    window: Option<SlidingWindowSpec>,
    /// Build the random-disjoint baseline instead of DDR
    #[arg(long, value_parser = ["ddr", "random"])]
    baseline: Option<String>,
    /// Number of models of the random-disjoint baseline
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train on raw inputs instead of min-max normalized ones
    #[arg(long)]
    raw_inputs: bool,
    #[command(flatten)]
    learner: LearnerArgs,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainConfig {
    data: PathBuf,
    delimiter: char,
    has_header: bool,
    output_column: Option<String>,
    kind: EnsembleKind,
    schedule: DivisionSchedule,
    random_models: usize,
    window: Option<SlidingWindowSpec>,
    learner: LearnerSpec,
    normalize_inputs: bool,
    seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            delimiter: ',',
            has_header: true,
            output_column: None,
            kind: EnsembleKind::Ddr,
            schedule: DivisionSchedule::reference(),
            random_models: 29,
            window: None,
            learner: LearnerSpec::default(),
            normalize_inputs: true,
            seed: 1,
        }
    }
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut cfg = overlay_config(TrainConfig::default(), cli.config.as_deref())?;
    cfg.data = a.data.clone();
    cfg.delimiter = a.csv.delimiter as char;
    cfg.has_header = !a.csv.no_header;
    if a.csv.output_column.is_some() {
        cfg.output_column = a.csv.output_column.clone();
    }
    match a.baseline.as_deref() {
        Some("random") => cfg.kind = EnsembleKind::RandomDisjoint,
        Some(_) => cfg.kind = EnsembleKind::Ddr,
        None => {}
    }
    set(&mut cfg.schedule, a.schedule.clone());
    set(&mut cfg.random_models, a.w);
    if a.window.is_some() {
        cfg.window = a.window;
    }
    set(&mut cfg.seed, a.seed);
    if a.raw_inputs {
        cfg.normalize_inputs = false;
    }
    cfg.learner = a.learner.apply(cfg.learner)?;

    let opts = CsvArgs {
        delimiter: cfg.delimiter as u8,
        no_header: !cfg.has_header,
        output_column: cfg.output_column.clone(),
    }
    .options();
    let raw =
        load_csv(&cfg.data, &opts).with_context(|| format!("loading {}", cfg.data.display()))?;
    let maps = if cfg.normalize_inputs {
        NormalizationMaps {
            inputs: NormalizationMaps::fit(&raw)?.inputs,
            output: ColumnRange { lo: 0.0, hi: 1.0 },
        }
    } else {
        NormalizationMaps::identity_inputs(raw.dim(), ColumnRange { lo: 0.0, hi: 1.0 })
    };
    let data = maps.apply(&raw)?;

    let mut run = RunDir::open(&cli.out_dir)?;
    let ens = match cfg.kind {
        EnsembleKind::Ddr => build_ensemble(&data, &cfg.schedule, &cfg.learner, cfg.seed)?,
        EnsembleKind::RandomDisjoint => {
            build_random_disjoint_ensemble(&data, cfg.random_models, &cfg.learner, cfg.seed)?
        }
    };
    for (i, s) in ens.steps.iter().enumerate() {
        println!(
            "step {}: {} clusters, mean |residual| {:.6}",
            i + 1,
            s.clusters,
            s.mean_abs_residual
        );
    }
    save_models(&run.file("models.ddrm"), &ens.models)?;

    let sliding_file = match cfg.window {
        Some(w) => {
            let sl = build_sliding_ensemble(&data, &ens.order, w, &cfg.learner, cfg.seed)?;
            println!("sliding window: {} models", sl.len());
            save_models(&run.file("sliding.ddrm"), &sl.models)?;
            Some("sliding.ddrm".to_string())
        }
        None => None,
    };
    let mut steps = run.csv("steps.csv", &["step", "clusters", "mean_abs_residual"])?;
    for (i, s) in ens.steps.iter().enumerate() {
        steps.row(&[(i + 1) as f64, s.clusters as f64, s.mean_abs_residual])?;
    }
    steps.finish()?;

    let manifest = EnsembleManifest {
        format_version: FORMAT_VERSION,
        kind: cfg.kind,
        schedule: match cfg.kind {
            EnsembleKind::Ddr => cfg.schedule.clone(),
            EnsembleKind::RandomDisjoint => DivisionSchedule::new(vec![1])?,
        },
        learner: cfg.learner.clone(),
        seed: cfg.seed,
        input_dim: data.dim(),
        records: data.len(),
        dataset_fingerprint: format!("{:016x}", raw.fingerprint()),
        normalization: Some(maps),
        models_file: "models.ddrm".into(),
        sliding_window: cfg.window,
        sliding_models_file: sliding_file,
        steps: ens.steps.clone(),
    };
    manifest.save(&run.file("ensemble.json"))?;
    println!(
        "ensemble of {} models written to {}",
        ens.len(),
        cli.out_dir.display()
    );
    run.finish("train", &cfg)
}

#[derive(Args, Debug)]
struct EcdfArgs {
    /// Directory written by `train`
    #[arg(long)]
    ensemble: PathBuf,
    /// CSV of probe inputs, one per row (raw units, no output column)
    #[arg(long, conflicts_with = "reference_probes")]
    probes: Option<PathBuf>,
    /// Use the four reference probes of the synthetic system
    #[arg(long)]
    reference_probes: bool,
    /// The probes file has no header row
    #[arg(long)]
    no_header: bool,
    /// Use the main ensemble even when a sliding-window ensemble exists
    #[arg(long)]
    main: bool,
    /// Compare with Monte-Carlo samples of the synthetic system
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    oracle_samples: Option<usize>,
    /// Perturbation amplitude of the oracle
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Skip the SVG overlays
    #[arg(long)]
    no_svg: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EcdfConfig {
    ensemble: PathBuf,
    probes: Vec<Vec<f64>>,
    use_sliding: bool,
    oracle: bool,
    oracle_samples: usize,
    noise_amplitude: f64,
    seed: u64,
    alpha: f64,
    svg: bool,
}

impl Default for EcdfConfig {
    fn default() -> Self {
        Self {
            ensemble: PathBuf::new(),
            probes: Vec::new(),
            use_sliding: true,
            oracle: false,
            oracle_samples: 20_000,
            noise_amplitude: 0.4,
            seed: 1,
            alpha: 0.05,
            svg: true,
        }
    }
}

fn read_probes(path: &Path, has_header: bool) -> Result<Vec<Vec<f64>>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (row, line) in text.lines().enumerate().skip(usize::from(has_header)) {
        if line.trim().is_empty() {
            continue;
        }
        let x = line
            .split([',', ';'])
            .enumerate()
            .map(|(col, f)| {
                f.trim().parse::<f64>().with_context(|| {
                    format!("{}: row {row}, column {col}: not a number", path.display())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(x);
    }
    ensure!(!out.is_empty(), "{} holds no probes", path.display());
    Ok(out)
}

fn cmd_ecdf(cli: &Cli, a: &EcdfArgs) -> Result<()> {
    let mut cfg = overlay_config(EcdfConfig::default(), cli.config.as_deref())?;
    cfg.ensemble = a.ensemble.clone();
    if let Some(p) = &a.probes {
        cfg.probes = read_probes(p, !a.no_header)?;
    } else if a.reference_probes {
        cfg.probes = REFERENCE_PROBES.iter().map(|p| p.to_vec()).collect();
    }
    ensure!(
        !cfg.probes.is_empty(),
        "give --probes FILE or --reference-probes"
    );
    if a.main {
        cfg.use_sliding = false;
    }
    cfg.oracle |= a.oracle;
    set(&mut cfg.oracle_samples, a.oracle_samples);
    set(&mut cfg.noise_amplitude, a.noise);
    set(&mut cfg.seed, a.seed);
    set(&mut cfg.alpha, a.alpha);
    if a.no_svg {
        cfg.svg = false;
    }

    let manifest = EnsembleManifest::load(&cfg.ensemble.join("ensemble.json"))?;
    let file = match (&manifest.sliding_models_file, cfg.use_sliding) {
        (Some(f), true) => f.clone(),
        _ => manifest.models_file.clone(),
    };
    let ens = Ensemble {
        models: load_models(&cfg.ensemble.join(&file))?,
        order: Vec::new(),
        steps: Vec::new(),
    };
    let system = SyntheticSpec::new(cfg.noise_amplitude, cfg.seed)?;

    let mut run = RunDir::open(&cli.out_dir)?;
    let mut summary = run.csv(
        "ecdf_summary.csv",
        &[
            "probe",
            "models",
            "mean",
            "std",
            "oracle_mean",
            "oracle_std",
            "ks_statistic",
            "ks_critical",
            "ks_pass",
        ],
    )?;
    for (p, x) in cfg.probes.iter().enumerate() {
        ensure!(
            x.len() == manifest.input_dim,
            "probe {p} has {} inputs, the ensemble expects {}",
            x.len(),
            manifest.input_dim
        );
        let xn = match &manifest.normalization {
            Some(m) => m.normalize_input(x),
            None => x.clone(),
        };
        let sample = ens.predict_sample(&xn)?;
        let ecdf = Ecdf::new(sample.clone())?;
        ecdf.write_csv(&run.file(&format!("ecdf_{p}.csv")))?;
        let (mean, std) = moments(&sample);
        let mut row = vec![p as f64, sample.len() as f64, mean, std];
        let oracle = if cfg.oracle {
            let o = system.oracle_sample(
                x,
                cfg.oracle_samples,
                ddr_core::rng::derive_seed(cfg.seed, &[p as u64]),
            )?;
            Ecdf::new(o.clone())?.write_csv(&run.file(&format!("oracle_{p}.csv")))?;
            let (om, os) = moments(&o);
            let ks = ks_two_sample(&sample, &o, cfg.alpha)?;
            row.extend([
                om,
                os,
                ks.statistic,
                ks.critical,
                f64::from(u8::from(ks.pass)),
            ]);
            println!(
                "probe {p}: D = {:.4} (critical {:.4}) {}",
                ks.statistic,
                ks.critical,
                if ks.pass { "pass" } else { "fail" }
            );
            Some(o)
        } else {
            row.extend([f64::NAN; 5]);
            None
        };
        summary.row_str(
            &row.iter()
                .map(|v| {
                    if v.is_nan() {
                        String::new()
                    } else {
                        v.to_string()
                    }
                })
                .collect::<Vec<_>>()
                .iter()
                .map(String::as_str)
                .collect::<Vec<_>>(),
        )?;
        if cfg.svg {
            let mut series = vec![svg::Series {
                label: "ensemble",
                color: "gray",
                values: ecdf.values(),
            }];
            if let Some(o) = &oracle {
                series.push(svg::Series {
                    label: "Monte-Carlo",
                    color: "black",
                    values: o,
                });
            }
            let text = svg::ecdf_overlay(&format!("probe {p}"), &series);
            let path = run.file(&format!("ecdf_{p}.svg"));
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    summary.finish()?;
    run.finish("ecdf", &cfg)
}

fn moments(sample: &[f64]) -> (f64, f64) {
    match sample_mean_std(sample) {
        Ok(m) => m,
        Err(_) => (sample[0], 0.0),
    }
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Original experiment settings (a million records; long run)
    #[arg(long)]
    paper_scale: bool,
    /// Number of synthetic training records
    #[arg(long)]
    n: Option<usize>,
    /// Number of random probe inputs
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    oracle_samples: Option<usize>,
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<DivisionSchedule>,
    /// Sliding window LENGTH,STRIDE for the fine DDR ECDF
    #[arg(long, value_parser = parse_window, conflicts_with = "no_window")]
    window: Option<SlidingWindowSpec>,
    /// Test the main DDR ensemble instead of a sliding-window one
    #[arg(long)]
    no_window: bool,
    /// Size of the random-disjoint baseline
    #[arg(long)]
    baseline_models: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the SVG overlays
    #[arg(long)]
    no_svg: bool,
    #[command(flatten)]
    learner: LearnerArgs,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "degenerate".to_string(), |r| format!("{r:.4}"))
}

fn cmd_benchmark(cli: &Cli, a: &BenchmarkArgs) -> Result<()> {
    let base = if a.paper_scale {
        BenchmarkConfig::paper_scale()
    } else {
        BenchmarkConfig::default()
    };
    let mut cfg = overlay_config(base, cli.config.as_deref())?;
    set(&mut cfg.records, a.n);
    set(&mut cfg.probes, a.points);
    set(&mut cfg.oracle_samples, a.oracle_samples);
    set(&mut cfg.schedule, a.schedule.clone());
    if a.window.is_some() {
        cfg.window = a.window;
    }
    if a.no_window {
        cfg.window = None;
    }
    set(&mut cfg.baseline_models, a.baseline_models);
    set(&mut cfg.noise_amplitude, a.noise);
    set(&mut cfg.alpha, a.alpha);
    set(&mut cfg.seed, a.seed);
    cfg.learner = a.learner.apply(cfg.learner)?;
    cfg.validate()?;

    let mut run = RunDir::open(&cli.out_dir)?;
    let started = std::time::Instant::now();
    let report = run_benchmark(&cfg)?;
    let s = &report.summary;
    println!(
        "KS passes: DDR {}/{} ({} models), main DDR {}/{} ({} models), random {}/{} ({} models)",
        s.ddr_ks_passes,
        s.probes,
        report
            .sliding_models
            .max(report.ddr_models * usize::from(report.sliding_models == 0)),
        s.ddr_main_ks_passes,
        s.probes,
        report.ddr_models,
        s.random_ks_passes,
        s.probes,
        report.random_models
    );
    println!(
        "mean correlation: DDR {} random {}; std correlation: DDR {} random {}",
        opt(s.ddr_mean_correlation),
        opt(s.random_mean_correlation),
        opt(s.ddr_std_correlation),
        opt(s.random_std_correlation)
    );
    println!(
        "mean std: oracle {:.4} DDR {:.4} random {:.4}",
        s.oracle_mean_std, s.ddr_mean_std, s.random_mean_std
    );
    eprintln!("elapsed {:.1} s", started.elapsed().as_secs_f64());

    run.write_json("summary.json", &report)?;
    let mut probes = run.csv(
        "probes.csv",
        &[
            "probe",
            "x1",
            "x2",
            "x3",
            "x4",
            "x5",
            "oracle_mean",
            "oracle_std",
            "ddr_mean",
            "ddr_std",
            "ddr_ks_statistic",
            "ddr_ks_pass",
            "random_mean",
            "random_std",
            "random_ks_statistic",
            "random_ks_pass",
            "fine_ks_statistic",
            "fine_ks_pass",
        ],
    )?;
    for (p, r) in report.probes.iter().enumerate() {
        let fine = r.ddr_distribution();
        let mut row = vec![p as f64];
        row.extend(&r.x);
        row.extend([
            r.oracle_mean,
            r.oracle_std,
            r.ddr.mean,
            r.ddr.std,
            r.ddr.ks.statistic,
            f64::from(u8::from(r.ddr.ks.pass)),
            r.random.mean,
            r.random.std,
            r.random.ks.statistic,
            f64::from(u8::from(r.random.ks.pass)),
            fine.ks.statistic,
            f64::from(u8::from(fine.ks.pass)),
        ]);
        probes.row(&row)?;
    }
    probes.finish()?;

    for (p, r) in report.reference.iter().enumerate() {
        let k = p + 1;
        Ecdf::new(r.ensemble.clone())?
            .write_csv(&run.file(&format!("reference_{k}_ensemble.csv")))?;
        Ecdf::new(r.oracle.clone())?.write_csv(&run.file(&format!("reference_{k}_oracle.csv")))?;
        if !a.no_svg {
            let text = svg::ecdf_overlay(
                &format!("X{k} = {:?}", r.x),
                &[
                    svg::Series {
                        label: "DDR",
                        color: "gray",
                        values: &r.ensemble,
                    },
                    svg::Series {
                        label: "Monte-Carlo",
                        color: "black",
                        values: &r.oracle,
                    },
                ],
            );
            let path = run.file(&format!("reference_{k}.svg"));
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    run.finish("benchmark", &cfg)
}

#[derive(Args, Debug)]
struct WineArgs {
    /// Wine-quality CSV (UCI layout: ';'-separated, header, quality last)
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_delimiter, default_value = ";")]
    delimiter: u8,
    /// Split seeds; the report includes the median over them
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<DivisionSchedule>,
    #[command(flatten)]
    learner: LearnerArgs,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct WineRunConfig {
    data: PathBuf,
    delimiter: char,
    seeds: Vec<u64>,
    experiment: WineConfig,
}

impl Default for WineRunConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            delimiter: ';',
            seeds: vec![1, 2, 3],
            experiment: WineConfig::default(),
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn cmd_wine(cli: &Cli, a: &WineArgs) -> Result<()> {
    let mut cfg = overlay_config(WineRunConfig::default(), cli.config.as_deref())?;
    cfg.data = a.data.clone();
    cfg.delimiter = a.delimiter as char;
    set(&mut cfg.seeds, a.seeds.clone());
    set(&mut cfg.experiment.train_fraction, a.train_fraction);
    set(&mut cfg.experiment.schedule, a.schedule.clone());
    cfg.experiment.learner = a.learner.apply(cfg.experiment.learner)?;
    ensure!(!cfg.seeds.is_empty(), "need at least one split seed");

    let opts = CsvOptions {
        delimiter: cfg.delimiter as u8,
        has_header: true,
        output: OutputColumn::Last,
    };
    let data =
        load_csv(&cfg.data, &opts).with_context(|| format!("loading {}", cfg.data.display()))?;
    println!("{} records, {} inputs", data.len(), data.dim());

    let mut run = RunDir::open(&cli.out_dir)?;
    let reports = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let r = run_wine(
                &data,
                &WineConfig {
                    seed,
                    ..cfg.experiment.clone()
                },
            )?;
            println!(
                "seed {seed}: RMSE {:.4}, mean std {:.4}",
                r.rmse, r.mean_std
            );
            Ok(r)
        })
        .collect::<Result<Vec<WineReport>>>()?;
    let rmse = median(reports.iter().map(|r| r.rmse).collect());
    let std = median(reports.iter().map(|r| r.mean_std).collect());
    println!("median: RMSE {rmse:.4}, mean std {std:.4}");
    run.write_json(
        "wine.json",
        &serde_json::json!({ "median_rmse": rmse, "median_mean_std": std, "runs": reports }),
    )?;
    run.finish("wine", &cfg)
}

#[derive(Args, Debug)]
struct VarianceArgs {
    /// Original experiment scale (a million records)
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    oracle_samples: Option<usize>,
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<DivisionSchedule>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    learner: LearnerArgs,
}

fn cmd_variance(cli: &Cli, a: &VarianceArgs) -> Result<()> {
    let base = if a.paper_scale {
        VarianceConfig::paper_scale()
    } else {
        VarianceConfig::default()
    };
    let mut cfg = overlay_config(base, cli.config.as_deref())?;
    set(&mut cfg.records, a.n);
    set(&mut cfg.probes, a.points);
    set(&mut cfg.oracle_samples, a.oracle_samples);
    set(&mut cfg.schedule, a.schedule.clone());
    set(&mut cfg.noise_amplitude, a.noise);
    set(&mut cfg.seed, a.seed);
    cfg.learner = a.learner.apply(cfg.learner)?;

    let mut run = RunDir::open(&cli.out_dir)?;
    let report = run_variance(&cfg)?;
    let s = &report.summary;
    println!(
        "DDR ensemble: expectation {} variance {}",
        opt(s.ddr_mean_correlation),
        opt(s.ddr_variance_correlation)
    );
    println!(
        "two-model:    expectation {} variance {} (clamped {:.2}%)",
        opt(s.two_model_mean_correlation),
        opt(s.two_model_variance_correlation),
        100.0 * s.clamped_fraction
    );
    run.write_json("variance.json", &report)?;
    let mut probes = run.csv(
        "variance_probes.csv",
        &[
            "probe",
            "x1",
            "x2",
            "x3",
            "x4",
            "x5",
            "oracle_mean",
            "oracle_variance",
            "ddr_mean",
            "ddr_variance",
            "two_model_mean",
            "two_model_variance",
        ],
    )?;
    for (p, r) in report.probes.iter().enumerate() {
        let mut row = vec![p as f64];
        row.extend(&r.x);
        row.extend([
            r.oracle_mean,
            r.oracle_variance,
            r.ddr_mean,
            r.ddr_variance,
            r.two_model_mean,
            r.two_model_variance,
        ]);
        probes.row(&row)?;
    }
    probes.finish()?;
    run.finish("variance", &cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth(a) => cmd_synth(&cli, a),
        Command::Train(a) => cmd_train(&cli, a),
        Command::Ecdf(a) => cmd_ecdf(&cli, a),
        Command::Benchmark(a) => cmd_benchmark(&cli, a),
        Command::Wine(a) => cmd_wine(&cli, a),
        Command::Variance(a) => cmd_variance(&cli, a),
    }
}
