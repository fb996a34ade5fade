//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as part of `cargo test`. A failing criterion is reported but does not
//! fail the process unless `DDR_ACCEPTANCE_STRICT=1`, so the honest result of
//! the long statistical criteria stays visible next to the unit tests.
//! Criterion 4 needs the white wine-quality CSV at `$DDR_WINE_CSV`.

use std::path::PathBuf;
use std::time::Instant;

use rand::Rng as _;

use ddr_core::dataset::{load_csv, CsvOptions, OutputColumn};
use ddr_core::ddr::{build_ensemble, build_random_disjoint_ensemble, split_consecutive};
use ddr_core::experiments::{
    run_benchmark, run_variance, run_wine, BenchmarkConfig, BenchmarkReport, VarianceConfig,
    WineConfig,
};
use ddr_core::learner::{residuals, Learner, LinearSpec, Regressor};
use ddr_core::persist::encode_model;
use ddr_core::rng;
use ddr_core::stats::{ks_statistic, ks_two_sample, Ecdf};
use ddr_core::{Dataset, DivisionSchedule, KaSpec, LearnerSpec, SyntheticSpec};

type Check = Result<String, String>;

fn report(id: u32, name: &str, started: Instant, outcome: Check) -> bool {
    let secs = started.elapsed().as_secs_f64();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {id} {name}: {tag} ({detail}; {secs:.1} s)");
    outcome.is_ok()
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

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "degenerate".into(), |r| format!("{r:.3}"))
}

/// Two parallel lines y = 2x + 1 and y = 2x + 3, mixed 50/50.
fn parallel_lines(n: usize, seed: u64) -> Dataset {
    let mut r = rng::seeded(seed);
    let mut ds = Dataset::with_capacity(1, n);
    for i in 0..n {
        let x: f64 = r.gen();
        let b = if i % 2 == 0 { 1.0 } else { 3.0 };
        ds.push(&[x], 2.0 * x + b + r.gen_range(-0.1..0.1)).unwrap();
    }
    ds
}

fn criterion_1() -> Check {
    let started = Instant::now();
    let ds = parallel_lines(10_000, 11);
    let lin = LinearSpec::default();
    let schedule = DivisionSchedule::new(vec![1, 2]).map_err(|e| e.to_string())?;
    let ddr = build_ensemble(&ds, &schedule, &lin, 1).map_err(|e| e.to_string())?;
    let random = build_random_disjoint_ensemble(&ds, 2, &lin, 1).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed().as_secs_f64();
    let mut d: Vec<f64> = ddr.models.iter().map(|m| m.intercept).collect();
    d.sort_by(f64::total_cmp);
    let r: Vec<f64> = random.models.iter().map(|m| m.intercept).collect();
    let detail = format!(
        "DDR intercepts {:.3}, {:.3}; random {:.3}, {:.3}; build {elapsed:.2} s",
        d[0], d[1], r[0], r[1]
    );
    let ok = (d[0] - 1.0).abs() <= 0.15
        && (d[1] - 3.0).abs() <= 0.15
        && r.iter().all(|b| (b - 2.0).abs() <= 0.3)
        && elapsed < 5.0;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const SEEDS: [u64; 3] = [1, 2, 3];

fn benchmark_reports() -> Result<Vec<BenchmarkReport>, String> {
    SEEDS
        .iter()
        .map(|&seed| {
            let t = Instant::now();
            let r = run_benchmark(&BenchmarkConfig {
                seed,
                ..BenchmarkConfig::default()
            })
            .map_err(|e| e.to_string())?;
            let s = &r.summary;
            println!(
                "  benchmark seed {seed}: KS passes sliding DDR {} main DDR {} random {}; \
                 mean r {} / {}; std r {} / {}; mean std oracle {:.3} DDR {:.3} random {:.3} ({:.0} s)",
                s.ddr_ks_passes,
                s.ddr_main_ks_passes,
                s.random_ks_passes,
                fmt(s.ddr_mean_correlation),
                fmt(s.random_mean_correlation),
                fmt(s.ddr_std_correlation),
                fmt(s.random_std_correlation),
                s.oracle_mean_std,
                s.ddr_mean_std,
                s.random_mean_std,
                t.elapsed().as_secs_f64()
            );
            Ok(r)
        })
        .collect()
}

fn criterion_2(reports: &[BenchmarkReport]) -> Check {
    let pick =
        |f: fn(&BenchmarkReport) -> usize| median(reports.iter().map(|r| f(r) as f64).collect());
    let ddr = pick(|r| r.summary.ddr_ks_passes);
    let main = pick(|r| r.summary.ddr_main_ks_passes);
    let random = pick(|r| r.summary.random_ks_passes);
    let detail = format!(
        "median KS passes: DDR {ddr} (29-model main ensemble {main}), random {random}, gap {}",
        ddr - random
    );
    if ddr >= 45.0 && random <= 15.0 && ddr - random >= 30.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3(reports: &[BenchmarkReport]) -> Check {
    let med = |f: fn(&BenchmarkReport) -> Option<f64>| -> Option<f64> {
        let v: Option<Vec<f64>> = reports.iter().map(f).collect();
        v.map(median)
    };
    let ddr_mean = med(|r| r.summary.ddr_mean_correlation);
    let random_mean = med(|r| r.summary.random_mean_correlation);
    let ddr_std = med(|r| r.summary.ddr_std_correlation);
    let random_std = med(|r| r.summary.random_std_correlation);
    let ratio = median(
        reports
            .iter()
            .map(|r| r.summary.random_mean_std / r.summary.oracle_mean_std)
            .collect(),
    );
    let detail = format!(
        "median Pearson mean DDR {} random {}; std DDR {} random {}; random/oracle mean std {ratio:.3}",
        fmt(ddr_mean),
        fmt(random_mean),
        fmt(ddr_std),
        fmt(random_std)
    );
    let ge = |v: Option<f64>, t: f64| v.is_some_and(|r| r >= t);
    let random_collapsed = random_std.is_some_and(|r| r <= 0.4) || ratio <= 0.3;
    if ge(ddr_mean, 0.95) && ge(random_mean, 0.95) && ge(ddr_std, 0.8) && random_collapsed {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4() -> Check {
    let Some(path) = std::env::var_os("DDR_WINE_CSV").map(PathBuf::from) else {
        return Err("DDR_WINE_CSV is not set; the white wine-quality CSV is not bundled".into());
    };
    let started = Instant::now();
    let opts = CsvOptions {
        delimiter: b';',
        has_header: true,
        output: OutputColumn::Last,
    };
    let data = load_csv(&path, &opts).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut rmse = Vec::new();
    let mut std = Vec::new();
    for seed in SEEDS {
        let r = run_wine(
            &data,
            &WineConfig {
                seed,
                ..WineConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        rmse.push(r.rmse);
        std.push(r.mean_std);
    }
    let (rmse, std) = (median(rmse), median(std));
    let elapsed = started.elapsed().as_secs_f64();
    let detail = format!(
        "{} records; median RMSE {rmse:.3}, mean std {std:.3}; 3 runs {elapsed:.1} s",
        data.len()
    );
    if (0.68..=0.82).contains(&rmse) && (0.70..=0.82).contains(&std) && elapsed / 3.0 < 60.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Check {
    let r = run_variance(&VarianceConfig::default()).map_err(|e| e.to_string())?;
    let s = &r.summary;
    let detail = format!(
        "DDR moments: expectation {} variance {}; two-model: expectation {} variance {}",
        fmt(s.ddr_mean_correlation),
        fmt(s.ddr_variance_correlation),
        fmt(s.two_model_mean_correlation),
        fmt(s.two_model_variance_correlation)
    );
    let ge = |v: Option<f64>, t: f64| v.is_some_and(|r| r >= t);
    if ge(s.ddr_mean_correlation, 0.97)
        && ge(s.two_model_mean_correlation, 0.97)
        && ge(s.ddr_variance_correlation, 0.9)
        && ge(s.two_model_variance_correlation, 0.9)
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn uniform_sample(r: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen::<f64>()).collect()
}

fn ecdf_and_ks_properties() -> Result<(), String> {
    let mut r = rng::seeded(61);
    for trial in 0..200 {
        let n = r.gen_range(1..60);
        // coarse values force ties
        let a: Vec<f64> = (0..n).map(|_| (r.gen::<f64>() * 8.0).floor()).collect();
        let b: Vec<f64> = (0..r.gen_range(1..60))
            .map(|_| r.gen::<f64>() * 8.0)
            .collect();
        let e = Ecdf::new(a.clone()).map_err(|e| e.to_string())?;
        let mut last = 0.0;
        for k in 0..=40 {
            let p = e.eval(-1.0 + 0.25 * k as f64);
            ensure((0.0..=1.0).contains(&p) && p >= last, || {
                format!("ECDF not monotone in trial {trial}")
            })?;
            last = p;
        }
        ensure(e.eval(8.0) == 1.0 && e.eval(-0.5) == 0.0, || {
            "ECDF bounds".into()
        })?;
        let d = ks_statistic(&a, &b).map_err(|e| e.to_string())?;
        let d2 = ks_statistic(&b, &a).map_err(|e| e.to_string())?;
        ensure(d == d2 && (0.0..=1.0).contains(&d), || {
            format!("KS symmetry/range in trial {trial}")
        })?;
        ensure(
            ks_statistic(&a, &a).map_err(|e| e.to_string())? == 0.0,
            || "KS self-test".into(),
        )?;
    }
    Ok(())
}

fn ks_calibration() -> Result<f64, String> {
    let mut r = rng::seeded(62);
    let reps = 1000;
    let mut rejected = 0;
    for _ in 0..reps {
        let a = uniform_sample(&mut r, 1000);
        let b = uniform_sample(&mut r, 1000);
        if !ks_two_sample(&a, &b, 0.05).map_err(|e| e.to_string())?.pass {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / reps as f64;
    ensure((0.03..=0.07).contains(&rate), || {
        format!("KS rejection rate {rate}")
    })?;
    Ok(rate)
}

fn noisy_plane(n: usize, seed: u64, levels: f64) -> Dataset {
    let mut r = rng::seeded(seed);
    let mut ds = Dataset::with_capacity(2, n);
    for _ in 0..n {
        let x = [r.gen::<f64>(), r.gen::<f64>()];
        // quantised noise gives tied residuals
        let e = (r.gen::<f64>() * levels).floor() / levels;
        ds.push(&x, x[0] - 0.5 * x[1] + e).unwrap();
    }
    ds
}

/// Every step of a DDR run keeps clusters as contiguous blocks of the working
/// order, resorts only inside them, and breaks residual ties by the previous
/// order. Intermediate states are reproduced by running schedule prefixes.
fn partition_invariants() -> Result<usize, String> {
    let mut r = rng::seeded(63);
    let lin = LinearSpec::default();
    let mut runs = 0;
    for trial in 0..40 {
        let n = r.gen_range(8..=1000);
        let mut steps = vec![1];
        let mut w = 1;
        while steps.len() < 6 && 2 * (w + 1) <= n {
            w += r.gen_range(1..=(n / 2 - w).clamp(1, 20));
            if 2 * w > n {
                break;
            }
            steps.push(w);
        }
        let ds = noisy_plane(n, trial, 4.0);
        let seed = r.gen();
        let mut before: Vec<usize> = (0..n).collect();
        for s in 1..=steps.len() {
            let prefix = DivisionSchedule::new(steps[..s].to_vec()).map_err(|e| e.to_string())?;
            let e = build_ensemble(&ds, &prefix, &lin, seed).map_err(|e| e.to_string())?;
            let clusters = split_consecutive(n, steps[s - 1]).map_err(|e| e.to_string())?;
            ensure(clusters.len() == e.models.len(), || "model count".into())?;
            for (c, range) in clusters.iter().enumerate() {
                let mut expect = before[range.clone()].to_vec();
                let res = residuals(&e.models[c], &ds, &expect).map_err(|e| e.to_string())?;
                let mut keyed: Vec<(f64, usize)> =
                    res.into_iter().zip(expect.iter().copied()).collect();
                keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
                expect = keyed.into_iter().map(|(_, i)| i).collect();
                ensure(e.order[range.clone()] == expect[..], || {
                    format!("trial {trial} step {s} cluster {c}: not a stable in-cluster resort")
                })?;
            }
            before = e.order;
            runs += 1;
        }
    }
    Ok(runs)
}

fn linear_recovery() -> Result<(), String> {
    let mut r = rng::seeded(64);
    let mut ds = Dataset::new(4);
    let w = [1.5, -2.0, 0.25, 3.0];
    for _ in 0..200 {
        let x = [r.gen(), r.gen(), r.gen(), r.gen()];
        let y = 0.7 + w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        ds.push(&x, y).unwrap();
    }
    let rows: Vec<usize> = (0..200).collect();
    let m = LinearSpec::default()
        .fit(&ds, &rows, 0)
        .map_err(|e| e.to_string())?;
    let err = m
        .weights
        .iter()
        .zip(&w)
        .map(|(a, b)| (a - b).abs())
        .fold((m.intercept - 0.7).abs(), f64::max);
    ensure(err <= 1e-9, || format!("linear recovery error {err:e}"))
}

fn ka_gradients() -> Result<(), String> {
    let ds = SyntheticSpec::default()
        .generate(300)
        .map_err(|e| e.to_string())?;
    let rows: Vec<usize> = (0..300).collect();
    let mut m = KaSpec::default()
        .fit(&ds, &rows, 5)
        .map_err(|e| e.to_string())?;
    let mut r = rng::seeded(65);
    let h = 1e-7;
    for _ in 0..5 {
        let x: Vec<f64> = (0..5).map(|_| r.gen()).collect();
        let g = m.nodal_gradient(&x).map_err(|e| e.to_string())?;
        for (p, &gp) in g.iter().enumerate() {
            let v = m.param(p);
            m.set_param(p, v + h);
            let up = m.evaluate_scaled(&x).map_err(|e| e.to_string())?;
            m.set_param(p, v - h);
            let down = m.evaluate_scaled(&x).map_err(|e| e.to_string())?;
            m.set_param(p, v);
            let fd = (up - down) / (2.0 * h);
            ensure((fd - gp).abs() <= 1e-6 * gp.abs().max(1.0), || {
                format!("param {p}: finite difference {fd} vs analytic {}", gp)
            })?;
        }
    }
    Ok(())
}

fn reproducibility() -> Result<(), String> {
    let ds = SyntheticSpec::default()
        .generate(3000)
        .map_err(|e| e.to_string())?;
    let s = DivisionSchedule::new(vec![1, 2, 3, 5]).map_err(|e| e.to_string())?;
    let learner = LearnerSpec::default();
    let a = build_ensemble(&ds, &s, &learner, 9).map_err(|e| e.to_string())?;
    let b = build_ensemble(&ds, &s, &learner, 9).map_err(|e| e.to_string())?;
    let bytes = |e: &ddr_core::Ensemble<ddr_core::learner::Model>| {
        e.models.iter().flat_map(encode_model).collect::<Vec<u8>>()
    };
    ensure(a.order == b.order && bytes(&a) == bytes(&b), || {
        "two builds differ".into()
    })
}

/// Median-split reference: each group is sorted by the residuals of its own
/// model and cut into a lower and an upper half.
fn median_split_groups(ds: &Dataset, levels: usize) -> Vec<Vec<usize>> {
    let lin = LinearSpec::default();
    let mut groups = vec![(0..ds.len()).collect::<Vec<usize>>()];
    for level in 0..=levels {
        let mut next = Vec::new();
        for g in &groups {
            let m = lin.fit(ds, g, 0).unwrap();
            let mut keyed: Vec<(f64, usize)> = g
                .iter()
                .map(|&i| (ds.output(i) - m.predict(ds.input(i)).unwrap(), i))
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
            let sorted: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
            if level == levels {
                next.push(sorted);
            } else {
                let (lo, hi) = sorted.split_at(sorted.len() / 2);
                next.push(lo.to_vec());
                next.push(hi.to_vec());
            }
        }
        groups = next;
    }
    groups
}

fn doubling_equivalence() -> Result<(), String> {
    for seed in 0..20 {
        let ds = noisy_plane(64, 100 + seed, 1e6);
        let levels = 1 + (seed as usize % 4);
        let e = build_ensemble(
            &ds,
            &DivisionSchedule::doubling(levels as u32),
            &LinearSpec::default(),
            seed,
        )
        .map_err(|e| e.to_string())?;
        let reference: Vec<usize> = median_split_groups(&ds, levels).concat();
        ensure(e.order == reference, || {
            format!("seed {seed}, {levels} halvings: orders differ")
        })?;
    }
    Ok(())
}

fn criterion_6() -> Check {
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    let mut run = |name: &str, r: Result<String, String>| match r {
        Ok(n) => notes.push(n),
        Err(e) => failures.push(format!("{name}: {e}")),
    };
    run(
        "ecdf/ks",
        ecdf_and_ks_properties().map(|_| "ECDF and KS properties".into()),
    );
    run(
        "ks calibration",
        ks_calibration().map(|r| format!("KS rejection rate {r:.3}")),
    );
    run(
        "partition",
        partition_invariants().map(|n| format!("{n} DDR steps checked")),
    );
    run(
        "linear",
        linear_recovery().map(|_| "linear recovery".into()),
    );
    run("gradient", ka_gradients().map(|_| "KA gradients".into()));
    run(
        "reproducibility",
        reproducibility().map(|_| "bitwise reproducible".into()),
    );
    run(
        "doubling",
        doubling_equivalence().map(|_| "doubling = median split".into()),
    );
    if failures.is_empty() {
        Ok(notes.join(", "))
    } else {
        Err(failures.join("; "))
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; only a name filter
    // narrows the criteria.
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let wanted = |id: u32| filter.is_empty() || filter.iter().any(|f| f == &id.to_string());
    let mut all = true;

    if wanted(1) {
        let t = Instant::now();
        all &= report(1, "parallel-lines separation", t, criterion_1());
    }
    if wanted(2) || wanted(3) {
        let t = Instant::now();
        match benchmark_reports() {
            Ok(reports) => {
                if wanted(2) {
                    all &= report(
                        2,
                        "synthetic distribution recovery",
                        t,
                        criterion_2(&reports),
                    );
                }
                if wanted(3) {
                    all &= report(3, "moment accuracy", t, criterion_3(&reports));
                }
            }
            Err(e) => {
                all &= report(2, "synthetic distribution recovery", t, Err(e.clone()));
                all &= report(3, "moment accuracy", t, Err(e));
            }
        }
    }
    if wanted(4) {
        let t = Instant::now();
        all &= report(4, "wine quality", t, criterion_4());
    }
    if wanted(5) {
        let t = Instant::now();
        all &= report(5, "two-model variance", t, criterion_5());
    }
    if wanted(6) {
        let t = Instant::now();
        let outcome = criterion_6();
        let within = t.elapsed().as_secs_f64() < 60.0;
        all &= report(
            6,
            "property suites",
            t,
            if within {
                outcome
            } else {
                outcome.and(Err("over 60 s".into()))
            },
        );
    }

    let strict = std::env::var("DDR_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if !all && strict {
        std::process::exit(1);
    }
}
