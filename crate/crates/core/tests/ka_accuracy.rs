use ddr_core::learner::training_rmse;
use ddr_core::rng;
use ddr_core::stats::sample_mean_std;
use ddr_core::{Dataset, KaSpec, Learner, SyntheticSpec};
use rand::Rng as _;

fn relative_rmse(spec: &KaSpec, ds: &Dataset, seed: u64) -> f64 {
    let rows: Vec<usize> = (0..ds.len()).collect();
    let model = spec.fit(ds, &rows, seed).unwrap();
    let (_, sd) = sample_mean_std(ds.outputs()).unwrap();
    training_rmse(&model, ds, &rows).unwrap() / sd
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn smooth_target(n: usize, seed: u64) -> Dataset {
    let mut r = rng::seeded(seed);
    let mut ds = Dataset::with_capacity(3, n);
    for _ in 0..n {
        let x: [f64; 3] = [r.gen(), r.gen(), r.gen()];
        let y = (std::f64::consts::PI * x[0]).sin() + 0.5 * x[1] * x[1] + 0.3 * (x[2] - x[0]);
        ds.push(&x, y).unwrap();
    }
    ds
}

#[test]
fn noise_free_benchmark_is_fitted_within_five_percent() {
    for seed in 0..3 {
        let ds = SyntheticSpec::new(0.0, seed)
            .unwrap()
            .generate(10_000)
            .unwrap();
        let rel = relative_rmse(&KaSpec::default(), &ds, seed);
        assert!(rel <= 0.05, "seed {seed}: relative rmse {rel}");
    }
}

#[test]
fn doubling_nodes_does_not_hurt_on_smooth_targets() {
    let coarse = KaSpec::default();
    let fine = KaSpec {
        inner_nodes: 10,
        outer_nodes: 14,
        ..KaSpec::default()
    };
    let mut a = Vec::new();
    let mut b = Vec::new();
    for seed in 0..3 {
        let ds = smooth_target(10_000, 100 + seed);
        a.push(relative_rmse(&coarse, &ds, seed));
        b.push(relative_rmse(&fine, &ds, seed));
    }
    let (a, b) = (median(a), median(b));
    eprintln!("coarse {a:.4} fine {b:.4}");
    assert!(b <= a * 1.1 + 0.002, "coarse {a}, fine {b}");
}

#[test]
fn fitted_model_beats_best_constant() {
    let ds = SyntheticSpec::default().generate(2_000).unwrap();
    let rel = relative_rmse(&KaSpec::default(), &ds, 3);
    assert!(rel < 1.0, "relative rmse {rel}");
}
