"""Smoke test of the ddr extension module: build it with
`pip install --no-build-isolation ./crates/py`, then run this script."""

import json
import os
import tempfile

import ddr


def main():
    data = ddr.synthetic(3000, noise=0.4, seed=2)
    assert len(data) == 3000 and data.dim == 5

    ens = ddr.build_ensemble(data, schedule=[1, 2, 3, 5], learner="ka", seed=1)
    assert len(ens) == 5
    res = ens.step_residuals
    assert len(res) == 4 and res[-1] < res[0], res

    x = [0.5] * 5
    sample = ens.predict_sample(x)
    assert sample == sorted(sample) and len(sample) == 5

    fine = ens.sliding(data, 1000, 500, learner="ka", seed=1)
    assert len(fine) == 5

    ecdf = ddr.Ecdf(sample)
    assert ecdf(max(sample)) == 1.0 and ecdf(min(sample) - 1.0) == 0.0

    oracle = ddr.oracle_sample(x, 2000, noise=0.4, seed=3)
    stat, crit, passed = ddr.ks_two_sample(sample, oracle)
    assert 0.0 <= stat <= 1.0 and crit > 0.0 and isinstance(passed, bool)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "models.ddrm")
        ens.save(path)
        again = ddr.Ensemble.load(path)
        assert again.predict_sample(x) == sample

    lines = ddr.Dataset.from_rows([[i / 100] for i in range(100)], [2 * i / 100 + 1 for i in range(100)])
    linear = ddr.build_ensemble(lines, schedule=[1], learner="linear")
    assert abs(linear.predict_sample([0.5])[0] - 2.0) < 1e-9

    mv = ddr.fit_expectation_variance(data, learner='{"kind": "ka", "passes": 2}', seed=1)
    assert mv.predict_variance(x) >= 0.0

    try:
        ddr.build_ensemble(data, schedule=[2, 3])
    except ValueError:
        pass
    else:
        raise AssertionError("a schedule not starting at 1 must be rejected")

    report = json.loads(
        ddr.run_benchmark(
            json.dumps(
                {
                    "records": 2000,
                    "probes": 3,
                    "oracle_samples": 300,
                    "schedule": [1, 2, 3],
                    "window": None,
                    "baseline_models": 3,
                }
            )
        )
    )
    assert report["summary"]["probes"] == 3
    print("ddr smoke test passed:", ens, "ks", round(stat, 3), "passed" if passed else "failed")


if __name__ == "__main__":
    main()
