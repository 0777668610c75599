"""Smoke test for the fpklab extension module: python python/smoke_test.py"""

import math

import fpklab


def main():
    grid = fpklab.Grid([-12.0], [12.0], [480])
    nu = fpklab.Density.gaussian(grid, [2.0], [0.25])
    assert abs(nu.mass() - 1.0) < 1e-12
    assert abs(nu.mean()[0] - 2.0) < 1e-6

    model = fpklab.DriftModel.mean_field(0.5)
    traj = fpklab.evolve(nu, model, {"dt": 1e-3, "horizon": 4.0, "snapshot_stride": 0.1})
    mean = traj.channel("mean_0")
    assert abs(mean[-1] - 2.0 * math.exp(-0.5 * 4.0)) < 2e-2, mean[-1]

    guess = fpklab.Density.gaussian(grid, [0.0], [1.0])
    mu, info = fpklab.stationary(model, guess)
    assert info["converged"]
    tvs = [traj.snapshot(i).weighted_tv(mu) for i in range(len(traj))]
    fit = fpklab.decay_fit(traj.times, tvs, (1.0, 4.0))
    assert abs(fit["alpha2"] - 0.5) < 0.05, fit

    w1 = fpklab.w1_check(traj, mu, model)
    assert w1["min_margin"] > -1e-3, w1["min_margin"]

    growing = fpklab.DriftModel(
        {
            "variant": "convolution-kernel",
            "epsilon": 1.0,
            "base": {"kind": "zero"},
            "kernel": {"kind": "affine", "x_coeff": [[0.5]], "y_coeff": [[0.0]]},
        }
    )
    report = fpklab.classify({"kind": "linear-form", "coefficients": [1.0]}, growing, 1)
    assert report["class"] == {"class": "iplus", "lambda": 0.5}, report["class"]

    sampler = {"kind": "gaussian", "mean": [2.0], "variance": [0.25]}
    opts = {"particles": 5000, "dt": 1e-3, "horizon": 1.0, "seed": 5, "snapshot_stride": 0.5}
    snaps = fpklab.simulate(sampler, model, opts)
    assert len(snaps) == 3 and len(snaps[-1]) == 5000
    cv = fpklab.cross_check(sampler, model, grid, opts)
    assert cv["flagged"] == 0, cv["max_z"]

    try:
        fpklab.Grid([1.0], [0.0], [10])
    except fpklab.FpkError:
        pass
    else:
        raise AssertionError("inverted grid accepted")

    print("fpklab smoke test passed")


if __name__ == "__main__":
    main()
