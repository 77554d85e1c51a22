"""Smoke test for the aniso_ebm extension module.

Build and run from the repository root:

    cargo build --release -p aniso-ebm-python
    cp target/release/libaniso_ebm.so python/aniso_ebm.so
    python3 python/smoke.py
"""

import math

import aniso_ebm as ae


def close(a, b, tol):
    return all(abs(x - y) <= tol * max(1.0, abs(y)) for x, y in zip(a, b))


def main():
    # Scale mixture: Tweedie denoiser matches the interface law.
    gsm = ae.GsmPrior([0.5, 0.5], [1.0, 16.0], 4)
    cov = ae.Covariance([0.5, 0.5, 2.0, 2.0])
    y = gsm.sample(1, seed=0)[0]
    g = gsm.grad_input(y, cov)
    mean = gsm.posterior_mean(y, cov)
    assert close(mean, [a - p * b for a, p, b in zip(y, cov.phi, g)], 1e-12)

    # Field prior: blind estimation picks the true box.
    field = ae.FieldPrior(8, 8, exponent=2.0, cutoff=0.1)
    truth = ae.Covariance.box_mask(8, 8, 4, 2.0, 1e-4)
    x = field.sample(1, seed=1)[0]
    noise = truth.apply_sqrt([math.sin(i) for i in range(64)])
    cands = [ae.Covariance.box_mask(8, 8, s, 2.0, 1e-4) for s in (2, 4, 6)]
    best, scores = ae.blind_estimate(field, [a + b for a, b in zip(x, noise)], cands)
    assert len(scores) == 3 and 0 <= best < 3

    # Learned model: a short training run, calibration and sampling.
    model = ae.EnergyModel(4, hidden=8, depth=2, seed=0)
    data = gsm.sample(256, seed=3)
    metrics = model.train(data, steps=20, batch_size=32, learning_rate=1e-3, warmup_steps=5,
                          metrics_every=5, seed=1)
    assert len(metrics) == 4 and all(math.isfinite(row[1]) for row in metrics)
    offset, stderr = ae.calibrate(model, ae.Covariance([100.0] * 4, phi_max=100.0), samples=200, seed=4)
    assert math.isfinite(offset) and stderr > 0
    samples = ae.posterior_sample(model, [y, y], cov, levels=10, seed=5)
    assert len(samples) == 2 and len(samples[0]) == 4

    for scope in ("grad", "fp_identity", "tweedie", "bregman", "mala"):
        for name, measured, passed in ae.check(scope, seed=0):
            assert passed, (name, measured)

    print("aniso_ebm smoke test passed")


if __name__ == "__main__":
    main()
