"""Smoke test for the `cmat` extension module.

Build and install it first, e.g. `maturin develop -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import json
import math

import cmat


def main():
    p = cmat.CqedParams.from_cooperativity(50.0, 200.0)
    assert abs(p.kappa - 6.25) < 1e-12
    assert abs(p.cooperativity() - 200.0) < 1e-9

    lim = cmat.thresholds(p)
    assert lim["binding"] == "adiabatic"
    assert abs(lim["g_star"] - math.sqrt(200.0)) < 1e-9

    tau = 2.0 * max(lim["tau_a"], lim["tau_c"])
    omega0 = cmat.omega0_from_balancing(p, tau)
    cfg = cmat.SimConfig(sample_count=200)
    r = cmat.evolve(p, cmat.PulseSchedule(omega0, tau), cfg)
    assert r.budget_error() < 1e-6
    assert r.success_probability > 0.855, r
    assert len(r.times()) == 200 and len(r.populations()[0]) == 5

    beta, loss = cmat.beta(p, tau, omega0)
    assert abs(beta - 2.0 / math.sqrt(200.0)) < 1e-12
    assert abs((1.0 - r.norm_final) / loss - 1.0) < 0.15

    best, res = cmat.optimize_omega0(p, tau, cfg=cmat.SimConfig(sample_count=2))
    assert res.success_probability >= r.success_probability - 1e-9

    lossless = cmat.CqedParams(1.0, 0.0, 0.0)
    t0 = cmat.tau0(lossless, 0.01)
    assert abs(2.0 * 0.01 * t0 - 1.0) < 0.02

    w = cmat.eigenvalues(0.3, 0.4, 1.0)
    assert w[0] == 0.0 and abs(w[1] + w[2]) < 1e-15
    d = cmat.darkstate(0.3, 0.4, 1.0)
    assert abs(sum(abs(a) ** 2 for a in d) - 1.0) < 1e-12

    spec = {
        "mode": "truncation_study",
        "x_axis": {"min": 5, "max": 20, "count": 4, "scale": "linear"},
        "cfg": {"sample_count": 2},
    }
    out = json.loads(cmat.run_sweep(json.dumps(spec)))
    fid = [c["outcome"]["fidelity"] for c in out["grid"][0]]
    assert fid == sorted(fid) and fid[2] > 0.999, fid

    ok, rows = cmat.self_check(seed=1)
    assert ok, rows

    try:
        cmat.CqedParams(1.0, 0.1, -1.0)
    except ValueError as e:
        assert "gamma" in str(e)
    else:
        raise AssertionError("negative gamma accepted")

    print(f"cmat {cmat.__version__}: smoke test passed (P_s = {r.success_probability:.6f})")


if __name__ == "__main__":
    main()
