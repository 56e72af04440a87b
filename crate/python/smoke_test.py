#!/usr/bin/env python3
"""Smoke test for the streamspc_py extension module.

Builds are picked up straight from the cargo target directory; run
`cargo build -p streamspc-py` (or --release) first, then `python3
python/smoke_test.py`.
"""

import json
import math
import os
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_extension():
    candidates = [
        os.path.join(ROOT, "target", mode, "libstreamspc_py.so")
        for mode in ("release", "debug")
    ]
    built = [p for p in candidates if os.path.exists(p)]
    if not built:
        sys.exit("no built extension found; run: cargo build -p streamspc-py")
    newest = max(built, key=os.path.getmtime)
    shim_dir = tempfile.mkdtemp(prefix="streamspc_py.")
    os.symlink(newest, os.path.join(shim_dir, "streamspc_py.so"))
    sys.path.insert(0, shim_dir)
    import streamspc_py

    return streamspc_py


def main():
    sp = import_extension()
    rng_seed = 20240818
    try:
        import numpy as np

        rng = np.random.default_rng(rng_seed)
    except ImportError:
        np = None

    # closed-form moments: nu = 0 gives exactly mean 1, second moment 3
    m0 = sp.threshold_moments(0.0)
    assert abs(m0["mean"] - 1.0) < 1e-12, m0
    assert abs(m0["second_moment"] - 3.0) < 1e-12, m0
    assert abs(m0["variance"] - 2.0) < 1e-12, m0

    # analytic limit at alpha = 0.5 is exactly p * mean(nu)
    p = 40
    nu = 0.25
    mo = sp.threshold_moments(nu)
    r0_med = sp.control_limit_analytic(p, nu, 0.5)
    assert abs(r0_med - p * mo["mean"]) < 1e-9, (r0_med, p * mo["mean"])

    # nu_from_significance inverts the chi-square(1) tail
    nu_sig = sp.nu_from_significance(0.05)
    assert 3.8 < nu_sig < 3.9, nu_sig

    # fit a model on correlated in-control data
    n, dim = 400, 12
    if np is not None:
        base = rng.standard_normal((n, dim))
        mixed = base @ np.linalg.cholesky(0.6 * np.eye(dim) + 0.4).T
        rows = mixed.tolist()
    else:
        rows = [[math.sin(i * j + 1.0) for j in range(dim)] for i in range(n)]
    model = sp.PCModel.fit(rows)
    assert model.dim == dim
    assert len(model.mean) == dim
    assert all(
        a >= b for a, b in zip(model.eigvals, model.eigvals[1:])
    ), "eigenvalues must be nonincreasing"

    # JSON and file round trips preserve the model
    clone = sp.PCModel.from_json(model.to_json())
    assert clone.to_json() == model.to_json()
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.json")
        model.save(path)
        assert sp.PCModel.load(path).to_json() == model.to_json()

    # projection standardizes: in-control scores have modest magnitude
    scores = model.project(rows[0])
    assert len(scores["raw"]) == dim and len(scores["standardized"]) == dim

    # calibrate analytically, then monitor: shifted rows must alarm
    cal = sp.calibrate(model, gamma=0.4, nu=0.1, alpha=0.002, mode="analytic")
    assert cal.mode == "analytic" and cal.r0 > 0.0
    cal2 = sp.Calibration.from_json(cal.to_json())
    assert cal2.r0 == cal.r0

    mon = sp.Monitor(model, cal, with_contributions=True)
    for row in rows[:50]:
        pt = mon.step(row)
    assert not mon.tripped, "in-control rows should not alarm"
    shift = [6.0 if j < 3 else 0.0 for j in range(dim)]
    shifted = [[v + s for v, s in zip(row, shift)] for row in rows[50:90]]
    for row in shifted:
        pt = mon.step(row)
    assert mon.tripped and mon.first_alarm is not None, "shift must alarm"
    assert len(pt["contributions"]) == dim

    # diagnosis on the shifted window recovers the shifted variables
    diag = sp.diagnose(model, shifted)
    assert diag["support"] == [0, 1, 2], diag["support"]
    assert all(mu > 0 for j, mu in enumerate(diag["mu_hat"]) if j < 3)
    assert diag["n_unconverged"] == 0

    # identity covariance: whitened and marginal domains coincide
    ident = sp.PCModel.from_known([0.0] * 6, [[float(i == j) for j in range(6)] for i in range(6)])
    window = [[2.5, 0.0, 0.0, 0.0, -3.0, 0.0]] * 8
    a = sp.diagnose(ident, window)
    b = sp.diagnose_leb(ident, window)
    assert a["support"] == b["support"] == [0, 4]

    # monitor reset clears state
    mon.reset()
    assert mon.t == 0 and not mon.tripped

    # module constants exist and parse
    json.dumps({"eig_floor": sp.DEFAULT_EIG_FLOOR_REL, "bic": sp.DEFAULT_BIC_PENALTY_FACTOR})

    print("smoke test ok")


if __name__ == "__main__":
    main()
