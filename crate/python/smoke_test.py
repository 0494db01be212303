"""Smoke test for the `bosecycles` extension module.

Builds the extension with cargo when it is not importable, then checks a few
values against independent closed forms.

    python python/smoke_test.py
"""

import importlib
import math
import os
import shutil
import subprocess
import sys
import sysconfig
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load():
    try:
        return importlib.import_module("bosecycles")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "bosecycles-py"], cwd=ROOT, check=True
    )
    target = os.environ.get("CARGO_TARGET_DIR", os.path.join(ROOT, "target"))
    lib = os.path.join(target, "release", "libbosecycles_py.so")
    if sys.platform == "darwin":
        lib = lib[:-3] + ".dylib"
    dest = tempfile.mkdtemp()
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy(lib, os.path.join(dest, "bosecycles" + suffix))
    sys.path.insert(0, dest)
    return importlib.import_module("bosecycles")


def close(a, b, tol, what):
    assert abs(a - b) <= tol * max(1.0, abs(b)), f"{what}: {a} vs {b}"


def main():
    bc = load()

    # Zeta values and the Bose series at fugacity one.
    close(bc.zeta(2.0), math.pi**2 / 6, 1e-13, "zeta(2)")
    close(bc.bose_series(2.0, 0.0), math.pi**2 / 6, 1e-13, "g_2(1)")
    close(bc.bose_series(1.0, 0.5), -math.log1p(-math.exp(-0.5)), 1e-13, "g_1")

    # Grand ensemble: rho_c = (4 pi beta)^(-3/2) zeta(3/2).
    beta = 1.3
    rc = bc.critical_density(beta, 3)
    close(rc, (4 * math.pi * beta) ** -1.5 * 2.612375348685488, 1e-12, "rho_c")
    mu = -0.4
    rho = bc.density(beta, mu, 3)
    close(bc.solve_mu(beta, rho, 3), mu, 1e-9, "solve_mu")
    cycles = sum(bc.grand_cycle_density(n, beta, mu, 3) for n in range(1, 400))
    close(cycles, rho, 1e-12, "cycle sum")
    assert bc.solve_mu(beta, 2 * rc, 3) == 0.0

    # Canonical table: one particle has density 1/V in its single 1-cycle.
    t1 = bc.CanonicalTable(3, 2.0, 1.0, 1)
    close(t1.cycle_densities()[0], 1 / 8, 1e-15, "N = 1")
    t = bc.CanonicalTable(3, 4.0, 1.0, 40)
    close(sum(t.cycle_densities()), t.density, 1e-12, "sum rule")
    close(t.odlro_correlation([0.0, 0.0, 0.0]), t.density, 1e-12, "sigma(0)")
    d = t.verify_decomposition([1.0, 0.0, 0.0])
    assert {"sigma", "short_cycles", "rho_inf_estimate"} <= set(d)
    assert 0.0 <= t.condensate_density() <= t.density
    try:
        t.log_y(41)
    except ValueError:
        pass
    else:
        raise AssertionError("log_y beyond N must raise")

    # Sampler on the ideal gas against the exact table.
    config = {
        "dim": 3,
        "n_particles": 4,
        "side": 2.0,
        "beta": 1.0,
        "beads": 8,
        "seed": 3,
        "schedule": {"equilibration_sweeps": 100, "measurement_sweeps": 2000, "block_sweeps": 100},
    }
    r = bc.run_pimc(config)
    close(sum(r["densities"]), 0.5, 1e-12, "sampled density")
    for n, (x, e, ex) in enumerate(zip(r["densities"], r["errors"], r["exact"]), 1):
        assert abs(x - ex) < 5 * e + 1e-12, f"cycle {n}: {x} +- {e} vs {ex}"
    assert r["chi_square"]["p_value"] > 1e-4

    # Cluster criterion: zero potential always passes, a weak Gaussian passes at large -mu.
    gauss = {"kind": "gaussian", "u0": 0.5, "range": 0.5}
    assert bc.kp_condition(1.0, -0.5, 3)["holds"]
    kp = bc.kp_condition(1.0, -0.5, 3, gauss)
    assert kp["holds"] and kp["lhs"] > 0
    free = bc.ratio_bound(1.0, -0.5, 3, 1)
    assert free["lower"] == free["upper"] == 1.0
    b = bc.ratio_bound(1.0, -0.5, 3, 1, gauss)
    assert 0.0 < b["lower"] <= b["upper"] <= 1.0
    lz = bc.truncated_log_z(1.0, -0.5, 3, None, k_max=1)
    close(lz["total"], bc.pressure(1.0, -0.5, 3), 1e-12, "first-order log Z")
    try:
        bc.kp_condition(1.0, -0.5, 3, {"kind": "gaussian", "u0": 1.0})
    except ValueError:
        pass
    else:
        raise AssertionError("malformed potential must raise")

    print("python smoke test: all checks passed")


if __name__ == "__main__":
    main()
