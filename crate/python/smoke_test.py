"""Smoke test for the cyclegas Python bindings.

Build and install the extension first, for example with
``pip install ./crates/python`` or ``maturin develop -m crates/python/Cargo.toml``.
"""

import math
import sys

import cyclegas

GAUSSIAN = {"kind": "gaussian", "v0": 1.0, "c": 1.0}


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    zeta_3_2 = 2.6123753486854883
    nu, err = cyclegas.critical_density(1.0, 3)
    assert close(nu, zeta_3_2 * (4 * math.pi) ** -1.5, 1e-10), nu
    assert err < 1e-8

    y = cyclegas.y_of_t(2.5, q=8, lam=0.4)
    assert close(cyclegas.pi_prime(y, q=8, lam=0.4), 2.5, 1e-12)
    assert close(cyclegas.pi_star(2.5, q=8, lam=0.4), 2.5 * y - cyclegas.pi(y, q=8, lam=0.4), 1e-12)

    rho = cyclegas.free_density(-0.2)
    assert cyclegas.free_rho_short(-0.2, 64) < rho

    model = cyclegas.MeanField(1.0, 0.5, 1.0, GAUSSIAN)
    sol = model.solve()
    assert sol["regime"] == "condensed", sol["regime"]
    assert len(sol["measure"]["continuous"]) == len(model.nodes)
    sweep = model.q_sweep([2**i for i in range(13)])
    assert abs(sweep["rho_long"] - sweep["nu_c"]) <= 1e-3 * sweep["nu_c"]
    rows = model.theorem_a([4, 32])
    assert all(r["relative_gap"] <= 1e-4 for r in rows)

    dist = cyclegas.cycle_distribution(1.0, 1.0, 4.0, {"kind": "gaussian", "v0": 1.0, "c": 0.25}, dispersion=0.25)
    assert close(dist["xi"], 7.9514998796507401, 1e-12), dist["xi"]
    assert abs(sum(p for _, p in dist["p_q"]) - 1.0) < 1e-12

    report = cyclegas.run_scenario('mode = "free"\n[model]\nbeta = 1.0\n[free]\nalpha = -0.5\n')
    assert report["schema_version"] == cyclegas.SCHEMA_VERSION
    assert report["all_checks_passed"]

    try:
        cyclegas.MeanField(1.0, 0.5, 0.0, GAUSSIAN)
    except ValueError:
        pass
    else:
        raise AssertionError("zero mean-field strength was accepted")

    print(f"cyclegas smoke test passed: nu_c = {sol['measure']['condensate']:.9f}, rho_long = {sweep['rho_long']:.9f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
