"""Smoke test for the micromaser Python bindings.

Install first:
    pip install --no-build-isolation -e crates/micromaser-py
"""

import json
import math
import sys

import micromaser_py as mm


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    results = []

    walls = mm.wall_sequence(13, 3, 3)
    results.append(check("wall sequence", walls == ["13", "839", "48733"], str(walls)))

    phi = mm.phi_for_wall(20, 5)
    results.append(check("wall phase", abs(phi - 5 * math.pi / math.sqrt(462)) < 1e-12, f"{phi:.6f}"))

    probs = mm.parity_stationary(0.65, phi, 0, 24)
    odd_mass = sum(probs[1::2])
    results.append(check("even stationary state", abs(sum(probs) - 1) < 1e-10 and odd_mass < 1e-14))

    mean, var, qfi, enh = mm.stationary_metrics(0.65, phi, 0, 24)
    results.append(check("metrics", abs(mean - 5.58) < 0.01 and abs(qfi - 4 * var) < 1e-8, f"<n>={mean:.3f} enh={enh:.3f}"))

    rho = [[0.5, 0.5], [0.5, 0.5]]
    results.append(check("qfi of |0>+|1>", abs(mm.qfi(rho) - 1.0) < 1e-10))

    out = json.loads(mm.run("walls", "[run.walls]\nm1 = 13\nk1 = 3\n"))
    results.append(check("run walls", "839" in json.dumps(out)))

    try:
        mm.run("steady", "[model]\nc_e = 2.0\n")
        results.append(check("invalid config rejected", False))
    except ValueError as e:
        results.append(check("invalid config rejected", True, str(e)))

    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
