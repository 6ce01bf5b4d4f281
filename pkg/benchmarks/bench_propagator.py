"""Compare the compiled propagator backend against the pure-Python fallback.

Runs the same workload (halo family continuation plus a batch of manifold
propagations for the Saturn-Enceladus system) in two subprocesses, one with
``ILMTOUR_PURE_PYTHON=1`` and one without, and reports wall times.  The
backend is chosen at import time, hence the subprocess split.

Usage::

    python3 benchmarks/bench_propagator.py [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKLOAD = r"""
import json, time
import numpy as np
from ilmtour.bodies import system_for
from ilmtour.cr3bp import Cr3bpModel
from ilmtour.halo import continue_family, seed_manifolds
from ilmtour.propagator import backend_name, propagate, IntegratorConfig

model = Cr3bpModel(system_for("SEn"))

t0 = time.perf_counter()
fam = continue_family(model, "L2", "northern", count=12)
t_family = time.perf_counter() - t0

orb = fam.members[-1]
seeds = seed_manifolds(model, orb, n_points=12, stability="unstable")
cfg = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-12)
t0 = time.perf_counter()
for s in seeds:
    propagate(model, s.state, (0.0, 4.0), config=cfg)
t_manifold = time.perf_counter() - t0

print(json.dumps({"backend": backend_name(),
                  "t_family_s": t_family,
                  "t_manifold_s": t_manifold}))
"""


def run_once(pure_python):
    env = dict(os.environ)
    if pure_python:
        env["ILMTOUR_PURE_PYTHON"] = "1"
    else:
        env.pop("ILMTOUR_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", WORKLOAD], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3,
                    help="repetitions per backend; best time is reported")
    args = ap.parse_args()

    results = {}
    for pure in (False, True):
        best = None
        for _ in range(args.repeat):
            r = run_once(pure)
            if best is None or r["t_family_s"] + r["t_manifold_s"] < \
                    best["t_family_s"] + best["t_manifold_s"]:
                best = r
        results[best["backend"]] = best

    if "compiled" not in results:
        print("compiled backend unavailable; only the python fallback ran")
        print(json.dumps(results, indent=2))
        return

    c, p = results["compiled"], results["python"]
    print(f"{'workload':<22}{'compiled':>12}{'python':>12}{'speedup':>10}")
    for key, label in (("t_family_s", "halo continuation"),
                       ("t_manifold_s", "manifold batch")):
        print(f"{label:<22}{c[key]:>11.3f}s{p[key]:>11.3f}s"
              f"{p[key] / c[key]:>9.1f}x")


if __name__ == "__main__":
    main()
