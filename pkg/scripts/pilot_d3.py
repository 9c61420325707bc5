"""Pilot run for the d = 3 ratio Var / (n log n) over n = 2^10 .. 2^14.

Writes tests/fixtures/pilot_d3.json with the observed ratio spread and the
limiting value kappa1 + kappa2 for Sigma = I/6.
"""
import argparse
import json
import math
import time
from pathlib import Path

from selfint.constants import CovarianceMatrix, theorem3_prefactor
from selfint.experiments import scaling_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicas", type=int, default=10**5)
    ap.add_argument("--seed", type=int, default=20240502)
    ap.add_argument("--out", type=Path, default=ROOT / "tests" / "fixtures" / "pilot_d3.json")
    args = ap.parse_args()

    ns = [2**k for k in range(10, 15)]
    t0 = time.perf_counter()
    res = scaling_experiment("srw3d", 2, ns, args.replicas, args.seed)
    limit = theorem3_prefactor(3, 2, sigma=CovarianceMatrix.scaled_identity(3, 1 / 6))
    out = {
        "replicas": args.replicas,
        "seed": args.seed,
        "n": ns,
        "ratio_var_over_nlogn": res.ratios,
        "ratio_stderr": [r.stderr / (r.n * math.log(r.n)) for r in res.results],
        "relative_spread": max(res.ratios) / min(res.ratios) - 1,
        "limit_kappa1_plus_kappa2": limit,
        "seconds": time.perf_counter() - t0,
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(out, indent=2) + "\n")
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
