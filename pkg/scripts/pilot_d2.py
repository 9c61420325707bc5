"""Pilot run for the d = 2 simple-walk variance band (R = 10^5).

Writes tests/fixtures/pilot_d2.json, which the acceptance suite reads to
check its R = 10^4 run against the frozen band.
"""
import argparse
import json
import math
import time
from pathlib import Path

from selfint.constants import CovarianceMatrix, kappa, theorem3_prefactor
from selfint.experiments import scaling_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicas", type=int, default=10**5)
    ap.add_argument("--seed", type=int, default=20240501)
    ap.add_argument("--out", type=Path, default=ROOT / "tests" / "fixtures" / "pilot_d2.json")
    args = ap.parse_args()

    ns = [2**k for k in range(9, 14)]
    t0 = time.perf_counter()
    res = scaling_experiment("srw2d", 2, ns, args.replicas, args.seed)
    k = kappa()
    pred = theorem3_prefactor(2, 2, sigma=CovarianceMatrix.scaled_identity(2, 0.25), kappa_value=k.value)
    ratios = [r.variance / r.n**2 for r in res.results]
    errs = [r.stderr / r.n**2 for r in res.results]
    # band for the R = 10^4 acceptance run: pilot ratio at the largest n,
    # widened by 4 standard errors of an R = 10^4 estimate (sqrt(10) x pilot error)
    width = 4 * math.sqrt(10) * errs[-1]
    out = {
        "replicas": args.replicas,
        "seed": args.seed,
        "n": ns,
        "ratio_var_over_n2": ratios,
        "ratio_stderr": errs,
        "fitted_exponent": res.fit.a,
        "fitted_exponent_se": res.fit.se_a,
        "prediction": pred,
        "band_at_nmax": [ratios[-1] - width, ratios[-1] + width],
        "seconds": time.perf_counter() - t0,
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(out, indent=2) + "\n")
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
