"""Acceptance suite: one test per criterion, each with its runtime budget.

Seeds are fixed constants chosen before any acceptance run.  Run with
``pytest tests/test_acceptance.py -v``; the terminal summary lists one
PASS/FAIL line per criterion with the measured values.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from selfint.bounds import log_linearity, rate_fit
from selfint.cli import bound_values, run_config
from selfint.constants import (
    CovarianceMatrix,
    kappa,
    kappa1,
    kappa2,
    kappa2_monte_carlo,
    kappa_monte_carlo,
    theorem3_prefactor,
)
from selfint.experiments import (
    IDENTITY_TOTAL_VARIANCE,
    SceneryLaw,
    comparison_experiment,
    estimate_moments,
    exact_enumeration_variance,
    scaling_experiment,
    scenery_experiment,
)
from selfint.occupation import OccupationMap, brute_force_L, path_from_increments
from selfint.spectral import lemma1_h_sequence, phi_integral, return_probability
from selfint.walks import make_distribution

FIXTURES = Path(__file__).parent / "fixtures"
HEAVY = {"kind": "heavy-tailed-2d", "params": {"gamma": 0.5}}
BIASED = {"kind": "biased-1d", "params": {"p": 0.7}}
DESK_N = [2**k for k in range(9, 14)]
RATE_N = [2**k for k in range(6, 15)]
SIGMA3 = CovarianceMatrix.scaled_identity(3, 1 / 6)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


@pytest.mark.criterion(1, "incremental L equals brute force on 1000 random paths")
def test_criterion_01_oracle_equivalence(detail):
    rng = np.random.default_rng(1)
    mismatches = 0
    with Timer() as t:
        for _ in range(1000):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(1, 257))
            steps = np.zeros((n, d), dtype=np.int64)
            steps[np.arange(n), rng.integers(0, d, n)] = rng.choice([-1, 1], n)
            path = path_from_increments(steps)
            occ = OccupationMap(d, [2, 3, 4])
            for site in path.tolist():
                occ.record_step(site)
            mismatches += sum(occ.running_L[a] != brute_force_L(path, a) for a in (2, 3, 4))
    detail(f"mismatches {mismatches}, {t.seconds:.1f}s")
    assert mismatches == 0
    assert t.seconds < 10


@pytest.mark.criterion(2, "exact enumeration (4, 1) and 0, reproduced by Monte Carlo")
def test_criterion_02_exact_enumeration(detail):
    with Timer() as t:
        mean3, var3 = exact_enumeration_variance("srw1d", 3, 2)
        _, var2 = exact_enumeration_variance("srw1d", 2, 2)
        mc3 = estimate_moments("srw1d", 3, [2], 2 * 10**5, seed=202)[2]
        mc2 = estimate_moments("srw1d", 2, [2], 2 * 10**5, seed=203)[2]
    detail(f"MC n=3 mean {mc3.mean:.4f}+-{mc3.mean_stderr:.4f} var {mc3.variance:.4f}+-{mc3.stderr:.4f}; "
           f"n=2 var {mc2.variance}; {t.seconds:.1f}s")
    assert (mean3, var3) == (4.0, 1.0) and var2 == 0.0
    assert abs(mc3.mean - 4.0) <= 3 * mc3.mean_stderr
    assert abs(mc3.variance - 1.0) <= 3 * mc3.stderr
    assert mc2.variance == 0.0 and mc2.mean == 2.0
    assert t.seconds < 30


@pytest.mark.criterion(3, "Fourier inversion matches the binomial law for n <= 64")
def test_criterion_03_spectral_exactness(detail):
    dist = make_distribution("srw1d")
    worst = worst_parity = 0.0
    with Timer() as t:
        for n in range(65):
            for x in range(-n, n + 1):
                p = return_probability(dist, n, x)
                if (n + x) % 2:
                    worst_parity = max(worst_parity, p)
                else:
                    worst = max(worst, abs(p - stats.binom.pmf((n + x) // 2, n, 0.5)))
    detail(f"max error {worst:.1e}, max parity residue {worst_parity:.1e}, {t.seconds:.1f}s")
    assert worst < 1e-12 and worst_parity < 1e-14
    assert t.seconds < 5


@pytest.mark.criterion(4, "bound growth rates over n = 2^6..2^14 for phi = (m v 1)^-r")
def test_criterion_04_rate_table(detail):
    with Timer() as t:
        out = {}
        for fn in ("prop1", "prop4"):
            pts = lambda r, a: list(zip(RATE_N, bound_values(fn, r, 1.0, a, RATE_N)))
            out[fn, "r1"] = rate_fit(pts(1.0, 2)).a
            out[fn, "r1.25"] = rate_fit(pts(1.25, 2)).a
            out[fn, "r1.5"] = log_linearity(pts(1.5, 2))
            out[fn, "r1.75"] = rate_fit(pts(1.75, 2)).a
        log_fit = rate_fit(list(zip(RATE_N, bound_values("prop1", 1.0, 1.0, 3, RATE_N))),
                           "power-times-log-power")
    detail(", ".join(f"{fn} {k}: {v:.4f}" for (fn, k), v in out.items()))
    detail(f"prop1 r=1 alpha=3: a={log_fit.a:.3f} b={log_fit.b:.3f} (log-power target 2 +- 0.3); {t.seconds:.1f}s")
    for fn in ("prop1", "prop4"):
        assert abs(out[fn, "r1"] - 2) <= 0.05
        assert abs(out[fn, "r1.25"] - 1.5) <= 0.05
        assert out[fn, "r1.5"] <= 0.05
        assert abs(out[fn, "r1.75"] - 1) <= 0.05
    assert abs(log_fit.a - 2) <= 0.05
    assert abs(log_fit.b - 2) <= 0.3
    assert t.seconds < 60


@pytest.mark.criterion(5, "kappa and kappa2 converge and match Monte Carlo; kappa1 exact")
def test_criterion_05_constants(detail):
    with Timer() as t:
        k = kappa()
        k2 = kappa2(SIGMA3)
        mc = kappa_monte_carlo(10**8, seed=505)
        mc2 = kappa2_monte_carlo(SIGMA3, 10**8, seed=506)
        k1 = kappa1(SIGMA3)
    detail(f"kappa {k.value:.10f} (spread {k.spread():.1e}), MC {mc.value:.6f}+-{mc.stderr:.1e}")
    detail(f"kappa2 {k2.value:.10f} (spread {k2.spread():.1e}), MC {mc2.value:.6f}+-{mc2.stderr:.1e}; {t.seconds:.0f}s")
    assert k.converged and len(k.resolutions) >= 3 and k.spread(3) < 1e-8
    assert k2.converged and len(k2.resolutions) >= 3 and k2.spread(3) < 1e-6
    assert mc.agrees_with(k.value, 4) and mc2.agrees_with(k2.value, 4)
    assert abs(k1 - 13.5 / math.pi**3) <= 1e-12 * k1
    assert t.seconds < 120


@pytest.mark.slow
@pytest.mark.criterion(6, "d=2 simple walk: exponent 2 +- 0.15, Var/n^2 trend, factor 2, frozen band")
def test_criterion_06_desk_scale_d2(detail):
    pilot = json.loads((FIXTURES / "pilot_d2.json").read_text())
    with Timer() as t:
        res = scaling_experiment("srw2d", 2, DESK_N, 10**4, seed=20240601)
        pred = theorem3_prefactor(2, 2, sigma=CovarianceMatrix.scaled_identity(2, 0.25))
    ratios = np.array([r.variance / r.n**2 for r in res.results])
    errs = np.array([r.stderr / r.n**2 for r in res.results])
    x = np.log2(DESK_N)
    slope = np.polyfit(x, ratios, 1, w=1 / errs)[0]
    lo, hi = pilot["band_at_nmax"]
    detail(f"exponent {res.fit.a:.3f}+-{res.fit.se_a:.3f}; Var/n^2 {np.round(ratios, 4).tolist()}")
    detail(f"prediction {pred:.5f}, ratio at 2^13 is pred/{pred / ratios[-1]:.3f}; "
           f"band [{lo:.4f}, {hi:.4f}]; {t.seconds:.0f}s")
    assert abs(res.fit.a - 2.0) <= 0.15
    # trending toward the prediction: the ratio rises toward it and the gap shrinks
    assert slope > 0 and abs(pred - ratios[-1]) < abs(pred - ratios[0])
    assert pred / 2 <= ratios[-1] <= 2 * pred
    assert lo <= ratios[-1] <= hi
    assert t.seconds < 600


@pytest.mark.slow
@pytest.mark.criterion(7, "biased walk: variance exponent <= 1.5")
def test_criterion_07_biased_exponent(detail):
    with Timer() as t:
        res = scaling_experiment(BIASED, 2, DESK_N, 10**4, seed=20240602)
    detail(f"exponent {res.fit.a:.3f}+-{res.fit.se_a:.3f}; {t.seconds:.0f}s")
    assert res.fit.a <= 1.5
    assert t.seconds < 300


@pytest.mark.slow
@pytest.mark.criterion(8, "heavy-tailed vs simple d=2 variance ratio has no upward trend")
def test_criterion_08_heavy_vs_simple(detail):
    with Timer() as t:
        res = comparison_experiment(HEAVY, 2, DESK_N, 10**4, seed=20240603)
    detail(f"ratios {np.round(res.ratios, 4).tolist()}; slope {res.slope:.3f}+-{res.slope_stderr:.3f}; {t.seconds:.0f}s")
    assert res.slope <= 2 * res.slope_stderr
    assert max(res.ratios) / min(res.ratios) < math.inf
    assert t.seconds < 600


@pytest.mark.criterion(9, "heavy-tailed phi rate bounded, h_n decreasing; lazy h_n converges")
def test_criterion_09_spectral_rates(detail):
    heavy = make_distribution(HEAVY)
    with Timer() as t:
        ns = [2**k for k in range(6, 15)]
        scaled = [phi_integral(heavy, n) * n * math.log(n) ** 0.5 for n in ns]
        h = lemma1_h_sequence(heavy, ns)
        lazy = lemma1_h_sequence(make_distribution("lazy2d"), ns)
    ratio = max(scaled) / min(scaled)
    detail(f"phi n log^0.5 n max/min {ratio:.3f}; heavy h {h[0]:.5f}->{h[-1]:.5f}; "
           f"lazy last ratio {lazy[-1] / lazy[-2]:.6f}; {t.seconds:.0f}s")
    assert ratio < 5
    assert all(b < a for a, b in zip(h, h[1:]))
    assert abs(lazy[-1] / lazy[-2] - 1) <= 0.02
    assert t.seconds < 120


@pytest.mark.criterion(10, "scenery: Var(Z_3) = 4 within 3 stderr; supported identity reported")
def test_criterion_10_scenery(detail):
    with Timer() as t:
        res = scenery_experiment("srw1d", SceneryLaw("rademacher", 1.0), 3, 2 * 10**5, seed=1010)
    report = res.report()
    detail(f"Var(Z_3) {res.var_z:.4f}+-{res.var_z_stderr:.4f}; supports {res.supported}; {t.seconds:.1f}s")
    print(report)
    assert abs(res.var_z - 4.0) <= 3 * res.var_z_stderr
    assert res.supported == IDENTITY_TOTAL_VARIANCE and IDENTITY_TOTAL_VARIANCE in report
    assert t.seconds < 60


@pytest.mark.slow
@pytest.mark.criterion(11, "byte-identical CSV across reruns and --threads")
def test_criterion_11_determinism(tmp_path, detail):
    configs = {
        "variance": {"kind": "variance", "dist": "srw1d", "n": 3, "alpha": 2, "replicas": 2 * 10**5, "seed": 202},
        "biased": {"kind": "scaling", "dist": BIASED, "n_list": DESK_N, "alpha": 2, "replicas": 10**4,
                   "seed": 20240602},
        "scenery": {"kind": "scenery", "dist": "srw1d", "n": 3, "replicas": 2 * 10**5, "seed": 1010},
    }
    compared = 0
    for name, cfg in configs.items():
        for run, threads in (("a", 1), ("b", 1), ("c", 4)):
            assert run_config(cfg, tmp_path / name / run, threads=threads) == 0
        for f in sorted((tmp_path / name / "a").glob("*.csv")):
            ref = f.read_bytes()
            assert ref == (tmp_path / name / "b" / f.name).read_bytes()
            assert ref == (tmp_path / name / "c" / f.name).read_bytes()
            compared += 1
    detail(f"{compared} CSV files identical over 3 runs each (threads 1, 1, 4)")
    assert compared >= 5
