"""Config-driven experiment runner.

    selfint --config run.json --out results/ [--seed N] [--threads K] [--verbose] [--timing]

The config is one JSON object whose ``kind`` picks the experiment.  Everything
is validated before any computation or file output; exit status is 0 on
success, 2 on an invalid config and 3 when a numerical result fails to converge.
CSV outputs depend only on the config and seed.  Wall time goes to
manifest.json unless --timing also asks for a ``seconds`` column.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import bounds, constants, experiments, spectral
from .io import Schema, emit_csv, schema, write_manifest
from .occupation import run_walk
from .report import ConvergenceWarning, NonConvergenceError
from .walks import DistributionError, RngStream, make_distribution

log = logging.getLogger("selfint")

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 2, 3
KINDS = ("simulate", "variance", "scaling", "compare", "scenery", "bounds", "spectral", "constants")


class ConfigError(ValueError):
    pass


RESULT_COLUMNS = (
    ("experiment_id", "str"), ("spec_hash", "str"), ("d", "int"), ("alpha", "int"),
    ("n", "int"), ("replicas", "int"), ("mean_L", "float"), ("var_L", "float"),
    ("stderr", "float"), ("seed", "int"),
)


def results_schema(timing: bool) -> Schema:
    cols = RESULT_COLUMNS + ((("seconds", "float"),) if timing else ())
    return schema("results", *cols)


SIMULATE = schema("simulate", ("replica", "int"), ("n", "int"), ("alpha", "int"),
                  ("L", "int"), ("range", "int"))
SCALING = schema("scaling", ("n", "int"), ("var_L", "float"), ("stderr", "float"),
                 ("v_growth", "float"), ("ratio", "float"))
FIT = schema("fit", ("model", "str"), ("a", "float"), ("se_a", "float"),
             ("b", "float"), ("se_b", "float"), ("c", "float"))
COMPARE = schema("compare", ("n", "int"), ("var_target", "float"), ("var_reference", "float"),
                 ("ratio", "float"), ("ratio_stderr", "float"))
COMPARE_SUMMARY = schema("compare_summary", ("slope", "float"), ("slope_stderr", "float"),
                         ("bounded", "bool"))
SCENERY = schema("scenery", ("n", "int"), ("replicas", "int"), ("scenery_variance", "float"),
                 ("var_Z", "float"), ("var_Z_stderr", "float"), ("mean_L2", "float"),
                 ("var_L2", "float"), ("identity", "str"), ("predicted", "float"),
                 ("z_score", "float"), ("supported", "bool"))
BOUNDS = schema("bounds", ("n", "int"), ("bound", "float"), ("residual", "float"))
RETURN_PROB = schema("return_probability", ("n", "int"), ("x", "str"), ("probability", "float"),
                     ("grid", "int"), ("exact", "bool"))
PHI = schema("phi", ("m", "int"), ("phi", "float"), ("h", "float"), ("converged", "bool"),
             ("method", "str"), ("resolutions", "str"))
CONSTANTS = schema("constants", ("name", "str"), ("value", "float"), ("resolutions", "str"),
                   ("converged", "bool"), ("mc_value", "float"), ("mc_stderr", "float"))


@dataclass
class ExperimentConfig:
    kind: str
    dist: Any = None
    n: list[int] = field(default_factory=list)
    alphas: list[int] = field(default_factory=lambda: [2])
    replicas: int = 0
    seed: int = 0
    tolerance: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw = dict(raw)
        kind = raw.pop("kind", None)
        if kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
        n = raw.pop("n_list", None)
        single = raw.pop("n", None)
        if n is None and single is not None:
            n = [single]
        alphas = raw.pop("alphas", None)
        alpha = raw.pop("alpha", None)
        if alphas is None:
            alphas = [alpha] if alpha is not None else [2]
        cfg = cls(
            kind=kind,
            dist=raw.pop("dist", None),
            n=list(n or []),
            alphas=list(alphas),
            replicas=raw.pop("replicas", 0),
            seed=raw.pop("seed", 0),
            tolerance=dict(raw.pop("tolerance", {})),
            options=raw,
        )
        return cfg

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(out.pop("options"))
        return out


def _int(value, what: str, low: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"{what} must be an integer, got {value!r}")
    value = int(value)
    if low is not None and value < low:
        raise ConfigError(f"{what} must be >= {low}, got {value}")
    return value


def validate(cfg: ExperimentConfig) -> dict:
    """Check every module precondition up front; returns prepared objects."""
    prep: dict = {}
    cfg.seed = _int(cfg.seed, "seed", 0)
    if cfg.seed >= 2**64:
        raise ConfigError("seed must fit in 64 bits")
    cfg.n = [_int(v, "n", 1) for v in cfg.n]
    cfg.alphas = [_int(a, "alpha", 1) for a in cfg.alphas]
    k = cfg.kind
    if k in ("simulate", "variance", "scaling", "compare", "scenery", "spectral"):
        if cfg.dist is None:
            raise ConfigError(f"kind {k} needs 'dist'")
        prep["dist"] = make_distribution(cfg.dist)
    if k in ("simulate", "variance", "scaling", "compare", "scenery", "bounds", "spectral") and not cfg.n:
        raise ConfigError(f"kind {k} needs 'n' or 'n_list'")
    if k in ("simulate", "variance", "scaling", "compare", "scenery"):
        cfg.replicas = _int(cfg.replicas, "replicas", 1 if k == "simulate" else 2)
    if k == "variance" and cfg.replicas < 100:
        raise ConfigError("variance estimates need replicas >= 100")
    if k in ("scaling", "compare", "bounds"):
        if any(a < 2 for a in cfg.alphas):
            raise ConfigError("alpha must be >= 2")
        if len(set(cfg.n)) < 5:
            raise ConfigError(f"kind {k} needs at least 5 distinct n values")
        if any(v < 2 for v in cfg.n):
            raise ConfigError("growth fits need n >= 2")
    if k == "compare" and not prep["dist"].genuinely_d_dimensional:
        raise ConfigError("compare needs a genuinely d-dimensional law")
    if k == "scenery":
        sc = cfg.options.get("scenery", {"kind": "rademacher", "variance": 1.0})
        try:
            prep["scenery"] = experiments.SceneryLaw(sc.get("kind", "rademacher"),
                                                     float(sc.get("variance", 1.0)))
        except (ValueError, TypeError, AttributeError) as exc:
            raise ConfigError(f"scenery: {exc}") from None
    if k == "bounds":
        fn = cfg.options.get("functional", "prop1")
        if fn not in ("prop1", "prop2", "prop4"):
            raise ConfigError(f"functional must be prop1, prop2 or prop4, got {fn!r}")
        r = float(cfg.options.get("r", 1.0))
        T = float(cfg.options.get("T", 1.0))
        if not (r > 0 and T > 0):
            raise ConfigError("r and T must be positive")
        psi = cfg.options.get("psi", "from-phi")
        if psi not in ("from-phi", "power"):
            raise ConfigError(f"psi must be 'from-phi' or 'power', got {psi!r}")
        model = cfg.options.get("model", "pure-power")
        if model not in bounds.MODELS:
            raise ConfigError(f"model must be one of {bounds.MODELS}")
        prep.update(functional=fn, r=r, T=T, psi=psi, model=model)
    if k == "spectral":
        q = cfg.options.get("quantity", "phi")
        if q not in ("return-probability", "phi", "h"):
            raise ConfigError(f"quantity must be return-probability, phi or h, got {q!r}")
        if q == "h" and not prep["dist"].genuinely_d_dimensional:
            raise ConfigError("h_n needs a genuinely d-dimensional law")
        if q == "return-probability":
            x = cfg.options.get("x", [0] * prep["dist"].dim)
            if len(np.atleast_1d(x)) != prep["dist"].dim:
                raise ConfigError("x must have one coordinate per dimension")
            prep["x"] = [int(v) for v in np.atleast_1d(x)]
        prep["quantity"] = q
    if k == "constants":
        sigma = cfg.options.get("sigma", (np.eye(3) / 6).tolist())
        try:
            prep["sigma"] = constants.CovarianceMatrix(np.asarray(sigma, dtype=float))
        except ValueError as exc:
            raise ConfigError(f"sigma: {exc}") from None
        if prep["sigma"].dim != 3:
            raise ConfigError("sigma must be 3 x 3")
        prep["mc"] = _int(cfg.options.get("monte_carlo", 0), "monte_carlo", 0)
    for key, v in cfg.tolerance.items():
        if key not in ("phi_tol", "phi_rtol", "kappa_tol", "kappa2_tol"):
            raise ConfigError(f"unknown tolerance override {key!r}")
        if not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError(f"tolerance {key} must be positive")
    return prep


# --- runners ----------------------------------------------------------------------

def _result_rows(results, timing: bool):
    rows = []
    for r in results:
        row = r.row()
        if not timing:
            row.pop("seconds")
        rows.append(row)
    return rows


def run_simulate(cfg, prep, out, threads, timing):
    rows = []
    for rep in range(cfg.replicas):
        s = run_walk(prep["dist"], max(cfg.n), cfg.alphas, RngStream(cfg.seed, rep))
        for a in sorted(s.L):
            rows.append({"replica": rep, "n": s.n, "alpha": a, "L": s.L[a], "range": s.range})
    return [(emit_csv(rows, SIMULATE, out / "simulate.csv"), SIMULATE)]


def run_variance(cfg, prep, out, threads, timing):
    sch = results_schema(timing)
    results = []
    for n in cfg.n:
        res = experiments.estimate_moments(prep["dist"], n, cfg.alphas, cfg.replicas, cfg.seed,
                                           threads, experiment_id="variance")
        results.extend(res[a] for a in sorted(res))
    return [(emit_csv(_result_rows(results, timing), sch, out / "results.csv"), sch)]


def _fit_row(fit: bounds.RateFit) -> dict:
    return {"model": fit.model, "a": fit.a, "se_a": fit.se_a, "b": fit.b, "se_b": fit.se_b, "c": fit.c}


def run_scaling(cfg, prep, out, threads, timing):
    sch = results_schema(timing)
    files, results, scale_rows, fit_rows = [], [], [], []
    for a in cfg.alphas:
        s = experiments.scaling_experiment(prep["dist"], a, cfg.n, cfg.replicas, cfg.seed, threads)
        results.extend(s.results)
        for r, ratio in zip(s.results, s.ratios):
            scale_rows.append({"n": r.n, "var_L": r.variance, "stderr": r.stderr,
                               "v_growth": constants.v_growth(prep["dist"].dim, a, r.n), "ratio": ratio})
        fit_rows.append(_fit_row(s.fit))
    files.append((emit_csv(_result_rows(results, timing), sch, out / "results.csv"), sch))
    files.append((emit_csv(scale_rows, SCALING, out / "scaling.csv"), SCALING))
    files.append((emit_csv(fit_rows, FIT, out / "fit.csv"), FIT))
    return files


def run_compare(cfg, prep, out, threads, timing):
    c = experiments.comparison_experiment(prep["dist"], cfg.alphas[0], cfg.n, cfg.replicas,
                                          cfg.seed, threads)
    rows = [{"n": t.n, "var_target": t.variance, "var_reference": r.variance,
             "ratio": q, "ratio_stderr": e}
            for t, r, q, e in zip(c.target, c.reference, c.ratios, c.ratio_stderr)]
    summary = [{"slope": c.slope, "slope_stderr": c.slope_stderr, "bounded": c.bounded}]
    sch = results_schema(timing)
    return [
        (emit_csv(_result_rows(c.target + c.reference, timing), sch, out / "results.csv"), sch),
        (emit_csv(rows, COMPARE, out / "compare.csv"), COMPARE),
        (emit_csv(summary, COMPARE_SUMMARY, out / "compare_summary.csv"), COMPARE_SUMMARY),
    ]


def run_scenery(cfg, prep, out, threads, timing):
    rows = []
    for n in cfg.n:
        s = experiments.scenery_experiment(prep["dist"], prep["scenery"], n, cfg.replicas,
                                           cfg.seed, threads)
        log.info("%s", s.report())
        for name, (pred, z) in s.candidates.items():
            rows.append({"n": n, "replicas": s.replicas, "scenery_variance": s.scenery_variance,
                         "var_Z": s.var_z, "var_Z_stderr": s.var_z_stderr, "mean_L2": s.mean_L2,
                         "var_L2": s.var_L2, "identity": name, "predicted": pred, "z_score": z,
                         "supported": s.supported == name})
    return [(emit_csv(rows, SCENERY, out / "scenery.csv"), SCENERY)]


def bound_values(functional: str, r: float, T: float, alpha: int, ns, psi: str = "from-phi") -> list[float]:
    top = max(ns)
    phi = bounds.power_phi(r, alpha * top + 2, T)
    vals = []
    for n in ns:
        if functional == "prop1":
            p = bounds.PsiFromPhi(phi) if psi == "from-phi" else bounds.power_psi(r, T)
            vals.append(bounds.prop1_bound(bounds.BoundSpec(phi[: 2 * n + 1], p, alpha, n)))
        elif functional == "prop2":
            vals.append(bounds.prop2_delta(phi, alpha, n))
        else:
            vals.append(bounds.prop4_bound(phi, alpha, n))
    return vals


def run_bounds(cfg, prep, out, threads, timing):
    ns = sorted(set(cfg.n))
    rows, fits = [], []
    for a in cfg.alphas:
        vals = bound_values(prep["functional"], prep["r"], prep["T"], a, ns, prep["psi"])
        fit = bounds.rate_fit(list(zip(ns, vals)), prep["model"], min_points=5)
        fits.append(_fit_row(fit))
        rows.extend({"n": n, "bound": v, "residual": float(e)} for n, v, e in zip(ns, vals, fit.residuals))
    return [(emit_csv(rows, BOUNDS, out / "bounds.csv"), BOUNDS),
            (emit_csv(fits, FIT, out / "fit.csv"), FIT)]


def run_spectral(cfg, prep, out, threads, timing):
    dist = prep["dist"]
    if prep["quantity"] == "return-probability":
        rows = []
        for n in cfg.n:
            N = spectral.default_grid_size(dist, n)
            exact = dist.bounded and N > n * dist.span
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", spectral.SpectralAccuracyWarning)
                p = spectral.return_probability(dist, n, prep["x"], N)
            rows.append({"n": n, "x": " ".join(map(str, prep["x"])), "probability": p,
                         "grid": N, "exact": exact})
        return [(emit_csv(rows, RETURN_PROB, out / "spectral.csv"), RETURN_PROB)]
    tol = cfg.tolerance.get("phi_tol", spectral.PHI_TOL)
    rtol = cfg.tolerance.get("phi_rtol", spectral.PHI_RTOL)
    rows = []
    for m in cfg.n:
        rep = spectral.phi_report(dist, m, tol=tol, rtol=rtol)
        if not rep.converged:
            raise NonConvergenceError(f"phi({m}): {rep.resolution_string()}")
        rows.append({"m": m, "phi": rep.value, "h": m ** (dist.dim / 2) * rep.value,
                     "converged": rep.converged, "method": rep.method,
                     "resolutions": rep.resolution_string()})
    return [(emit_csv(rows, PHI, out / "spectral.csv"), PHI)]


def run_constants(cfg, prep, out, threads, timing):
    sigma = prep["sigma"]
    k = constants.kappa(tol=cfg.tolerance.get("kappa_tol", constants.KAPPA_TOL))
    k2 = constants.kappa2(sigma, tol=cfg.tolerance.get("kappa2_tol", constants.KAPPA2_TOL))
    nan = float("nan")
    mc_k = mc_k2 = None
    if prep["mc"]:
        mc_k = constants.kappa_monte_carlo(prep["mc"], seed=cfg.seed)
        mc_k2 = constants.kappa2_monte_carlo(sigma, prep["mc"], seed=cfg.seed)
    rows = [
        {"name": "kappa", "value": k.value, "resolutions": k.resolution_string(),
         "converged": k.converged, "mc_value": mc_k.value if mc_k else nan,
         "mc_stderr": mc_k.stderr if mc_k else nan},
        {"name": "kappa1", "value": constants.kappa1(sigma), "resolutions": "closed-form",
         "converged": True, "mc_value": nan, "mc_stderr": nan},
        {"name": "kappa2", "value": k2.value, "resolutions": k2.resolution_string(),
         "converged": k2.converged, "mc_value": mc_k2.value if mc_k2 else nan,
         "mc_stderr": mc_k2.stderr if mc_k2 else nan},
    ]
    path = emit_csv(rows, CONSTANTS, out / "constants.csv")
    for row in rows:
        print(f"{row['name']:8s} {row['value']:.12g}  converged={row['converged']}  {row['resolutions']}")
    if not (k.converged and k2.converged):
        log.error("constants did not converge")
        prep["unconverged"] = True
    return [(path, CONSTANTS)]


RUNNERS = {
    "simulate": run_simulate, "variance": run_variance, "scaling": run_scaling,
    "compare": run_compare, "scenery": run_scenery, "bounds": run_bounds,
    "spectral": run_spectral, "constants": run_constants,
}


def run_config(raw: dict, out_dir, seed: int | None = None, threads: int = 1,
               timing: bool = False) -> int:
    """Validate, run and write artifacts.  Returns the process exit code."""
    try:
        if seed is not None:
            raw = {**raw, "seed": seed}
        cfg = ExperimentConfig.from_dict(raw)
        prep = validate(cfg)
        if threads < 1:
            raise ConfigError("threads must be >= 1")
    except (ConfigError, DistributionError, bounds.BoundSpecError, ValueError, TypeError) as exc:
        log.error("invalid config: %s", exc)
        return EXIT_INVALID
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status, code, files = "ok", EXIT_OK, []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", ConvergenceWarning)
            files = RUNNERS[cfg.kind](cfg, prep, out, threads, timing)
    except (NonConvergenceError, ConvergenceWarning) as exc:
        log.error("not converged: %s", exc)
        status, code = "not-converged", EXIT_NONCONVERGED
    if prep.get("unconverged"):
        status, code = "not-converged", EXIT_NONCONVERGED
    write_manifest(out, cfg.to_dict(), files, time.perf_counter() - t0, status,
                   {"threads": threads, "timing_column": timing})
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="selfint", description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", required=True, type=Path, help="JSON experiment config")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for replica batches")
    ap.add_argument("--verbose", action="store_true")
    ap.add_argument("--timing", action="store_true", help="add a wall-time column to results CSVs")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        raw = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_INVALID
    return run_config(raw, args.out, args.seed, args.threads, args.timing)


if __name__ == "__main__":
    sys.exit(main())
