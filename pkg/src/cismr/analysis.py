"""Full analysis of one dataset: every requested method, one record each."""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import CisMRError, ValidationError
from .factors import estimate_loadings, suggest_rank
from .heterogeneity import cochran_q
from .liml import fit_liml, wald_interval, wald_test
from .moments import build_moments, factor_transform
from .pruning import DEFAULT_THRESHOLDS, clr_method_name, prune, variant_instrument_set
from .robust import ClrDraws, confidence_set_from_pvalues, default_grid, pvalues_on_grid, run_test
from .selective import conditional_test, fit_sliml, pretest_factors, selective_interval
from .summary_data import build_covariances

SCHEMA_VERSION = "1.0"
FACTOR_METHODS = ("F-LIML", "S-LIML", "F-AR", "F-LM", "F-CLR")


@dataclass
class AnalysisConfig:
    r: int = None
    rank_policy: str = None
    rank_threshold: float = None
    k_max: int = 20
    methods: tuple = None
    alpha: float = 0.05
    delta: float = 0.01
    theta0: float = 0.0
    grid: tuple = None
    prune_r2: tuple = DEFAULT_THRESHOLDS
    seed: int = 0
    mc_draws: int = 100_000
    sel_draws: int = 200_000
    min_accept: int = 200

    def resolved_methods(self):
        if self.methods:
            return tuple(self.methods)
        return FACTOR_METHODS + tuple(clr_method_name(t) for t in self.prune_r2)

    def to_dict(self):
        d = dict(self.__dict__)
        d["methods"] = list(self.resolved_methods())
        d["prune_r2"] = list(self.prune_r2)
        d["grid"] = list(self.grid) if self.grid else None
        return d


def pruned_threshold(method):
    """``"CLR-60"`` -> 0.6."""
    try:
        return int(method.split("-", 1)[1]) / 100.0
    except (IndexError, ValueError):
        raise ValidationError(f"unknown method {method!r}.") from None


def validate_methods(methods):
    for m in methods:
        if m in FACTOR_METHODS:
            continue
        if m.startswith("CLR-"):
            t = pruned_threshold(m)
            if not 0 < t <= 1:
                raise ValidationError(f"invalid pruning threshold in {m!r}.")
            continue
        raise ValidationError(f"unknown method {m!r}.")


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _interval_record(lo, hi, alpha):
    return {
        "intervals": [[lo, hi]],
        "alpha": alpha,
        "grid": None,
        "empty": False,
        "unbounded_low": False,
        "unbounded_high": False,
        "disjoint": False,
        "undecidable": [],
    }


def _midpoint(cs):
    if cs.empty or cs.unbounded_low or cs.unbounded_high:
        return None
    return 0.5 * (cs.lower + cs.upper)


def _error(exc):
    return {"type": type(exc).__name__, "message": str(exc)}


@dataclass
class AnalysisReport:
    records: list
    provenance: dict
    factor_info: dict = field(default_factory=dict)

    def to_dict(self):
        return _clean(
            {
                "schema_version": SCHEMA_VERSION,
                "provenance": self.provenance,
                "factors": self.factor_info,
                "methods": self.records,
            }
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def record(self, method):
        for r in self.records:
            if r["method"] == method:
                return r
        raise KeyError(method)


def choose_rank(rho, config):
    if config.r is not None:
        return int(config.r), None
    eig = np.sort(np.linalg.eigvalsh(rho))[::-1]
    k_max = min(config.k_max, eig.size - 1) if eig.size > 1 else 1
    r = suggest_rank(eig, config.rank_policy, k_max=k_max, threshold=config.rank_threshold)
    return r, config.rank_policy


def run_analysis(ds, config, inputs=None):
    """Run every requested method on ``ds``.

    Per-method failures are recorded as structured errors; only failures of
    the shared pipeline (covariances, loadings) propagate.
    """
    methods = config.resolved_methods()
    validate_methods(methods)
    cov = build_covariances(ds)
    r, policy = choose_rank(cov.rho, config)
    basis = estimate_loadings(cov.rho, r)
    ms = build_moments(ds, cov, factor_transform(basis))
    records = []

    flim = None
    try:
        flim = fit_liml(ms)
    except CisMRError:
        pass
    grid = tuple(config.grid) if config.grid else default_grid(flim)

    for m in methods:
        rec = {"method": m, "estimate": None, "se": None, "confidence_set": None,
               "p_value": None, "theta0": config.theta0, "q": None, "error": None}
        try:
            if m == "F-LIML":
                if flim is None:
                    flim = fit_liml(ms)
                lo, hi = wald_interval(flim, config.alpha)
                rec.update(
                    estimate=flim.theta_hat,
                    se=flim.se,
                    confidence_set=_interval_record(lo, hi, config.alpha),
                    p_value=wald_test(flim, config.theta0)[1],
                    multimodal=flim.multimodal,
                )
                if ms.k >= 2:
                    rec["q"] = cochran_q(ms, flim.theta_hat).to_record()
            elif m == "S-LIML":
                sel = pretest_factors(ms, config.delta)
                sfit = fit_sliml(ms, sel)
                rec["selection"] = {
                    "t_stats": sel.t_stats,
                    "delta": sel.delta,
                    "c_delta": sel.c_delta,
                    "selected_indices": list(sel.selected),
                    "r_star": sel.r_star,
                    "r": sel.r,
                }
                rec.update(estimate=sfit.theta_hat, se=sfit.se)
                s_grid = tuple(config.grid) if config.grid else (
                    sfit.theta_hat - 10 * sfit.se, sfit.theta_hat + 10 * sfit.se, grid[2]
                )
                cs = selective_interval(
                    ms, sel, sfit, config.alpha, s_grid,
                    mc_draws=config.sel_draws, min_accept=config.min_accept, seed=config.seed,
                )
                rec["confidence_set"] = cs.to_record()
                try:
                    test = conditional_test(
                        ms, sel, sfit, config.theta0, config.alpha,
                        mc_draws=config.sel_draws, min_accept=config.min_accept, seed=config.seed,
                    )
                    rec["p_value"] = test.p_value
                    rec["test"] = test.to_record()
                except CisMRError as exc:
                    rec["test"] = {"error": _error(exc)}
                sub = ms.subsystem(sel.selected)
                if sub.k >= 2:
                    rec["q"] = cochran_q(sub, sfit.theta_hat).to_record()
            else:
                if m.startswith("F-"):
                    system = ms
                    test_name = m[2:]
                else:
                    pr = prune(ds, pruned_threshold(m))
                    system = build_moments(ds, cov, variant_instrument_set(pr, ds.p, ds.variant_ids))
                    test_name = "CLR"
                    rec["kept_variants"] = [ds.variant_ids[j] for j in pr.kept]
                    rec["threshold_r2"] = pr.threshold_r2
                draws = ClrDraws(system.k, config.mc_draws, config.seed) if test_name == "CLR" and system.k > 1 else None
                thetas = np.linspace(grid[0], grid[1], int(grid[2]))
                p = pvalues_on_grid(system, test_name, thetas, draws=draws)
                cs = confidence_set_from_pvalues(thetas, p, config.alpha, grid)
                rec["confidence_set"] = cs.to_record()
                rec["k"] = system.k
                test = run_test(system, test_name, config.theta0, draws=draws)
                rec["p_value"] = test.p_value
                rec["test"] = test.to_record()
                mid = _midpoint(cs)
                if mid is not None and system.k >= 2:
                    rec["q"] = cochran_q(system, mid, substituted=True).to_record()
        except CisMRError as exc:
            rec["error"] = _error(exc)
        records.append(rec)

    provenance = {
        "version": __version__,
        "seed": config.seed,
        "config": config.to_dict(),
        "inputs": inputs or {},
        "n_variants": ds.p,
        "ld_repaired": cov.repaired,
    }
    factor_info = {
        "r": r,
        "rank_policy": policy,
        "eigenvalues_top": basis.eigenvalues[: min(ds.p, r + 5)],
        "cum_share_at_r": float(basis.cum_share[r - 1]),
    }
    return AnalysisReport(records=records, provenance=provenance, factor_info=factor_info)
