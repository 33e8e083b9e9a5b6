"""Synthetic two-sample summary data and size/power experiments.

A :class:`BasePopulation` fixes the LD matrix, true exposure associations and
standard errors. A :class:`Design` perturbs it in one of three ways (smaller
samples, fixed direct effects, mismeasured LD). :func:`run_power` applies each
method's 5%-level test of H0: theta = theta0 to replicate datasets.

Every replicate draws from its own random stream keyed by
``(seed, design, replicate_index)``, so results do not depend on the number
of worker threads or on scheduling order.
"""

import csv
import hashlib
import io
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import CisMRError, NumericalError, ValidationError
from .factors import estimate_loadings
from .liml import fit_liml, wald_test
from .moments import FACTOR, InstrumentTransform, MomentSystem
from .pruning import clr_method_name, prune_indices
from .psd import nearest_correlation
from .robust import ClrDraws, clr_statistic, st_arrays, st_matrices
from .selective import conditional_test, fit_sliml, pretest_factors
from .summary_data import SummaryDataset, build_covariances

SMALL_SAMPLE = "small_sample"
INVALID = "invalid"
MISMEASURED = "mismeasured"
DESIGN_KINDS = (SMALL_SAMPLE, INVALID, MISMEASURED)

FACTOR_METHODS = ("F-AR", "F-LM", "F-CLR", "F-LIML-Wald", "S-LIML")
PRUNED_METHODS = ("CLR-01", "CLR-20", "CLR-40", "CLR-60", "CLR-80")
ALL_METHODS = FACTOR_METHODS + PRUNED_METHODS

CSV_COLUMNS = ("method", "design", "param", "theta_true", "rate", "mc_se", "reps", "errors")


def _stream(*key):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def _key(text):
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


@dataclass(frozen=True)
class BasePopulation:
    """True data-generating quantities shared by all designs."""

    p: int
    r: int
    rho_true: np.ndarray
    beta_x_true: np.ndarray
    se_x: np.ndarray
    se_y: np.ndarray
    theta_true: float
    seed: int
    signal_share: float = 0.95

    @property
    def variant_ids(self):
        return tuple(f"v{j + 1}" for j in range(self.p))


def factor_structured_ld(p, r, signal_share, rng, decay=0.8, spread=0.2, n_clusters=None):
    """Correlation matrix with ``r`` dominant factors and haplotype-like blocks.

    Variants are noisy copies of ``n_clusters`` loading centres, so nearby
    "haplotypes" are highly correlated. Each variant's share of variance
    explained by the factors is exactly ``signal_share``; the top ``r``
    eigenvalues therefore carry at least that share of the trace.
    """
    if not 1 <= r < p:
        raise ValidationError(f"need 1 <= r < p (got r={r}, p={p}).")
    if not 0 < signal_share <= 1:
        raise ValidationError("signal_share must lie in (0, 1].")
    scale = decay ** np.arange(r)
    n_clusters = n_clusters or max(r, p // 5)
    centres = rng.standard_normal((n_clusters, r)) * scale
    labels = rng.integers(0, n_clusters, p)
    loadings = centres[labels] + spread * rng.standard_normal((p, r)) * scale
    # bounded loading norms
    norms = np.linalg.norm(loadings, axis=1)
    cap = 3.0 * np.median(norms)
    loadings *= np.minimum(1.0, cap / norms)[:, None]
    signal = loadings @ loadings.T
    d = np.sqrt(np.diag(signal) / signal_share)
    rho = signal / np.outer(d, d)
    np.fill_diagonal(rho, 1.0)
    return 0.5 * (rho + rho.T)


def gen_base_population(
    p=196,
    r=8,
    signal_share=0.95,
    seed=0,
    *,
    theta_true=0.0,
    max_t=10.0,
    n_causal=3,
    factor_t=None,
    se_x=0.0026,
    se_y=0.012,
    decay=0.8,
    spread=0.2,
):
    """Draw a synthetic base population.

    Parameters
    ----------
    p, r : int
        Number of variants and of dominant LD factors.
    signal_share : float
        Share of each variant's variance carried by the factors; 1 gives a
        rank-``r`` LD matrix.
    seed : int
    theta_true : float
        Default causal effect stored on the population.
    max_t : float
        Exposure associations are LD-weighted sums of ``n_causal`` causal
        effects, scaled so the strongest marginal t-statistic is ``max_t``.
    factor_t : sequence of float, optional
        Instead of causal variants, place the exposure associations in the
        span of the top-``r`` loadings so that factor ``j`` has exposure
        t-statistic ``factor_t[j]`` (padded with zeros).
    se_x, se_y : float
        Typical standard errors; each variant gets both scaled by a common
        allele-frequency factor in ``[0.8, 1.25]``.
    decay, spread : float
        LD shape parameters, see :func:`factor_structured_ld`.
    """
    rng = _stream(seed, _key("base"))
    rho = factor_structured_ld(p, r, signal_share, rng, decay=decay, spread=spread)
    freq_factor = rng.uniform(0.8, 1.25, p)
    sx = se_x * freq_factor
    sy = se_y * freq_factor
    if factor_t is not None:
        t = np.zeros(r)
        t[: len(factor_t)] = factor_t
        lam = estimate_loadings(rho, r).loadings
        omega_xx = lam.T @ (rho * np.outer(sx, sx)) @ lam
        a = t * np.sqrt(np.diag(omega_xx))
        beta = -lam @ a / p
    else:
        b = np.zeros(p)
        causal = rng.choice(p, size=min(n_causal, p), replace=False)
        b[causal] = rng.choice([-1.0, 1.0], causal.size) * rng.uniform(0.5, 1.0, causal.size)
        beta = rho @ b
        beta *= max_t / np.max(np.abs(beta / sx))
    return BasePopulation(
        p=p,
        r=r,
        rho_true=rho,
        beta_x_true=beta,
        se_x=sx,
        se_y=sy,
        theta_true=float(theta_true),
        seed=int(seed),
        signal_share=float(signal_share),
    )


@dataclass(frozen=True)
class Design:
    """One stress design with its frozen effects.

    ``param`` is eta for ``small_sample``, tau-bar for ``invalid`` and
    kappa-bar for ``mismeasured``. ``tau`` and ``kappa`` are drawn once from
    ``(seed, kind, param)`` and held fixed across replicates.
    """

    kind: str
    param: float
    seed: int = 0
    tau: np.ndarray = field(default=None, repr=False)
    kappa: np.ndarray = field(default=None, repr=False)
    rho_used: np.ndarray = field(default=None, repr=False)
    repair_failed: bool = False

    @property
    def eta(self):
        return self.param if self.kind == SMALL_SAMPLE else 1.0

    @property
    def key(self):
        return _key(f"{self.kind}:{self.param!r}")

    def label(self):
        return f"{self.kind}({self.param:g})"


def make_design(base, kind, param, seed=0):
    """Validate parameters and draw the frozen effects for ``base``."""
    if kind not in DESIGN_KINDS:
        raise ValidationError(f"unknown design {kind!r}; expected one of {DESIGN_KINDS}.")
    param = float(param)
    if kind == SMALL_SAMPLE and not 0 < param <= 1:
        raise ValidationError("small_sample needs 0 < eta <= 1.")
    if kind in (INVALID, MISMEASURED) and param < 0:
        raise ValidationError(f"{kind} needs a non-negative parameter.")
    rng = _stream(seed, _key(f"{kind}:{param!r}"), _key("frozen"))
    p = base.p
    tau = np.zeros(p)
    kappa = np.zeros((p, p))
    rho_used = base.rho_true
    repair_failed = False
    if kind == INVALID:
        tau = rng.uniform(-0.005 * param, 0.005 * param, p)
    elif kind == MISMEASURED:
        iu = np.triu_indices(p, 1)
        vals = rng.choice([-1.0, 1.0], iu[0].size) * rng.uniform(0.0, param, iu[0].size)
        kappa[iu] = vals
        kappa = kappa + kappa.T
        rho_bar = base.rho_true + kappa
        rho_bar = 0.5 * (rho_bar + rho_bar.T)
        np.fill_diagonal(rho_bar, 1.0)
        try:
            rho_used = nearest_correlation(rho_bar, tol=1e-10, max_iter=2000)
        except NumericalError:
            rho_used, repair_failed = rho_bar, True
    return Design(kind, param, int(seed), tau, kappa, rho_used, repair_failed)


def _sqrt_factor(m):
    vals, vecs = np.linalg.eigh(m)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


class _Sampler:
    """Cached square roots of the true sampling covariances."""

    def __init__(self, base, design):
        self.base = base
        self.design = design
        eta = design.eta
        rho = base.rho_true
        self.ax = _sqrt_factor(rho * np.outer(base.se_x, base.se_x) / eta)
        self.ay = _sqrt_factor(rho * np.outer(base.se_y, base.se_y) / eta)
        self.se_x = base.se_x / np.sqrt(eta)
        self.se_y = base.se_y / np.sqrt(eta)

    def draw(self, theta_true, replicate_index, seed=None):
        base, design = self.base, self.design
        rng = _stream(base.seed if seed is None else seed, design.key, replicate_index)
        zx = rng.standard_normal(base.p)
        zy = rng.standard_normal(base.p)
        bx = base.beta_x_true + self.ax @ zx
        by = theta_true * base.beta_x_true + design.tau + self.ay @ zy
        return bx, by


def simulate_replicate(base, design, theta_true, replicate_index, seed=None):
    """One replicate as the :class:`SummaryDataset` handed to the methods.

    In the ``mismeasured`` design the data follow the true LD, but the
    dataset carries the repaired perturbed LD matrix.
    """
    if design.repair_failed:
        raise NumericalError("perturbed LD matrix could not be repaired.")
    bx, by = _Sampler(base, design).draw(theta_true, replicate_index, seed)
    se_x = base.se_x / np.sqrt(design.eta)
    se_y = base.se_y / np.sqrt(design.eta)
    return SummaryDataset(base.variant_ids, bx, se_x, by, se_y, design.rho_used)


@dataclass
class PowerCurve:
    """Tidy rows of ``(method, design, param, theta_true, rate, mc_se, reps, errors)``.

    ``reps`` counts replicates where the method reached a decision; ``errors``
    counts the rest (empty selection, rare selection event, numerical failure).
    """

    rows: list

    def to_csv(self, fh=None):
        out = fh or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow(
                [
                    row["method"],
                    row["design"],
                    f"{row['param']:g}",
                    f"{row['theta_true']:.6g}",
                    f"{row['rate']:.6f}",
                    f"{row['mc_se']:.6f}",
                    row["reps"],
                    row["errors"],
                ]
            )
        return out.getvalue() if fh is None else None

    def rate(self, method, theta_true=None):
        for row in self.rows:
            if row["method"] == method and (theta_true is None or np.isclose(row["theta_true"], theta_true)):
                return row["rate"]
        raise KeyError(method)

    def row(self, method, theta_true=None):
        for row in self.rows:
            if row["method"] == method and (theta_true is None or np.isclose(row["theta_true"], theta_true)):
                return row
        raise KeyError(method)


def default_delta(design):
    """Pre-test level by sample-size scenario: 0.1, 0.05, 0.01 for eta 0.25, 0.5, 1."""
    eta = design.eta
    if eta <= 0.25:
        return 0.1
    if eta <= 0.5:
        return 0.05
    return 0.01


class _Context:
    """Per-(base, design) quantities that do not change across replicates."""

    def __init__(self, base, design, methods, theta0, alpha, delta, seed, clr_draws, sel_draws, min_accept):
        self.base, self.design = base, design
        self.methods = tuple(methods)
        self.theta0, self.alpha, self.delta = float(theta0), float(alpha), float(delta)
        self.seed = int(seed)
        self.clr_draws, self.sel_draws, self.min_accept = int(clr_draws), int(sel_draws), int(min_accept)
        self.sampler = _Sampler(base, design)
        template = SummaryDataset(
            base.variant_ids,
            np.zeros(base.p),
            self.sampler.se_x,
            np.zeros(base.p),
            self.sampler.se_y,
            design.rho_used,
        )
        cov = build_covariances(template)
        self.rho = cov.rho
        self.sxx, self.syy = cov.sigma_xx, cov.sigma_yy
        self.strength_scale = self.sampler.se_x
        basis = estimate_loadings(self.rho, base.r)
        self.w = basis.loadings
        self.transform = InstrumentTransform(self.w, FACTOR)
        self.oxx = self.w.T @ self.sxx @ self.w
        self.oyy = self.w.T @ self.syy @ self.w
        self.oxx = 0.5 * (self.oxx + self.oxx.T)
        self.oyy = 0.5 * (self.oyy + self.oyy.T)
        self.factor_mats = st_matrices(self.oxx, self.oyy, self.theta0)
        self._draws = {}
        self.thresholds = {m: float(m[4:]) / 100.0 for m in self.methods if m in PRUNED_METHODS}

    def draws_for(self, k):
        # deterministic in (seed, k), so a benign race only duplicates work
        d = self._draws.get(k)
        if d is None:
            d = ClrDraws(k, self.clr_draws, [self.seed, _key("clr"), k])
            self._draws[k] = d
        return d

    def _robust(self, g0, g1, oxx, oyy, mats, wanted):
        s, t = st_arrays(g0, g1, oxx, oyy, self.theta0, mats)
        qs, qst, qt = float(s @ s), float(s @ t), float(t @ t)
        k = g0.size
        out = {}
        if "AR" in wanted:
            out["AR"] = stats.chi2.sf(qs, k)
        if "LM" in wanted:
            out["LM"] = stats.chi2.sf(qst**2 / qt, 1) if qt > 1e-12 else np.nan
        if "CLR" in wanted:
            stat = clr_statistic(qs, qst, qt)
            out["CLR"] = stats.chi2.sf(stat, 1) if k == 1 else float(self.draws_for(k).p_values(stat, qt)[0])
        return out

    def evaluate(self, theta_true, rep):
        """Return ``{method: True/False/None}`` (reject / accept / no decision)."""
        bx, by = self.sampler.draw(theta_true, rep, self.seed)
        res = {}
        g0, g1 = self.w.T @ by, self.w.T @ bx
        wanted = [m[2:] for m in self.methods if m in ("F-AR", "F-LM", "F-CLR")]
        if wanted:
            try:
                pv = self._robust(g0, g1, self.oxx, self.oyy, self.factor_mats, wanted)
                for m, p in pv.items():
                    res["F-" + m] = None if np.isnan(p) else bool(p < self.alpha)
            except CisMRError:
                for m in wanted:
                    res["F-" + m] = None
        ms = None
        if "F-LIML-Wald" in self.methods or "S-LIML" in self.methods:
            ms = MomentSystem(self.transform, g0, g1, self.oxx, self.oyy)
        if "F-LIML-Wald" in self.methods:
            try:
                fit = fit_liml(ms)
                res["F-LIML-Wald"] = wald_test(fit, self.theta0, self.alpha)[2]
            except CisMRError:
                res["F-LIML-Wald"] = None
        if "S-LIML" in self.methods:
            try:
                sel = pretest_factors(ms, self.delta)
                sfit = fit_sliml(ms, sel)
                out = conditional_test(
                    ms,
                    sel,
                    sfit,
                    self.theta0,
                    self.alpha,
                    mc_draws=self.sel_draws,
                    min_accept=self.min_accept,
                    seed=[self.seed, self.design.key, rep, _key("slim")],
                )
                res["S-LIML"] = out.decision
            except CisMRError:
                res["S-LIML"] = None
        if self.thresholds:
            strength = bx / self.strength_scale
            for m, thr in self.thresholds.items():
                kept = np.array(prune_indices(self.rho, strength, thr))
                ix = np.ix_(kept, kept)
                try:
                    pv = self._robust(by[kept], bx[kept], self.sxx[ix], self.syy[ix], None, ["CLR"])
                    res[m] = bool(pv["CLR"] < self.alpha)
                except CisMRError:
                    res[m] = None
        return res


def run_power(
    base,
    design,
    methods=ALL_METHODS,
    theta_grid=(0.0,),
    reps=1000,
    alpha=0.05,
    delta=None,
    seed=0,
    theta0=0.0,
    threads=1,
    clr_draws=20_000,
    sel_draws=20_000,
    min_accept=200,
    progress=False,
):
    """Rejection rates of each method's test of H0: theta = ``theta0``.

    Parameters
    ----------
    base : BasePopulation
    design : Design
    methods : iterable of str
        Subset of :data:`ALL_METHODS`.
    theta_grid : iterable of float
        True effects to simulate under.
    reps : int
        Replicates per true effect (at least 100).
    alpha : float
        Test level.
    delta : float, optional
        Pre-test level for S-LIML; defaults to :func:`default_delta`.
    seed : int
        Master seed for replicate streams and Monte-Carlo draw sets.
    theta0 : float
        Null value tested.
    threads : int
        Worker threads; results do not depend on it.
    clr_draws, sel_draws, min_accept : int
        Monte-Carlo sizes for CLR p-values and the S-LIML conditional test.

    Returns
    -------
    PowerCurve
    """
    methods = tuple(methods)
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise ValidationError(f"unknown methods {unknown}; expected a subset of {ALL_METHODS}.")
    if reps < 100:
        raise ValidationError("reps must be at least 100.")
    if design.repair_failed:
        raise NumericalError("perturbed LD matrix could not be repaired; design skipped.")
    delta = default_delta(design) if delta is None else float(delta)
    ctx = _Context(base, design, methods, theta0, alpha, delta, seed, clr_draws, sel_draws, min_accept)
    if "F-CLR" in methods:
        ctx.draws_for(base.r)

    rows = []
    for theta_true in theta_grid:
        theta_true = float(theta_true)
        counts = {m: [0, 0, 0] for m in methods}  # reject, decided, errors

        def work(chunk):
            local = {m: [0, 0, 0] for m in methods}
            for rep in chunk:
                for m, dec in ctx.evaluate(theta_true, rep).items():
                    if dec is None:
                        local[m][2] += 1
                    else:
                        local[m][0] += int(dec)
                        local[m][1] += 1
            return local

        size = max(1, reps // max(1, 4 * threads))
        chunks = [range(i, min(i + size, reps)) for i in range(0, reps, size)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(work, chunks))
        else:
            parts = [work(c) for c in chunks]
        for part in parts:
            for m in methods:
                for i in range(3):
                    counts[m][i] += part[m][i]
        for m in methods:
            rej, dec, err = counts[m]
            rate = rej / dec if dec else float("nan")
            rows.append(
                {
                    "method": m,
                    "design": design.kind,
                    "param": design.param,
                    "theta_true": theta_true,
                    "rate": rate,
                    "mc_se": float(np.sqrt(rate * (1 - rate) / dec)) if dec else float("nan"),
                    "reps": dec,
                    "errors": err,
                }
            )
        if progress:
            print(f"[simulate] {design.label()} theta_true={theta_true:g} done", file=sys.stderr)
    return PowerCurve(rows)
