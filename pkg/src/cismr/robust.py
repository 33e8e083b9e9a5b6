"""Identification-robust AR, LM and CLR tests and confidence sets by inversion.

All three statistics are functions of the pair ``(S, T)``::

    S = Omega(theta0)^{-1/2} g(theta0)
    T = (Omega_X - D Omega(theta0)^{-1} D)^{-1/2} (G - D Omega(theta0)^{-1} g(theta0)),
    D = theta0 * Omega_X

which are independent standard normal (S) and normal (T) under H0.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import NumericalError, ValidationError
from .psd import inv_sqrt

METHODS = ("AR", "LM", "CLR")

_QT_MIN = 1e-12


@dataclass(frozen=True)
class STDecomposition:
    s_bar: np.ndarray
    t_bar: np.ndarray
    q_s: float
    q_st: float
    q_t: float


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    method: str
    statistic: float
    p_value: float
    theta0: float
    df: int
    q_t: float = np.nan
    mc_draws: int = 0
    mc_se: float = 0.0

    def to_record(self):
        return {
            "method": self.method,
            "theta0": self.theta0,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "df": self.df,
            "q_t": None if np.isnan(self.q_t) else self.q_t,
            "mc_draws": self.mc_draws,
            "mc_se": self.mc_se,
        }


def st_matrices(omega_xx, omega_yy, theta0):
    """Data-free pieces of the S/T construction at ``theta0``.

    Returns ``(Omega^{-1/2}, Omega^{-1}, bracket^{-1/2}, Delta)``; these depend
    only on the covariances, so they can be reused across replicates.
    """
    omega = omega_yy + theta0 * theta0 * omega_xx
    omega_is = inv_sqrt(omega)
    omega_inv = omega_is @ omega_is
    delta = theta0 * omega_xx
    bracket = omega_xx - delta @ omega_inv @ delta
    bracket = 0.5 * (bracket + bracket.T)
    try:
        bracket_is = inv_sqrt(bracket)
    except NumericalError as exc:
        raise NumericalError(f"T bracket matrix: {exc}") from exc
    return omega_is, omega_inv, bracket_is, delta


def st_arrays(g0, g1, omega_xx, omega_yy, theta0, mats=None):
    """Vectorised S and T for moment vectors stacked along the first axis.

    ``g0`` and ``g1`` have shape ``(..., k)``. Returns ``(s, t)`` of the same
    shape.
    """
    omega_is, omega_inv, bracket_is, delta = mats or st_matrices(omega_xx, omega_yy, theta0)
    g = g0 - theta0 * g1
    big_g = -g1
    s = g @ omega_is.T
    resid = big_g - g @ (delta @ omega_inv).T
    t = resid @ bracket_is.T
    return s, t


def st_decomposition(ms, theta0):
    s, t = st_arrays(ms.g0, ms.g1, ms.omega_xx, ms.omega_yy, float(theta0))
    return STDecomposition(
        s_bar=s, t_bar=t, q_s=float(s @ s), q_st=float(s @ t), q_t=float(t @ t)
    )


def clr_statistic(q_s, q_st, q_t):
    """Closed-form CLR statistic; vectorised.

    The discriminant ``(q_s + q_t)^2 - 4 (q_s q_t - q_st^2)`` is evaluated in
    the algebraically equal form ``(q_s - q_t)^2 + 4 q_st^2``, which cannot
    go negative through cancellation.
    """
    q_s, q_st, q_t = (np.asarray(a, dtype=float) for a in (q_s, q_st, q_t))
    if not (np.all(np.isfinite(q_s)) and np.all(np.isfinite(q_st)) and np.all(np.isfinite(q_t))):
        raise NumericalError("non-finite input to the CLR statistic.")
    disc = (q_s - q_t) ** 2 + 4.0 * q_st**2
    stat = 0.5 * (q_s - q_t + np.sqrt(disc))
    return float(stat) if stat.ndim == 0 else stat


class ClrDraws:
    """Fixed chi-square draws for the conditional CLR null distribution.

    One instance can be shared across grid points or replicates (common random
    numbers), which makes p-values a deterministic function of the data.
    """

    def __init__(self, k, mc_draws=100_000, seed=0):
        if k < 1:
            raise ValidationError("k must be positive.")
        self.k = int(k)
        self.mc_draws = int(mc_draws)
        rng = np.random.default_rng(seed)
        self.chi1 = rng.chisquare(1, self.mc_draws)
        self.chik1 = rng.chisquare(self.k - 1, self.mc_draws) if self.k > 1 else np.zeros(self.mc_draws)

    def null_statistics(self, q_t):
        """CLR draws under H0 holding the strength statistic at ``q_t``."""
        a = self.chi1 + self.chik1 - q_t
        return 0.5 * (a + np.sqrt(a * a + 4.0 * self.chi1 * q_t))

    def p_values(self, statistic, q_t, chunk=64):
        """Conditional p-values ``P(CLR* >= statistic | q_t)``; vectorised."""
        statistic = np.atleast_1d(np.asarray(statistic, dtype=float))
        q_t = np.broadcast_to(np.asarray(q_t, dtype=float), statistic.shape)
        if self.k == 1:
            return stats.chi2.sf(statistic, 1)
        out = np.empty(statistic.shape)
        s = self.chi1 + self.chik1
        for start in range(0, statistic.size, chunk):
            sl = slice(start, start + chunk)
            q = q_t[sl][:, None]
            a = s[None, :] - q
            draws = 0.5 * (a + np.sqrt(a * a + 4.0 * self.chi1[None, :] * q))
            # tolerance keeps ties at the observed value on the upper side
            out[sl] = np.mean(draws >= statistic[sl][:, None] - 1e-12, axis=1)
        return out


def ar_test(ms, theta0):
    d = st_decomposition(ms, theta0)
    return TestResult("AR", d.q_s, float(stats.chi2.sf(d.q_s, ms.k)), float(theta0), ms.k, d.q_t)


def lm_test(ms, theta0):
    d = st_decomposition(ms, theta0)
    if d.q_t <= _QT_MIN:
        raise NumericalError("degenerate instrument strength (Q_T ~ 0); LM undefined.")
    stat = d.q_st**2 / d.q_t
    return TestResult("LM", stat, float(stats.chi2.sf(stat, 1)), float(theta0), 1, d.q_t)


def clr_test(ms, theta0, mc_draws=100_000, seed=0, draws=None):
    """CLR test with Monte-Carlo conditional p-value.

    Pass ``draws`` (a :class:`ClrDraws`) to reuse one draw set across calls.
    """
    d = st_decomposition(ms, theta0)
    stat = clr_statistic(d.q_s, d.q_st, d.q_t)
    if ms.k == 1:
        return TestResult("CLR", stat, float(stats.chi2.sf(stat, 1)), float(theta0), 1, d.q_t)
    draws = draws or ClrDraws(ms.k, mc_draws, seed)
    p = float(draws.p_values(stat, d.q_t)[0])
    return TestResult(
        "CLR",
        stat,
        p,
        float(theta0),
        ms.k,
        d.q_t,
        mc_draws=draws.mc_draws,
        mc_se=float(np.sqrt(p * (1.0 - p) / draws.mc_draws)),
    )


def run_test(ms, method, theta0, draws=None, mc_draws=100_000, seed=0):
    method = method.upper()
    if method == "AR":
        return ar_test(ms, theta0)
    if method == "LM":
        return lm_test(ms, theta0)
    if method == "CLR":
        return clr_test(ms, theta0, mc_draws=mc_draws, seed=seed, draws=draws)
    raise ValidationError(f"unknown test {method!r}; expected one of {METHODS}.")


@dataclass(frozen=True)
class ConfidenceSet:
    """Accepted region of a grid inversion, as maximal runs of grid points.

    Interval endpoints are the outermost accepted grid points of each run.
    """

    intervals: tuple
    alpha: float
    grid_spec: tuple
    unbounded_low: bool = False
    unbounded_high: bool = False
    undecidable: tuple = ()
    p_values: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def empty(self):
        return len(self.intervals) == 0

    @property
    def disjoint(self):
        return len(self.intervals) > 1

    @property
    def lower(self):
        return self.intervals[0][0] if self.intervals else np.nan

    @property
    def upper(self):
        return self.intervals[-1][1] if self.intervals else np.nan

    def contains(self, theta):
        return any(lo <= theta <= hi for lo, hi in self.intervals)

    def to_record(self):
        return {
            "intervals": [[lo, hi] for lo, hi in self.intervals],
            "alpha": self.alpha,
            "grid": list(self.grid_spec),
            "empty": self.empty,
            "unbounded_low": self.unbounded_low,
            "unbounded_high": self.unbounded_high,
            "disjoint": self.disjoint,
            "undecidable": list(self.undecidable),
        }


def confidence_set_from_pvalues(grid, p_values, alpha, grid_spec, accept=None):
    """Collapse per-grid-point p-values into a :class:`ConfidenceSet`.

    ``p_values`` may contain NaN for undecidable points, which are excluded
    from the intervals and listed separately. ``accept`` overrides the
    ``p >= alpha`` rule when a test decides by another criterion.
    """
    grid = np.asarray(grid, dtype=float)
    p_values = np.asarray(p_values, dtype=float)
    if accept is None:
        accept = np.where(np.isnan(p_values), False, p_values >= alpha)
    accept = np.asarray(accept, dtype=bool) & ~np.isnan(p_values)
    intervals = []
    j = 0
    n = grid.size
    while j < n:
        if accept[j]:
            start = j
            while j + 1 < n and accept[j + 1]:
                j += 1
            intervals.append((float(grid[start]), float(grid[j])))
        j += 1
    return ConfidenceSet(
        intervals=tuple(intervals),
        alpha=float(alpha),
        grid_spec=tuple(grid_spec),
        unbounded_low=bool(accept[0]) if n else False,
        unbounded_high=bool(accept[-1]) if n else False,
        undecidable=tuple(float(g) for g in grid[np.isnan(p_values)]),
        p_values=p_values,
    )


def default_grid(fit=None, n=400, fallback=(-10.0, 10.0)):
    """Grid centred at a LIML fit with half-width ``10 * se``."""
    if fit is not None and np.isfinite(fit.variance) and fit.variance > 0:
        half = 10.0 * np.sqrt(fit.variance)
        return (fit.theta_hat - half, fit.theta_hat + half, n)
    return (fallback[0], fallback[1], n)


def pvalues_on_grid(ms, method, thetas, draws=None, mc_draws=100_000, seed=0):
    """p-values of one test at several ``theta0`` values."""
    method = method.upper()
    thetas = np.asarray(thetas, dtype=float)
    if method == "CLR" and ms.k > 1 and draws is None:
        draws = ClrDraws(ms.k, mc_draws, seed)
    qs, qst, qt = (np.empty(thetas.size) for _ in range(3))
    for i, th in enumerate(thetas):
        d = st_decomposition(ms, th)
        qs[i], qst[i], qt[i] = d.q_s, d.q_st, d.q_t
    if method == "AR":
        return stats.chi2.sf(qs, ms.k)
    if method == "LM":
        with np.errstate(divide="ignore", invalid="ignore"):
            lm = np.where(qt > _QT_MIN, qst**2 / np.where(qt > _QT_MIN, qt, 1.0), np.nan)
        return np.where(np.isnan(lm), np.nan, stats.chi2.sf(lm, 1))
    if method == "CLR":
        clr = clr_statistic(qs, qst, qt)
        if ms.k == 1:
            return stats.chi2.sf(clr, 1)
        return draws.p_values(clr, qt)
    raise ValidationError(f"unknown test {method!r}; expected one of {METHODS}.")


def invert_test(ms, method, alpha=0.05, grid=None, fit=None, mc_draws=100_000, seed=0, draws=None):
    """Confidence set ``{theta0 : p(theta0) >= alpha}`` over an even grid.

    Parameters
    ----------
    ms : MomentSystem
    method : {"AR", "LM", "CLR"}
    alpha : float
    grid : (lo, hi, n), optional
        Defaults to :func:`default_grid` around ``fit`` (or ``[-10, 10]``).
    fit : LimlFit, optional
    mc_draws, seed : int
        CLR draw-set size and seed; the same draws serve every grid point.

    Returns
    -------
    ConfidenceSet
        Possibly empty (every grid point rejected) or disjoint; LM points with
        degenerate strength are reported as undecidable.
    """
    lo, hi, n = grid if grid is not None else default_grid(fit)
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi and int(n) >= 2):
        raise ValidationError(f"invalid grid ({lo}, {hi}, {n}).")
    thetas = np.linspace(lo, hi, int(n))
    p = pvalues_on_grid(ms, method, thetas, draws=draws, mc_draws=mc_draws, seed=seed)
    return confidence_set_from_pvalues(thetas, p, alpha, (float(lo), float(hi), int(n)))
