"""Factor pre-testing and the selection-adjusted S-LIML test.

Each estimated factor is screened with a two-sided t-test of its exposure
association. LIML is refitted on the survivors, and H0: theta = theta0 is
tested against the distribution of the estimate conditional on the selection
event and on a sufficient statistic ``u`` for the nuisance strength
parameter. That conditional distribution is simulated by rejection sampling.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import RareSelectionError, SelectionError, ValidationError
from .liml import fit_liml
from .robust import confidence_set_from_pvalues


@dataclass(frozen=True)
class Selection:
    t_stats: np.ndarray
    delta: float
    c_delta: float
    selected: tuple

    @property
    def r(self):
        return self.t_stats.size

    @property
    def r_star(self):
        return len(self.selected)

    @property
    def gamma(self):
        g = np.zeros((self.r, self.r_star))
        g[list(self.selected), np.arange(self.r_star)] = 1.0
        return g

    @property
    def mask(self):
        m = np.zeros(self.r, dtype=bool)
        m[list(self.selected)] = True
        return m


@dataclass(frozen=True)
class SelectiveFit:
    """Ingredients of the conditional distribution at one ``theta0``."""

    fit: object
    d_hat: np.ndarray
    c_g: np.ndarray
    u: np.ndarray
    mc_quantiles: tuple
    accepted_draws: int


@dataclass(frozen=True)
class SelectiveTestResult:
    theta0: float
    theta_hat_s: float
    selected_indices: tuple
    delta: float
    quantiles: tuple
    accepted_draws: int
    p_value: float
    decision: bool
    alpha: float
    details: SelectiveFit = None

    def to_record(self):
        return {
            "theta0": self.theta0,
            "theta_hat_S": self.theta_hat_s,
            "selected_indices": list(self.selected_indices),
            "delta": self.delta,
            "quantiles": list(self.quantiles),
            "accepted_draws": self.accepted_draws,
            "p_value": self.p_value,
            "decision": "reject" if self.decision else "accept",
        }


def critical_value(delta):
    """Two-sided standard-normal critical value ``z_{1 - delta/2}``."""
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1).")
    return float(stats.norm.ppf(1.0 - delta / 2.0))


def selection_from_tstats(t_stats, delta):
    t_stats = np.asarray(t_stats, dtype=float)
    c = critical_value(delta)
    selected = tuple(int(j) for j in np.flatnonzero(np.abs(t_stats) > c))
    return Selection(t_stats=t_stats, delta=float(delta), c_delta=c, selected=selected)


def pretest_factors(ms, delta):
    """Screen factors by ``|G_j| / sqrt((Omega_X)_jj) > z_{1-delta/2}``.

    Raises
    ------
    SelectionError
        If no factor passes.
    """
    t = ms.big_g / np.sqrt(np.diag(ms.omega_xx))
    sel = selection_from_tstats(t, delta)
    if sel.r_star == 0:
        raise SelectionError(f"no factor passes relevance pre-test at delta={delta:g}")
    return sel


def fit_sliml(ms, sel, **kwargs):
    """LIML on the selected factors only."""
    if sel.r_star < 1:
        raise SelectionError("empty selection.")
    return fit_liml(ms.subsystem(sel.selected), **kwargs)


def conditioning_components(ms, sel, sliml):
    """Return ``(d_hat, c_g, v_s)`` evaluated at the S-LIML estimate."""
    idx = list(sel.selected)
    theta_s = sliml.theta_hat
    v_s = sliml.variance
    d_hat = np.diag(ms.omega_xx).copy()
    omega_s = ms.omega(theta_s)[np.ix_(idx, idx)]
    g_s = ms.big_g[idx]
    w = np.linalg.solve(omega_s, g_s)
    c_g = -(ms.omega_xx[:, idx] @ w) * v_s * theta_s / np.sqrt(d_hat)
    return d_hat, c_g, v_s


def sufficient_statistic(ms, d_hat, c_g, v_s, theta_s, theta0):
    return ms.big_g / np.sqrt(d_hat) - c_g * (theta_s - theta0) / v_s


class _Draws:
    """Standard-normal draws that can be extended without changing the prefix."""

    def __init__(self, n, seed):
        self._rng = np.random.default_rng(seed)
        self.k = self._rng.standard_normal(int(n))

    def grow_to(self, n):
        if n > self.k.size:
            self.k = np.concatenate([self.k, self._rng.standard_normal(n - self.k.size)])
        return self.k[:n]


def _accepted(u, c_g, v_s, kdraws, mask, c_delta, chunk=50_000):
    scale = c_g / np.sqrt(v_s)
    keep = np.empty(kdraws.size, dtype=bool)
    for start in range(0, kdraws.size, chunk):
        k = kdraws[start : start + chunk]
        ubar = np.abs(u[None, :] + k[:, None] * scale[None, :]) > c_delta
        keep[start : start + chunk] = np.all(ubar == mask[None, :], axis=1)
    return keep


def conditional_test(
    ms,
    sel,
    sliml,
    theta0,
    alpha=0.05,
    mc_draws=200_000,
    min_accept=200,
    seed=0,
    draws=None,
):
    """Selection-adjusted test of H0: theta = theta0 for the S-LIML estimate.

    Parameters
    ----------
    ms : MomentSystem
        Full factor system (all ``r`` factors).
    sel : Selection
    sliml : LimlFit
        Fit on the selected subsystem.
    theta0 : float
    alpha : float
    mc_draws : int
        Initial number of N(0, 1) draws; grown by doubling up to 8x when fewer
        than ``min_accept`` draws reproduce the selection event.
    seed : int
    draws : optional
        Shared draw set (see :func:`selective_interval`).

    Returns
    -------
    SelectiveTestResult

    Raises
    ------
    RareSelectionError
        If the selection event stays too rare under H0 after growing the draws.
    """
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1).")
    d_hat, c_g, v_s = conditioning_components(ms, sel, sliml)
    theta_s = sliml.theta_hat
    u = sufficient_statistic(ms, d_hat, c_g, v_s, theta_s, theta0)
    draws = draws or _Draws(mc_draws, seed)
    mask = sel.mask

    n = int(mc_draws)
    cap = 8 * n
    while True:
        k = draws.grow_to(n)
        keep = _accepted(u, c_g, v_s, k, mask, sel.c_delta)
        n_acc = int(np.sum(keep))
        if n_acc >= min_accept or n >= cap:
            break
        n = min(2 * n, cap)
    if n_acc < min_accept:
        raise RareSelectionError(
            f"selection event too rare under H0 at theta0={theta0:g} "
            f"({n_acc} of {n} draws accepted)"
        )

    values = np.sort(np.sqrt(v_s) * k[keep])
    lo, hi = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0])
    x = theta_s - theta0
    cdf = np.searchsorted(values, x, side="right") / values.size
    p = float(min(1.0, 2.0 * min(cdf, 1.0 - cdf)))
    details = SelectiveFit(
        fit=sliml, d_hat=d_hat, c_g=c_g, u=u, mc_quantiles=(float(lo), float(hi)), accepted_draws=n_acc
    )
    return SelectiveTestResult(
        theta0=float(theta0),
        theta_hat_s=float(theta_s),
        selected_indices=sel.selected,
        delta=sel.delta,
        quantiles=(float(lo), float(hi)),
        accepted_draws=n_acc,
        p_value=p,
        decision=bool(x < lo or x > hi),
        alpha=float(alpha),
        details=details,
    )


def selective_interval(ms, sel, sliml, alpha=0.05, grid=None, mc_draws=200_000, min_accept=200, seed=0):
    """Invert :func:`conditional_test` over an even ``theta0`` grid.

    One draw set is shared by all grid points. Grid points where the selection
    event is too rare are reported in ``undecidable`` and excluded.
    """
    if grid is None:
        half = 10.0 * np.sqrt(sliml.variance)
        grid = (sliml.theta_hat - half, sliml.theta_hat + half, 400)
    lo, hi, n = grid
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi and int(n) >= 2):
        raise ValidationError(f"invalid grid ({lo}, {hi}, {n}).")
    thetas = np.linspace(lo, hi, int(n))
    draws = _Draws(mc_draws, seed)
    p = np.empty(thetas.size)
    accept = np.zeros(thetas.size, dtype=bool)
    for i, th in enumerate(thetas):
        try:
            res = conditional_test(
                ms, sel, sliml, th, alpha, mc_draws=mc_draws, min_accept=min_accept, draws=draws
            )
        except RareSelectionError:
            p[i] = np.nan
            continue
        p[i] = res.p_value
        accept[i] = not res.decision
    return confidence_set_from_pvalues(thetas, p, alpha, (float(lo), float(hi), int(n)), accept=accept)
