"""LIML estimation on a moment system, with Wald inference."""

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import NumericalError


@dataclass(frozen=True)
class LimlFit:
    """Result of :func:`fit_liml`.

    ``multimodal`` is set when a second grid-local minimum comes within 1% of
    the global one; the fit is still reported.
    """

    theta_hat: float
    variance: float
    objective_at_min: float
    n_grid: int
    converged: bool
    multimodal: bool = False
    bracket: tuple = (np.nan, np.nan)
    trace: tuple = field(default=(), repr=False)

    @property
    def se(self):
        return float(np.sqrt(self.variance))


def _solve(omega, rhs):
    try:
        return np.linalg.solve(omega, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Omega(theta) is singular: {exc}") from exc


def liml_objective(ms, theta):
    """``g(theta)' Omega(theta)^{-1} g(theta)``; vectorised over ``theta``."""
    theta = np.asarray(theta, dtype=float)
    th = theta.reshape(-1)
    g = ms.g0[None, :] - th[:, None] * ms.g1[None, :]
    omega = ms.omega_yy[None] + (th * th)[:, None, None] * ms.omega_xx[None]
    sol = _solve(omega, g[..., None])[..., 0]
    out = np.einsum("nk,nk->n", g, sol)
    if not np.all(np.isfinite(out)):
        raise NumericalError("LIML objective is not finite.")
    out = np.maximum(out, 0.0)
    return float(out[0]) if theta.ndim == 0 else out.reshape(theta.shape)


def liml_gradient(ms, theta):
    """Derivative of :func:`liml_objective` in ``theta``.

    ``2 G' Omega^{-1} g - 2 theta g' Omega^{-1} Omega_X Omega^{-1} g`` with
    ``G = -g1`` the Jacobian of ``g``.
    """
    theta = float(theta)
    g = ms.g(theta)
    a = _solve(ms.omega(theta), g)
    return float(2.0 * ms.big_g @ a - 2.0 * theta * a @ ms.omega_xx @ a)


def liml_variance(ms, theta):
    """Plug-in variance ``(G' Omega(theta)^{-1} G)^{-1}``."""
    info = float(ms.big_g @ _solve(ms.omega(theta), ms.big_g))
    if not info > 0:
        raise NumericalError("LIML information is not positive.")
    return 1.0 / info


def auto_bracket(ms):
    """Bracket from the per-instrument ratio estimates ``g0_j / g1_j``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = ms.g0 / ms.g1
    ratios = ratios[np.isfinite(ratios)]
    if ratios.size == 0:
        return -1.0, 1.0
    spread = 10.0 * float(np.max(np.abs(ratios))) + 1.0
    return float(np.min(ratios)) - spread, float(np.max(ratios)) + spread


def fit_liml(ms, bracket=None, grid_points=201, keep_trace=False):
    """Minimise the LIML objective by grid scan plus bounded Brent refinement.

    Parameters
    ----------
    ms : MomentSystem
    bracket : (float, float), optional
        Search interval; defaults to :func:`auto_bracket`.
    grid_points : int, optional
        Number of evenly spaced coarse grid points. The per-instrument ratio
        estimates inside the bracket are added to the grid.
    keep_trace : bool, optional
        Store the coarse grid evaluations on the result.

    Returns
    -------
    LimlFit
    """
    lo, hi = auto_bracket(ms) if bracket is None else (float(bracket[0]), float(bracket[1]))
    if not lo < hi:
        raise NumericalError(f"invalid bracket ({lo}, {hi}).")
    grid = np.linspace(lo, hi, int(grid_points))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = ms.g0 / ms.g1
    extra = ratios[np.isfinite(ratios) & (ratios > lo) & (ratios < hi)]
    grid = np.unique(np.concatenate([grid, extra]))
    values = liml_objective(ms, grid)
    if not np.any(np.isfinite(values)):
        raise NumericalError("LIML objective is non-finite over the whole bracket.")

    i = int(np.argmin(values))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        lambda t: liml_objective(ms, t),
        bounds=(a, b),
        method="bounded",
        options={"xatol": 1e-11, "maxiter": 500},
    )
    theta_hat, f_hat = float(res.x), float(res.fun)
    if f_hat > values[i]:
        theta_hat, f_hat = float(grid[i]), float(values[i])
    converged = bool(res.success) and lo < theta_hat < hi

    interior = (values[1:-1] <= values[:-2]) & (values[1:-1] <= values[2:])
    local = np.concatenate([[values[0] <= values[1]], interior, [values[-1] <= values[-2]]])
    near = values[local] <= 1.01 * values[i] + 1e-12
    multimodal = int(np.sum(near)) > 1

    return LimlFit(
        theta_hat=theta_hat,
        variance=liml_variance(ms, theta_hat),
        objective_at_min=f_hat,
        n_grid=int(grid.size),
        converged=converged,
        multimodal=multimodal,
        bracket=(lo, hi),
        trace=tuple(zip(grid.tolist(), values.tolist())) if keep_trace else (),
    )


def wald_interval(fit, alpha=0.05):
    """``theta_hat -/+ z_{1-alpha/2} * sqrt(V)``."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1].")
    half = stats.norm.ppf(1.0 - alpha / 2.0) * np.sqrt(fit.variance)
    return fit.theta_hat - half, fit.theta_hat + half


def wald_test(fit, theta0, alpha=0.05):
    """Two-sided Wald test; returns ``(statistic, p_value, reject)``."""
    z = (fit.theta_hat - theta0) / np.sqrt(fit.variance)
    p = 2.0 * stats.norm.sf(abs(z))
    return float(z * z), float(p), bool(p < alpha)
