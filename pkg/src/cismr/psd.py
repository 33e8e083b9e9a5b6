"""Symmetric-matrix primitives with an explicit tolerance policy."""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class EigenSystem:
    """Full spectrum of a symmetric matrix, eigenvalues in descending order.

    Each column of ``vectors`` has its largest-magnitude entry non-negative
    (first such entry on ties), so repeated calls are bit-identical.
    """

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T


def _check_square(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be square. Got shape {m.shape}.")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} has non-finite entries.")
    return m


def _check_symmetric(m, atol):
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > atol * scale:
        raise ValidationError(f"matrix is not symmetric (max asymmetry {asym:.3g}).")


def sym_eigen(m):
    """Eigendecomposition of a symmetric matrix with deterministic signs.

    Parameters
    ----------
    m : array_like of shape (p, p)
        Symmetric within 1e-8 (relative to its largest entry).

    Returns
    -------
    EigenSystem
        Eigenvalues sorted descending and orthonormal eigenvectors.
    """
    m = _check_square(m)
    _check_symmetric(m, 1e-8)
    try:
        values, vectors = np.linalg.eigh(0.5 * (m + m.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigen solver did not converge: {exc}") from exc
    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    # argmax returns the first maximiser, which is the lowest-index tie break
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors *= signs
    return EigenSystem(values=values, vectors=vectors)


def _floored_eigen(m, rel_floor):
    es = sym_eigen(m)
    top = es.values[0] if es.values.size else 0.0
    if top <= 0.0:
        raise NumericalError("matrix has no positive eigenvalue.")
    if es.values[-1] < -rel_floor * top:
        raise NumericalError(
            f"matrix is indefinite beyond tolerance (min eigenvalue {es.values[-1]:.3g}, "
            f"max {top:.3g})."
        )
    floor = rel_floor * top
    n_floored = int(np.sum(es.values < floor))
    return np.maximum(es.values, floor), es.vectors, n_floored


def inv_sqrt(m, rel_floor=1e-10, return_n_floored=False):
    """Symmetric inverse square root of a PSD matrix.

    Eigenvalues below ``rel_floor * max eigenvalue`` are raised to that floor
    instead of being dropped, so the result stays full rank.

    Parameters
    ----------
    m : array_like of shape (k, k)
        Symmetric PSD matrix.
    rel_floor : float, optional
        Relative eigenvalue floor.
    return_n_floored : bool, optional
        Also return how many eigenvalues were floored.

    Raises
    ------
    NumericalError
        If ``m`` is zero or its smallest eigenvalue is below
        ``-rel_floor * max eigenvalue``.
    """
    vals, vecs, n_floored = _floored_eigen(m, rel_floor)
    out = (vecs / np.sqrt(vals)) @ vecs.T
    out = 0.5 * (out + out.T)
    if return_n_floored:
        return out, n_floored
    return out


def sqrt_psd(m, rel_floor=1e-10):
    """Symmetric square root of a PSD matrix (same floor policy as ``inv_sqrt``)."""
    vals, vecs, _ = _floored_eigen(m, rel_floor)
    out = (vecs * np.sqrt(vals)) @ vecs.T
    return 0.5 * (out + out.T)


def min_eigenvalue(m):
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])


def nearest_correlation(m, tol=1e-8, max_iter=100):
    """Repair a symmetric unit-diagonal matrix into a correlation matrix.

    Alternating projections between the PSD cone and the unit-diagonal set,
    with Dykstra's correction on the PSD step (Higham, 2002). A matrix that is
    already PSD is returned unchanged.

    Parameters
    ----------
    m : array_like of shape (p, p)
        Symmetric with unit diagonal (within 1e-6).
    tol : float, optional
        Accepted negative eigenvalue and diagonal deviation.
    max_iter : int, optional
        Iteration cap.

    Returns
    -------
    numpy.ndarray
        Symmetric matrix with unit diagonal and minimum eigenvalue >= -tol.

    Raises
    ------
    NumericalError
        If no iterate satisfies the tolerances within ``max_iter`` iterations.
    """
    a = _check_square(m)
    _check_symmetric(a, 1e-8)
    if np.max(np.abs(np.diag(a) - 1.0)) > 1e-6:
        raise ValidationError("nearest_correlation expects a unit diagonal.")
    y = 0.5 * (a + a.T)
    np.fill_diagonal(y, 1.0)
    if min_eigenvalue(y) >= -tol:
        return y

    correction = np.zeros_like(y)
    achieved = min_eigenvalue(y)
    for _ in range(max_iter):
        r = y - correction
        vals, vecs = np.linalg.eigh(r)
        x = (vecs * np.maximum(vals, 0.0)) @ vecs.T
        x = 0.5 * (x + x.T)
        correction = x - r
        y_new = x.copy()
        np.fill_diagonal(y_new, 1.0)
        achieved = min_eigenvalue(y_new)
        if achieved >= -tol:
            return y_new
        # near convergence the PSD iterate rescaled to unit diagonal is both PSD
        # and unit-diagonal to rounding
        if np.linalg.norm(y_new - y) <= np.sqrt(tol) * np.linalg.norm(y_new):
            d = np.sqrt(np.clip(np.diag(x), 1e-300, None))
            xs = x / np.outer(d, d)
            np.fill_diagonal(xs, 1.0)
            xs = 0.5 * (xs + xs.T)
            if min_eigenvalue(xs) >= -tol:
                return xs
        y = y_new
    raise NumericalError(
        f"nearest_correlation did not converge in {max_iter} iterations "
        f"(min eigenvalue {achieved:.3g})."
    )
