"""Moment system shared by every estimator and test.

For an instrument transform ``W`` (p x k) the estimating equations are
``g(theta) = W'(beta_y - theta * beta_x)`` with variance
``Omega(theta) = W'(Sigma_Y + theta^2 Sigma_X)W``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

FACTOR = "factor"
VARIANT_SUBSET = "variant_subset"


@dataclass(frozen=True)
class InstrumentTransform:
    w: np.ndarray
    kind: str = FACTOR
    labels: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if w.ndim != 2 or w.shape[1] < 1:
            raise ValidationError(f"instrument transform must be p x k with k >= 1. Got {w.shape}.")
        if w.shape[1] > w.shape[0]:
            raise ValidationError(f"more instruments ({w.shape[1]}) than variants ({w.shape[0]}).")
        if self.kind not in (FACTOR, VARIANT_SUBSET):
            raise ValidationError(f"unknown instrument kind {self.kind!r}.")
        sv = np.linalg.svd(w, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise ValidationError("instrument transform is rank deficient.")
        labels = tuple(self.labels) if self.labels else tuple(
            f"{'F' if self.kind == FACTOR else 'V'}{j + 1}" for j in range(w.shape[1])
        )
        if len(labels) != w.shape[1]:
            raise ValidationError("need one label per instrument.")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "labels", labels)

    @property
    def k(self):
        return self.w.shape[1]


def factor_transform(basis):
    return InstrumentTransform(basis.loadings, FACTOR)


@dataclass(frozen=True)
class MomentSystem:
    """Instrument-space summaries of a dataset.

    ``g0 = W'beta_y``, ``g1 = W'beta_x``, ``big_g = -g1`` (the Jacobian of
    ``g``), ``omega_xx = W'Sigma_X W`` and ``omega_yy = W'Sigma_Y W``.
    """

    transform: InstrumentTransform
    g0: np.ndarray
    g1: np.ndarray
    omega_xx: np.ndarray
    omega_yy: np.ndarray

    @property
    def big_g(self):
        return -self.g1

    @property
    def k(self):
        return self.g0.shape[0]

    @property
    def kind(self):
        return self.transform.kind

    def g(self, theta):
        return self.g0 - theta * self.g1

    def omega(self, theta):
        return self.omega_yy + theta * theta * self.omega_xx

    def subsystem(self, columns):
        """Moment system using only instrument ``columns`` (``W Gamma``)."""
        idx = np.asarray(columns, dtype=int)
        if idx.size == 0:
            raise ValidationError("subsystem needs at least one instrument.")
        t = self.transform
        sub_t = InstrumentTransform(t.w[:, idx], t.kind, tuple(t.labels[i] for i in idx))
        ix = np.ix_(idx, idx)
        return MomentSystem(sub_t, self.g0[idx], self.g1[idx], self.omega_xx[ix], self.omega_yy[ix])


def build_moments(ds, cov, transform):
    """Project dataset ``ds`` and covariances ``cov`` onto ``transform``."""
    w = transform.w
    if w.shape[0] != ds.p:
        raise ValidationError(f"transform has {w.shape[0]} rows but dataset has {ds.p} variants.")
    oxx = w.T @ cov.sigma_xx @ w
    oyy = w.T @ cov.sigma_yy @ w
    return MomentSystem(
        transform=transform,
        g0=w.T @ ds.beta_y,
        g1=w.T @ ds.beta_x,
        omega_xx=0.5 * (oxx + oxx.T),
        omega_yy=0.5 * (oyy + oyy.T),
    )


def g_of_theta(ms, theta):
    return ms.g(theta)


def omega_of_theta(ms, theta):
    return ms.omega(theta)
