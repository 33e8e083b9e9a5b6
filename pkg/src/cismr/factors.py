"""Factor loadings from the variant correlation matrix, and rank heuristics."""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .psd import inv_sqrt, sym_eigen


@dataclass(frozen=True)
class FactorBasis:
    """Estimated loadings ``(p, r)`` scaled so that ``L'L / p = I_r``."""

    loadings: np.ndarray
    r: int
    eigenvalues: np.ndarray
    cum_share: np.ndarray

    @property
    def p(self):
        return self.loadings.shape[0]

    def projector(self):
        lam = self.loadings
        return lam @ np.linalg.solve(lam.T @ lam, lam.T)


def scree(rho):
    """Descending eigenvalues of ``rho`` and their cumulative shares of ``p``."""
    es = sym_eigen(rho)
    p = es.values.size
    return es.values, np.cumsum(es.values) / p


def estimate_loadings(rho, r):
    """Top-``r`` principal directions of ``rho`` scaled by ``sqrt(p)``.

    The rescaling ``L (L'L/p)^{-1/2}`` is applied explicitly even though it is
    the identity map for orthonormal eigenvectors.
    """
    rho = np.asarray(rho, dtype=float)
    p = rho.shape[0]
    if not (1 <= int(r) <= p):
        raise ValidationError(f"number of factors r={r} must lie in [1, {p}].")
    r = int(r)
    es = sym_eigen(rho)
    raw = np.sqrt(p) * es.vectors[:, :r]
    loadings = raw @ inv_sqrt(raw.T @ raw / p)
    return FactorBasis(
        loadings=loadings,
        r=r,
        eigenvalues=es.values,
        cum_share=np.cumsum(es.values) / p,
    )


def suggest_rank(eigenvalues, policy="gap", k_max=None, threshold=None):
    """Suggest a number of factors from a descending spectrum.

    Parameters
    ----------
    eigenvalues : array_like
        Descending eigenvalues.
    policy : {"gap", "ratio", "share"}
        ``gap`` maximises ``lam_k - lam_{k+1}``, ``ratio`` maximises
        ``lam_k / lam_{k+1}`` (both over ``k <= k_max``); ``share`` returns the
        smallest ``k`` whose cumulative share reaches ``threshold``.
    k_max : int, optional
        Largest rank considered; defaults to ``p - 1``.
    threshold : float, optional
        Required for ``policy="share"``.

    Returns
    -------
    int
        Suggested rank (1-based). Ties go to the smallest ``k``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    p = lam.size
    if p == 0:
        raise ValidationError("empty spectrum.")
    if policy == "share":
        if threshold is None or not 0 < threshold <= 1:
            raise ValidationError("share policy needs a threshold in (0, 1].")
        share = np.cumsum(lam) / np.sum(lam)
        hits = np.flatnonzero(share >= threshold - 1e-12)
        return int(hits[0]) + 1 if hits.size else p
    if p == 1:
        return 1
    k_max = p - 1 if k_max is None else int(k_max)
    if not 1 <= k_max < p:
        raise ValidationError(f"k_max={k_max} must lie in [1, {p - 1}].")
    head, nxt = lam[:k_max], lam[1 : k_max + 1]
    if policy == "gap":
        crit = head - nxt
    elif policy == "ratio":
        with np.errstate(divide="ignore", invalid="ignore"):
            crit = np.where(nxt > 0, head / np.where(nxt > 0, nxt, 1.0), np.inf)
    else:
        raise ValidationError(f"unknown rank policy {policy!r}.")
    return int(np.argmax(crit)) + 1


def parse_rank_policy(text):
    """Parse ``"8"``, ``"auto:gap"``, ``"auto:ratio"`` or ``"auto:share=0.96"``.

    Returns ``(r, None, None)`` for a fixed rank, else ``(None, policy, threshold)``.
    """
    text = str(text).strip()
    if not text.startswith("auto:"):
        try:
            r = int(text)
        except ValueError:
            raise ValidationError(f"invalid rank {text!r}.") from None
        if r < 1:
            raise ValidationError("rank must be positive.")
        return r, None, None
    rule = text[5:]
    if rule in ("gap", "ratio"):
        return None, rule, None
    if rule.startswith("share="):
        try:
            t = float(rule[6:])
        except ValueError:
            raise ValidationError(f"invalid share threshold in {text!r}.") from None
        return None, "share", t
    raise ValidationError(f"invalid rank policy {text!r}.")
