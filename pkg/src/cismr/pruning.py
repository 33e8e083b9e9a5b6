"""Greedy LD pruning to build variant-level instrument sets."""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .moments import VARIANT_SUBSET, InstrumentTransform

# the five thresholds compared in the CLR-xx baselines
DEFAULT_THRESHOLDS = (0.01, 0.2, 0.4, 0.6, 0.8)


@dataclass(frozen=True)
class PruneResult:
    kept: tuple
    threshold_r2: float
    order_stat: np.ndarray

    @property
    def method_name(self):
        return clr_method_name(self.threshold_r2)


def clr_method_name(threshold_r2):
    return f"CLR-{int(round(100 * threshold_r2)):02d}"


def prune_indices(rho, strength, threshold_r2):
    """Greedy pruning on raw arrays; see :func:`prune`."""
    if not 0 < threshold_r2 <= 1:
        raise ValidationError("threshold_r2 must lie in (0, 1].")
    strength = np.asarray(strength, dtype=float)
    # stable sort on -|t| keeps the lower index first on ties
    order = np.argsort(-np.abs(strength), kind="stable")
    r2 = np.asarray(rho, dtype=float) ** 2
    limit = threshold_r2 + 1e-12
    kept = [int(order[0])]
    max_r2 = r2[order[0]].copy()
    for j in order[1:]:
        if max_r2[j] <= limit:
            kept.append(int(j))
            np.maximum(max_r2, r2[j], out=max_r2)
    return tuple(kept)


def prune(ds, threshold_r2):
    """Keep variants in order of ``|beta_x / se_x|`` while their squared
    correlation with every variant already kept stays ``<= threshold_r2``."""
    strength = ds.beta_x / ds.se_x
    kept = prune_indices(ds.rho, strength, threshold_r2)
    return PruneResult(kept=kept, threshold_r2=float(threshold_r2), order_stat=np.abs(strength))


def variant_instrument_set(pr, p, variant_ids=None):
    """Selection matrix with one identity column per kept variant."""
    w = np.zeros((p, len(pr.kept)))
    w[list(pr.kept), np.arange(len(pr.kept))] = 1.0
    labels = tuple(variant_ids[j] for j in pr.kept) if variant_ids is not None else ()
    return InstrumentTransform(w, VARIANT_SUBSET, labels)
