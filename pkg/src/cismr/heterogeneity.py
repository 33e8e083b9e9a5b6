"""Cochran's Q heterogeneity diagnostic on a moment system."""

from dataclasses import dataclass

from scipy import stats

from .errors import ValidationError
from .liml import liml_objective


@dataclass(frozen=True)
class QResult:
    """``substituted`` marks Q evaluated at a confidence-interval midpoint.

    No degrees-of-freedom correction is made for that substitution, which
    makes the p-value conservative.
    """

    q_stat: float
    df: int
    p_value: float
    evaluated_at: float
    substituted: bool = False

    def to_record(self):
        return {
            "q_stat": self.q_stat,
            "df": self.df,
            "p_value": self.p_value,
            "evaluated_at": self.evaluated_at,
            "substituted": self.substituted,
        }


def cochran_q(ms, theta, estimated_theta=True, substituted=False):
    """``Q = g(theta)' Omega(theta)^{-1} g(theta)`` against chi2 with ``k - 1`` df.

    With ``estimated_theta=False`` (theta fixed a priori) the reference has
    ``k`` df.
    """
    df = ms.k - 1 if (estimated_theta or substituted) else ms.k
    if df < 1:
        raise ValidationError(f"Cochran's Q needs k >= 2 instruments (k={ms.k}).")
    q = liml_objective(ms, float(theta))
    return QResult(
        q_stat=q,
        df=df,
        p_value=float(stats.chi2.sf(q, df)),
        evaluated_at=float(theta),
        substituted=bool(substituted),
    )
