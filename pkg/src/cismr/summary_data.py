"""Two-sample summary statistics and their sampling covariances."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .psd import min_eigenvalue, nearest_correlation

ASSOC_COLUMNS = ("variant_id", "beta_x", "se_x", "beta_y", "se_y")

# LD entries may overshoot [-1, 1] by this much from rounding
_CLAMP_TOL = 1e-6
_SYMMETRY_TOL = 1e-10
_DIAG_TOL = 1e-8


@dataclass(frozen=True)
class SummaryDataset:
    """Per-variant association estimates for exposure and outcome plus LD.

    ``rho`` is the variant correlation matrix in the same order as
    ``variant_ids``. ``meta`` holds optional sample sizes (``n_x``, ``n_y``,
    ``n_z``) that no computation consumes.
    """

    variant_ids: tuple
    beta_x: np.ndarray
    se_x: np.ndarray
    beta_y: np.ndarray
    se_y: np.ndarray
    rho: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = len(self.variant_ids)
        if p < 1:
            raise ValidationError("dataset needs at least one variant.")
        if len(set(self.variant_ids)) != p:
            seen = set()
            dup = next(v for v in self.variant_ids if v in seen or seen.add(v))
            raise ValidationError(f"duplicate variant id {dup!r}.")
        for name in ("beta_x", "se_x", "beta_y", "se_y"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (p,):
                raise ValidationError(
                    f"{name} has shape {arr.shape}, expected ({p},)."
                )
            if not np.all(np.isfinite(arr)):
                bad = int(np.flatnonzero(~np.isfinite(arr))[0]) + 1
                raise ValidationError(f"non-finite {name} at variant {bad}.")
            object.__setattr__(self, name, arr)
        for name in ("se_x", "se_y"):
            arr = getattr(self, name)
            if np.any(arr <= 0):
                bad = int(np.flatnonzero(arr <= 0)[0]) + 1
                raise ValidationError(f"non-positive standard error at variant {bad}.")
        object.__setattr__(self, "rho", validate_correlation(self.rho, p))
        object.__setattr__(self, "variant_ids", tuple(str(v) for v in self.variant_ids))

    @property
    def p(self):
        return len(self.variant_ids)

    def with_rho(self, rho):
        return SummaryDataset(
            self.variant_ids, self.beta_x, self.se_x, self.beta_y, self.se_y, rho, dict(self.meta)
        )


def validate_correlation(rho, p=None):
    """Check shape, symmetry and range of an LD matrix; clamp tiny overshoots."""
    rho = np.array(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError(f"LD matrix must be square. Got shape {rho.shape}.")
    if p is not None and rho.shape[0] != p:
        raise ValidationError(
            f"dimension mismatch: LD matrix is {rho.shape[0]}x{rho.shape[1]} "
            f"but there are {p} variants."
        )
    if not np.all(np.isfinite(rho)):
        raise ValidationError("LD matrix has non-finite entries.")
    asym = float(np.max(np.abs(rho - rho.T)))
    if asym > _SYMMETRY_TOL:
        raise ValidationError(f"LD matrix is not symmetric (max asymmetry {asym:.3g}).")
    rho = 0.5 * (rho + rho.T)
    diag_dev = float(np.max(np.abs(np.diag(rho) - 1.0)))
    if diag_dev > _DIAG_TOL:
        raise ValidationError(f"LD matrix diagonal deviates from 1 by {diag_dev:.3g}.")
    over = float(np.max(np.abs(rho))) - 1.0
    if over > _CLAMP_TOL:
        raise ValidationError(f"LD entries exceed [-1, 1] by {over:.3g}.")
    np.clip(rho, -1.0, 1.0, out=rho)
    np.fill_diagonal(rho, 1.0)
    return rho


def _sniff_delimiter(path, fmt):
    if fmt == "csv":
        return ","
    if fmt == "tsv":
        return "\t"
    if fmt not in (None, "auto"):
        raise ValidationError(f"unknown format {fmt!r}; expected csv or tsv.")
    suffix = Path(path).suffix.lower()
    if suffix in (".tsv", ".tab", ".txt"):
        return "\t"
    return ","


def _read_rows(path, delimiter):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [row for row in csv.reader(fh, delimiter=delimiter) if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    return [[c.strip() for c in row] for row in rows]


def _to_float(cell, where):
    try:
        return float(cell)
    except ValueError:
        raise ValidationError(f"non-numeric cell {cell!r} at {where}.") from None


def read_association_file(path, fmt=None):
    """Parse the association table; returns ids and the four numeric columns."""
    rows = _read_rows(path, _sniff_delimiter(path, fmt))
    if not rows:
        raise ValidationError(f"{path} is empty.")
    header = [h.lower() for h in rows[0]]
    missing = [c for c in ASSOC_COLUMNS if c not in header]
    if missing:
        raise ValidationError(f"association file is missing columns: {', '.join(missing)}.")
    idx = {c: header.index(c) for c in ASSOC_COLUMNS}
    ids, cols = [], {c: [] for c in ASSOC_COLUMNS[1:]}
    for line_no, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise ValidationError(f"row {line_no} has {len(row)} fields, expected {len(header)}.")
        vid = row[idx["variant_id"]]
        if not vid:
            raise ValidationError(f"missing variant id at variant {line_no}.")
        ids.append(vid)
        for c in cols:
            cols[c].append(_to_float(row[idx[c]], f"variant {line_no}, column {c}"))
    return ids, {c: np.array(v) for c, v in cols.items()}


def read_ld_file(path, fmt=None):
    """Parse a square LD matrix, with or without a header row of variant ids.

    A labelled file may also carry the ids as its first column. Returns
    ``(ids or None, matrix)``.
    """
    rows = _read_rows(path, _sniff_delimiter(path, fmt))
    if not rows:
        raise ValidationError(f"{path} is empty.")
    labels = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        labels = rows[0]
        rows = rows[1:]
    if labels is not None and labels and labels[0] == "" :
        labels = labels[1:]
    matrix = []
    for i, row in enumerate(rows, start=1):
        if labels is not None and len(row) == len(labels) + 1:
            if row[0] != labels[i - 1]:
                raise ValidationError(
                    f"LD row label {row[0]!r} does not match column label {labels[i - 1]!r}."
                )
            row = row[1:]
        matrix.append([_to_float(c, f"LD row {i}") for c in row])
    widths = {len(r) for r in matrix}
    if len(widths) != 1 or widths.pop() != len(matrix):
        raise ValidationError("dimension mismatch: LD file is not a square matrix.")
    if labels is not None and len(labels) != len(matrix):
        raise ValidationError("dimension mismatch: LD header length differs from matrix size.")
    return labels, np.array(matrix, dtype=float)


def load_dataset(path, ld_path, fmt=None, meta=None):
    """Load association and LD files into a validated :class:`SummaryDataset`.

    When the LD file carries variant ids, its rows and columns are reordered
    to the association file's order; otherwise the orders are assumed equal.
    """
    ids, cols = read_association_file(path, fmt)
    labels, rho = read_ld_file(ld_path, fmt)
    if rho.shape[0] != len(ids):
        raise ValidationError(
            f"dimension mismatch: {len(ids)} variants but LD matrix is "
            f"{rho.shape[0]}x{rho.shape[1]}."
        )
    if labels is not None:
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate variant ids in LD header.")
        pos = {v: i for i, v in enumerate(labels)}
        absent = [v for v in ids if v not in pos]
        if absent:
            raise ValidationError(f"variant {absent[0]!r} missing from LD file.")
        order = np.array([pos[v] for v in ids])
        rho = rho[np.ix_(order, order)]
    return SummaryDataset(
        variant_ids=tuple(ids),
        beta_x=cols["beta_x"],
        se_x=cols["se_x"],
        beta_y=cols["beta_y"],
        se_y=cols["se_y"],
        rho=rho,
        meta=dict(meta or {}),
    )


def write_dataset(ds, path, ld_path, with_ids=True, fmt=None):
    """Write ``ds`` in the formats :func:`load_dataset` reads.

    Floats are written with ``repr`` so that reading back is exact; the
    delimiter follows the file extension as on reading.
    """
    cols = (ds.beta_x, ds.se_x, ds.beta_y, ds.se_y)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=_sniff_delimiter(path, fmt))
        w.writerow(ASSOC_COLUMNS)
        for i, vid in enumerate(ds.variant_ids):
            w.writerow([vid] + [repr(float(c[i])) for c in cols])
    with open(ld_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=_sniff_delimiter(ld_path, fmt))
        if with_ids:
            w.writerow(ds.variant_ids)
        for row in ds.rho:
            w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class CovariancePair:
    """Sampling covariances of the exposure and outcome association vectors.

    ``rho`` is the correlation matrix they were built from (after repair, if
    one was needed) and ``repaired`` says whether repair happened.
    """

    sigma_xx: np.ndarray
    sigma_yy: np.ndarray
    rho: np.ndarray
    repaired: bool = False


def _psd_enough(m):
    vals = np.linalg.eigvalsh(m)
    return vals[0] >= -1e-8 * max(vals[-1], 0.0)


def build_covariances(ds, repair_tol=1e-8, max_iter=500):
    """Assemble ``Sigma_X = rho * se_x se_x'`` and ``Sigma_Y`` likewise.

    If either matrix is indefinite beyond ``-1e-8 * max eigenvalue`` the
    correlation matrix is repaired with :func:`nearest_correlation` and both
    matrices are rebuilt. Diagonals equal the squared standard errors exactly.
    """
    rho = ds.rho
    sxx = rho * np.outer(ds.se_x, ds.se_x)
    syy = rho * np.outer(ds.se_y, ds.se_y)
    repaired = False
    if not (_psd_enough(sxx) and _psd_enough(syy)):
        try:
            rho = nearest_correlation(rho, tol=repair_tol, max_iter=max_iter)
        except NumericalError as exc:
            raise NumericalError(
                f"covariance repair failed; achieved minimum eigenvalue "
                f"{min_eigenvalue(ds.rho if rho is ds.rho else rho):.3g} ({exc})"
            ) from exc
        sxx = rho * np.outer(ds.se_x, ds.se_x)
        syy = rho * np.outer(ds.se_y, ds.se_y)
        repaired = True
    np.fill_diagonal(sxx, ds.se_x**2)
    np.fill_diagonal(syy, ds.se_y**2)
    return CovariancePair(sigma_xx=sxx, sigma_yy=syy, rho=rho, repaired=repaired)
