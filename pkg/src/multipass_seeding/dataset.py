"""Point-cloud ingestion, coordinate normalization and neighbor queries."""

import csv
from pathlib import Path

import numpy as np

__all__ = ["check_points", "load_csv", "save_csv", "minmax_normalize", "knn", "sq_dists"]

# rows per block when materializing point-to-point distance blocks
CHUNK_SIZE = 2048


class DataError(ValueError):
    """Raised when a point set cannot be parsed or fails validation."""


def check_points(X, *, copy=False):
    """Validate a point set and return it as a C-contiguous float64 array.

    Parameters
    ----------
    X : array-like of shape (n_samples, n_features)
        Coordinates. One-dimensional input is read as ``n`` points in
        dimension one.

    copy : bool, default=False
        Force a copy even if ``X`` is already a float64 array.

    Returns
    -------
    X : ndarray of shape (n_samples, n_features)
    """
    if copy:
        X = np.array(X, dtype=np.float64, order="C")
    else:
        X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise DataError(f"expected a 2-D point array, got ndim={X.ndim}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise DataError(f"point set must have n >= 1 and d >= 1, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        row, col = np.argwhere(~np.isfinite(X))[0]
        raise DataError(f"non-finite coordinate at row {row}, column {col}")
    return X


def load_csv(path, *, delimiter=",", header=False, exclude_columns=()):
    """Read a numeric table into a point array.

    Parameters
    ----------
    path : str or Path
        File to read.

    delimiter : str, default=","
        Field separator.

    header : bool, default=False
        Skip the first line.

    exclude_columns : sequence of int, default=()
        Zero-based column indices dropped before parsing (label columns of
        UCI files, for instance). Negative indices count from the end.

    Returns
    -------
    X : ndarray of shape (n_samples, n_features)

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    DataError
        On ragged rows, non-numeric or non-finite fields. Row and column
        numbers in the message are 1-based and count data rows only.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset file: {path}")

    rows = []
    width = None
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        if header:
            next(reader, None)
        for rownum, fields in enumerate(reader, start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            if width is None:
                width = len(fields)
                drop = {c % width for c in exclude_columns}
                keep = [c for c in range(width) if c not in drop]
            elif len(fields) != width:
                raise DataError(
                    f"row {rownum} has {len(fields)} fields, expected {width}"
                )
            values = []
            for col in keep:
                try:
                    v = float(fields[col])
                except ValueError:
                    raise DataError(
                        f"non-numeric value {fields[col]!r} at row {rownum}, column {col + 1}"
                    ) from None
                if not np.isfinite(v):
                    raise DataError(f"non-finite value at row {rownum}, column {col + 1}")
                values.append(v)
            rows.append(values)

    if not rows:
        raise DataError(f"{path} contains no data rows")
    if not keep:
        raise DataError("all columns excluded")
    return check_points(np.asarray(rows))


def save_csv(path, X, *, labels=None):
    """Write points (and optionally a trailing integer label column) as CSV."""
    X = check_points(X)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        for i, row in enumerate(X):
            out = [repr(float(v)) for v in row]
            if labels is not None:
                out.append(str(int(labels[i])))
            writer.writerow(out)


def minmax_normalize(X):
    """Map every coordinate column affinely onto [0, 1].

    Constant columns map to 0.
    """
    X = check_points(X)
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    out = np.zeros_like(X)
    nz = span > 0
    out[:, nz] = (X[:, nz] - lo[nz]) / span[nz]
    return out


def sq_dists(X, Y):
    """Squared Euclidean distances between the rows of ``X`` and ``Y``.

    Computed from coordinate differences rather than the norm expansion so
    that exact ties stay exact.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[1] != Y.shape[1]:
        raise DataError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    out = np.empty((X.shape[0], Y.shape[0]))
    step = max(1, CHUNK_SIZE * 16 // max(1, Y.shape[0]))
    for start in range(0, X.shape[0], step):
        diff = X[start:start + step, None, :] - Y[None, :, :]
        out[start:start + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def knn(X, i, L):
    """Indices of the ``L`` nearest neighbors of point ``i``, excluding ``i``.

    Ties in distance are broken by smaller index. The scan is exhaustive.
    """
    X = check_points(X)
    n = X.shape[0]
    if not 1 <= L <= n - 1:
        raise ValueError(f"L must lie in [1, {n - 1}], got {L}")
    diff = X - X[i]
    d2 = np.einsum("ij,ij->i", diff, diff)
    others = np.delete(np.arange(n), i)
    order = np.lexsort((others, d2[others]))
    return others[order[:L]]
