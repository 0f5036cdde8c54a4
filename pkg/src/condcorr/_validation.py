import numpy as np

from .exceptions import InputError


def check_series(y, name="y", min_length=1, allow_constant=True):
    """Return ``y`` as a finite 1-d float64 array or raise :class:`InputError`."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise InputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_length:
        raise InputError(f"{name} needs at least {min_length} observations, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains NaN or infinite values")
    if not allow_constant and np.ptp(arr) == 0.0:
        raise InputError(f"{name} has zero variance")
    return arr


def check_panel(x, name="eps", min_rows=1, min_cols=1):
    """Return ``x`` as a finite 2-d float64 array (T x N)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InputError(f"{name} must be two-dimensional, got shape {arr.shape}")
    t, n = arr.shape
    if t < min_rows:
        raise InputError(f"{name} needs at least {min_rows} rows, got {t}")
    if n < min_cols:
        raise InputError(f"{name} needs at least {min_cols} columns, got {n}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains NaN or infinite values")
    return np.ascontiguousarray(arr)


def check_correlation_matrix(r, n=None, name="r_bar", tol=1e-10):
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise InputError(f"{name} must be square")
    if n is not None and r.shape[0] != n:
        raise InputError(f"{name} is {r.shape[0]}x{r.shape[0]}, expected {n}x{n}")
    if not np.all(np.isfinite(r)):
        raise InputError(f"{name} contains non-finite entries")
    if np.max(np.abs(r - r.T)) > tol:
        raise InputError(f"{name} is not symmetric")
    if np.max(np.abs(np.diag(r) - 1.0)) > tol:
        raise InputError(f"{name} does not have a unit diagonal")
    if np.linalg.eigvalsh(r)[0] <= 0.0:
        raise InputError(f"{name} is not positive definite")
    out = 0.5 * (r + r.T)
    np.fill_diagonal(out, 1.0)
    return np.ascontiguousarray(out)


def unpack_panel(obj, name="eps", min_rows=1, min_cols=1):
    """Split a panel-like object into (matrix, dates or None, names).

    Accepts a plain array or anything exposing ``matrix`` (plus optional
    ``dates`` and ``names``), such as ``AlignedPanel`` or ``DegarchPanel``.
    """
    if hasattr(obj, "matrix"):
        matrix = check_panel(obj.matrix, name, min_rows, min_cols)
        dates = getattr(obj, "dates", None)
        names = tuple(getattr(obj, "names", None) or default_names(matrix.shape[1]))
    else:
        matrix = check_panel(obj, name, min_rows, min_cols)
        dates, names = None, default_names(matrix.shape[1])
    return matrix, dates, names


def default_names(n):
    return tuple(f"s{i + 1}" for i in range(n))
