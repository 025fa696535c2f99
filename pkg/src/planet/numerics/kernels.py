"""Hot array kernels: numba @njit fast path with a pure-numpy fallback.

The backend is picked once at import from the environment variable
``PLANET_KERNEL_BACKEND``:

* ``auto``  (default) -- numba when importable, else numpy
* ``numba`` -- require numba, fail loudly if missing
* ``numpy`` -- force the fallback path

Both paths accumulate in identical index order (sequential over rows), so
scatter/segment results are bit-identical across backends. ``use_backend``
switches at runtime; the benchmark uses it to time both paths in one process.
"""

import os

import numpy as np

from ..errors import ConfigError

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - mirror always has numba
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# numpy fallback path
# ---------------------------------------------------------------------------


def _scatter_add_numpy(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, values.shape[1]), dtype=np.float64)
    np.add.at(out, index, values)
    return out


def _segment_max_numpy(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    out = np.full((n, values.shape[1]), -np.inf, dtype=np.float64)
    np.maximum.at(out, index, values)
    return out


def _nearest_token_numpy(x: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    # (n, C) squared distances; ties resolve to the lowest token index.
    d2 = ((x[:, None, :] - codebook[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _scatter_add_numba(values, index, n):
        out = np.zeros((n, values.shape[1]), dtype=np.float64)
        for e in range(values.shape[0]):
            row = index[e]
            for f in range(values.shape[1]):
                out[row, f] += values[e, f]
        return out

    @njit(cache=True)
    def _segment_max_numba(values, index, n):
        out = np.full((n, values.shape[1]), -np.inf, dtype=np.float64)
        for e in range(values.shape[0]):
            row = index[e]
            for f in range(values.shape[1]):
                if values[e, f] > out[row, f]:
                    out[row, f] = values[e, f]
        return out

    @njit(cache=True)
    def _nearest_token_numba(x, codebook):
        n = x.shape[0]
        c = codebook.shape[0]
        d = x.shape[1]
        idx = np.empty(n, dtype=np.int64)
        for i in range(n):
            best = np.inf
            best_j = 0
            for j in range(c):
                acc = 0.0
                for k in range(d):
                    diff = x[i, k] - codebook[j, k]
                    acc += diff * diff
                if acc < best:
                    best = acc
                    best_j = j
            idx[i] = best_j
        return idx


_IMPLS = {
    "numpy": {
        "scatter_add": _scatter_add_numpy,
        "segment_max": _segment_max_numpy,
        "nearest_token": _nearest_token_numpy,
    }
}
if HAS_NUMBA:
    _IMPLS["numba"] = {
        "scatter_add": _scatter_add_numba,
        "segment_max": _segment_max_numba,
        "nearest_token": _nearest_token_numba,
    }

_active = {}
_backend_name = ""


def use_backend(name: str) -> None:
    global _backend_name
    if name == "auto":
        name = "numba" if HAS_NUMBA else "numpy"
    if name not in ("numpy", "numba"):
        raise ConfigError(f"unknown kernel backend {name!r} (use auto|numba|numpy)")
    if name == "numba" and not HAS_NUMBA:
        raise ConfigError("kernel backend 'numba' requested but numba is not installed")
    _active.update(_IMPLS[name])
    _backend_name = name


def backend() -> str:
    """Name of the active backend ('numba' or 'numpy')."""
    return _backend_name


use_backend(os.environ.get("PLANET_KERNEL_BACKEND", "auto"))


def scatter_add(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    """Sum rows of ``values`` (E, F) into an (n, F) output at ``index``."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    index = np.ascontiguousarray(index, dtype=np.int64)
    return _active["scatter_add"](values, index, n)


def segment_max(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    """Per-segment maximum of rows; untouched segments stay at -inf."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    index = np.ascontiguousarray(index, dtype=np.int64)
    return _active["segment_max"](values, index, n)


def nearest_token(x: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """Index of the Euclidean-nearest codebook row for each row of ``x``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    codebook = np.ascontiguousarray(codebook, dtype=np.float64)
    return _active["nearest_token"](x, codebook)
