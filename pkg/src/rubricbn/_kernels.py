"""Numeric kernels behind the factor algebra.

Two interchangeable backends compute the hot operations (pointwise table
product and single-axis sum):

* ``numba``: flat odometer loops compiled with ``@njit`` (default when numba
  imports cleanly),
* ``numpy``: broadcasting views, no compilation.

Select explicitly with the environment variable ``RUBRICBN_KERNELS=numpy`` or
``RUBRICBN_KERNELS=numba`` (read once at import). Both backends produce
bit-identical float64 tables; ``benchmarks/bench_kernels.py`` compares them.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_VAR = "RUBRICBN_KERNELS"

try:
    from numba import njit

    _NUMBA_OK = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    _NUMBA_OK = False


def _c_strides(shape: tuple[int, ...]) -> np.ndarray:
    """Element strides of a C-ordered array with the given shape."""
    n = len(shape)
    strides = np.ones(n, dtype=np.int64)
    for i in range(n - 2, -1, -1):
        strides[i] = strides[i + 1] * shape[i + 1]
    return strides


def _aligned_view(values: np.ndarray, axes: list[int], out_ndim: int) -> np.ndarray:
    """View of ``values`` with axis i moved to position ``axes[i]``, size-1 elsewhere."""
    order = sorted(range(len(axes)), key=axes.__getitem__)
    arr = values.transpose(order)
    shape = [1] * out_ndim
    for i, pos in enumerate(axes):
        shape[pos] = values.shape[i]
    return arr.reshape(shape)


def multiply_numpy(
    a: np.ndarray, a_axes: list[int], b: np.ndarray, b_axes: list[int], out_shape: tuple[int, ...]
) -> np.ndarray:
    """Pointwise product of two tables broadcast onto a common scope.

    ``a_axes[i]`` is the output axis holding axis ``i`` of ``a`` (same for b).
    """
    nd = len(out_shape)
    out = _aligned_view(a, a_axes, nd) * _aligned_view(b, b_axes, nd)
    return np.ascontiguousarray(np.broadcast_to(out, out_shape))


def sum_axis_numpy(values: np.ndarray, axis: int) -> np.ndarray:
    return values.sum(axis=axis)


if _NUMBA_OK:

    @njit(cache=True)
    def _multiply_kernel(a, b, out, shape, a_strides, b_strides):  # pragma: no cover - jitted
        nd = shape.shape[0]
        idx = np.zeros(nd, dtype=np.int64)
        ia = 0
        ib = 0
        for k in range(out.shape[0]):
            out[k] = a[ia] * b[ib]
            for d in range(nd - 1, -1, -1):
                idx[d] += 1
                ia += a_strides[d]
                ib += b_strides[d]
                if idx[d] < shape[d]:
                    break
                idx[d] = 0
                ia -= shape[d] * a_strides[d]
                ib -= shape[d] * b_strides[d]

    @njit(cache=True)
    def _sum_axis_kernel(values, out, shape, out_strides):  # pragma: no cover - jitted
        nd = shape.shape[0]
        idx = np.zeros(nd, dtype=np.int64)
        io = 0
        for k in range(values.shape[0]):
            out[io] += values[k]
            for d in range(nd - 1, -1, -1):
                idx[d] += 1
                io += out_strides[d]
                if idx[d] < shape[d]:
                    break
                idx[d] = 0
                io -= shape[d] * out_strides[d]


def multiply_numba(
    a: np.ndarray, a_axes: list[int], b: np.ndarray, b_axes: list[int], out_shape: tuple[int, ...]
) -> np.ndarray:
    nd = len(out_shape)
    shape = np.asarray(out_shape, dtype=np.int64)
    a_str = np.zeros(nd, dtype=np.int64)
    b_str = np.zeros(nd, dtype=np.int64)
    a_own = _c_strides(a.shape)
    b_own = _c_strides(b.shape)
    for i, pos in enumerate(a_axes):
        a_str[pos] = a_own[i]
    for i, pos in enumerate(b_axes):
        b_str[pos] = b_own[i]
    out = np.empty(int(np.prod(shape)) if nd else 1, dtype=np.float64)
    _multiply_kernel(np.ascontiguousarray(a).ravel(), np.ascontiguousarray(b).ravel(), out, shape, a_str, b_str)
    return out.reshape(out_shape)


def sum_axis_numba(values: np.ndarray, axis: int) -> np.ndarray:
    shape = np.asarray(values.shape, dtype=np.int64)
    out_shape = values.shape[:axis] + values.shape[axis + 1 :]
    out_strides = np.zeros(values.ndim, dtype=np.int64)
    own = _c_strides(out_shape)
    j = 0
    for d in range(values.ndim):
        if d != axis:
            out_strides[d] = own[j]
            j += 1
    out = np.zeros(int(np.prod(out_shape, dtype=np.int64)), dtype=np.float64)
    _sum_axis_kernel(np.ascontiguousarray(values).ravel(), out, shape, out_strides)
    return out.reshape(out_shape)


def _select_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice in ("numpy", "numba"):
        if choice == "numba" and not _NUMBA_OK:
            raise ImportError(f"{_ENV_VAR}=numba requested but numba is not importable")
        return choice
    return "numba" if _NUMBA_OK else "numpy"


BACKEND = _select_backend()

if BACKEND == "numba":
    multiply = multiply_numba
    sum_axis = sum_axis_numba
else:
    multiply = multiply_numpy
    sum_axis = sum_axis_numpy
