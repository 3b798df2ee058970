"""Numerical kernels with two interchangeable backends.

The two hot loops of the fitting procedure live here: sparse row-wise
products (evaluating one multiplicative term per row of a CSR pattern)
and the per-vertex gradient ascent with Armijo backtracking.  Both have
a compiled implementation (numba) and a vectorized numpy fallback.

The active backend is chosen once at import time: the environment
variable ``ADMGFIT_BACKEND`` may force ``numba`` or ``numpy``; when it
is unset, numba is used if importable and numpy otherwise.  Call sites
resolve kernels through :func:`get_kernels`, which also lets the
benchmark time both backends in one process.
"""

from __future__ import annotations

import os
from typing import NamedTuple

import numpy as np

__all__ = ["get_kernels", "backend", "available_backends", "Kernels"]

ENV_VAR = "ADMGFIT_BACKEND"

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    _HAVE_NUMBA = False


class Kernels(NamedTuple):
    name: str
    term_products: callable
    ascent: callable


# -- pure numpy --------------------------------------------------------


def _term_products_numpy(indptr, indices, q):
    """Products of q over each CSR row; empty rows give 1."""
    m = len(indptr) - 1
    out = np.ones(m)
    x = q[indices]
    if x.size:
        nonempty = indptr[:-1] < indptr[1:]
        # empty rows contribute no entries, so consecutive nonempty
        # starts delimit exactly the nonempty segments
        out[nonempty] = np.multiply.reduceat(x, indptr[:-1][nonempty])
    return out


def _ascent_numpy(A, b, counts, eps, theta, step0, beta, sigma, max_inner, inner_tol):
    """Maximize sum(counts * log(A theta - b)) subject to A theta - b >= eps.

    Plain gradient ascent with Armijo backtracking; the trial step is
    warm started from the previous accepted step.  Returns
    (theta, ll, iterations, moved).
    """
    pos = counts > 0.0
    npos = counts[pos]
    Apos = A[pos]

    f = A @ theta - b
    ll = npos @ np.log(f[pos])
    last = step0
    moved = False
    it = 0
    while it < max_inner:
        grad = Apos.T @ (npos / f[pos])
        gg = grad @ grad
        if gg <= 0.0:
            break
        step = min(step0, 4.0 * last)
        accepted = False
        while step > 1e-18:
            t_try = theta + step * grad
            f_try = A @ t_try - b
            if np.all(f_try >= eps):
                ll_try = npos @ np.log(f_try[pos])
                if np.isfinite(ll_try) and ll_try >= ll + sigma * step * gg:
                    accepted = True
                    break
            step *= beta
        if not accepted:
            break
        gain = ll_try - ll
        theta, f, ll, last = t_try, f_try, ll_try, step
        moved = True
        it += 1
        if gain <= inner_tol:
            break
    return theta, ll, it, moved


# -- numba -------------------------------------------------------------


def _term_products_loops(indptr, indices, q):
    m = len(indptr) - 1
    out = np.ones(m)
    for k in range(m):
        acc = 1.0
        for j in range(indptr[k], indptr[k + 1]):
            acc *= q[indices[j]]
        out[k] = acc
    return out


def _ascent_loops(A, b, counts, eps, theta, step0, beta, sigma, max_inner, inner_tol):
    rows, cols = A.shape
    f = A @ theta - b
    ll = 0.0
    for i in range(rows):
        if counts[i] > 0.0:
            ll += counts[i] * np.log(f[i])
    grad = np.empty(cols)
    t_try = np.empty(cols)
    last = step0
    moved = False
    it = 0
    while it < max_inner:
        for c in range(cols):
            grad[c] = 0.0
        for i in range(rows):
            if counts[i] > 0.0:
                r = counts[i] / f[i]
                for c in range(cols):
                    grad[c] += A[i, c] * r
        gg = 0.0
        for c in range(cols):
            gg += grad[c] * grad[c]
        if gg <= 0.0:
            break
        step = step0
        if 4.0 * last < step:
            step = 4.0 * last
        accepted = False
        ll_try = 0.0
        while step > 1e-18:
            for c in range(cols):
                t_try[c] = theta[c] + step * grad[c]
            f_try = A @ t_try - b
            feasible = True
            for i in range(rows):
                if f_try[i] < eps[i]:
                    feasible = False
                    break
            if feasible:
                ll_try = 0.0
                for i in range(rows):
                    if counts[i] > 0.0:
                        ll_try += counts[i] * np.log(f_try[i])
                if ll_try >= ll + sigma * step * gg:
                    accepted = True
                    break
            step *= beta
        if not accepted or not np.isfinite(ll_try):
            break
        gain = ll_try - ll
        for c in range(cols):
            theta[c] = t_try[c]
        f = f_try
        ll = ll_try
        last = step
        moved = True
        it += 1
        if gain <= inner_tol:
            break
    return theta, ll, it, moved


_NUMPY = Kernels("numpy", _term_products_numpy, _ascent_numpy)
_numba_kernels = None


def _build_numba():
    global _numba_kernels
    if _numba_kernels is None:
        _numba_kernels = Kernels(
            "numba",
            njit(cache=True, nogil=True)(_term_products_loops),
            njit(cache=True, nogil=True)(_ascent_loops),
        )
    return _numba_kernels


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if _HAVE_NUMBA else ("numpy",)


def _default_name() -> str:
    env = os.environ.get(ENV_VAR, "").strip().lower()
    if env not in ("", "numba", "numpy"):
        raise ValueError(f"{ENV_VAR} must be 'numba' or 'numpy', not {env!r}")
    if env == "numba" and not _HAVE_NUMBA:
        raise ImportError(f"{ENV_VAR}=numba but numba is not importable")
    if env:
        return env
    return "numba" if _HAVE_NUMBA else "numpy"


def get_kernels(name: str | None = None) -> Kernels:
    """Kernels for ``name`` ('numba' or 'numpy'); None picks the default."""
    name = name or _default_name()
    if name == "numpy":
        return _NUMPY
    if name == "numba":
        if not _HAVE_NUMBA:
            raise ImportError("numba backend requested but numba is not importable")
        return _build_numba()
    raise ValueError(f"unknown backend {name!r}")


def backend() -> str:
    """Name of the default backend."""
    return _default_name()
