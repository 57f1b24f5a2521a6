"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``SONARBG_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are
always importable as ``<name>_numba`` / ``<name>_numpy`` so tests and the
benchmark can compare them regardless of the flag.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("SONARBG_DISABLE_NUMBA", "0").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG in ("", "0", "false", "no")

# cache=False: the cache dir may be read-only in worker sandboxes
_JIT = dict(nogil=True, cache=False, fastmath=False)


def _njit(fn):
    if HAVE_NUMBA:
        return numba.njit(**_JIT)(fn)
    return fn


# ---------------------------------------------------------------------------
# truncated convolution: out[n] = sum_l kernel[n - l] * coeffs[l], n < n_rows
# ---------------------------------------------------------------------------


def convolve_truncated_numpy(kernel, coeffs, n_rows):
    full = np.convolve(coeffs, kernel)
    out = np.zeros(n_rows)
    m = min(n_rows, full.size)
    out[:m] = full[:m]
    return out


@_njit
def convolve_truncated_numba(kernel, coeffs, n_rows):
    out = np.zeros(n_rows)
    nk = kernel.shape[0]
    for lag in range(coeffs.shape[0]):
        c = coeffs[lag]
        if c == 0.0 or lag >= n_rows:
            continue
        stop = min(nk, n_rows - lag)
        for i in range(stop):
            out[lag + i] += c * kernel[i]
    return out


# ---------------------------------------------------------------------------
# Gram of two zero-padded Toeplitz operators: G = X^T Y,
# G[l, m] = sum_{n < n_rows} x[n - l] * y[n - m]
# ---------------------------------------------------------------------------


def lagged_gram_numpy(x, y, n_rows, n_lags):
    nx, ny = x.size, y.size
    out = np.zeros((n_lags, n_lags))
    rows = np.arange(n_lags)
    for d in range(-(n_lags - 1), n_lags):
        # G[l, l + d] = sum_{m=0}^{n_rows-1-l} x[m] * y[m - d]
        lo = max(0, d)
        hi = min(nx, ny + d)
        if hi <= lo:
            continue
        prod = x[lo:hi] * y[lo - d:hi - d]
        csum = np.concatenate(([0.0], np.cumsum(prod)))
        ls = rows[(rows + d >= 0) & (rows + d < n_lags)]
        # number of m in [lo, min(hi, n_rows - l)) that contribute
        upper = np.clip(n_rows - ls, lo, hi) - lo
        out[ls, ls + d] = csum[upper]
    return out


@_njit
def lagged_gram_numba(x, y, n_rows, n_lags):
    nx = x.shape[0]
    ny = y.shape[0]
    out = np.zeros((n_lags, n_lags))
    for l in range(n_lags):
        for m in range(n_lags):
            lo = max(l, m)
            hi = min(n_rows, l + nx, m + ny)
            acc = 0.0
            for n in range(lo, hi):
                acc += x[n - l] * y[n - m]
            out[l, m] = acc
    return out


# ---------------------------------------------------------------------------
# weighted sum of shifted outer products: sum_l w[l] k_l k_l^T (n_rows square)
# ---------------------------------------------------------------------------


def lagged_outer_sum_numpy(kernel, weights, n_rows):
    out = np.zeros((n_rows, n_rows))
    nk = kernel.size
    for lag in np.flatnonzero(weights):
        if lag >= n_rows:
            continue
        stop = min(nk, n_rows - lag)
        k = kernel[:stop]
        out[lag:lag + stop, lag:lag + stop] += weights[lag] * np.outer(k, k)
    return out


@_njit
def lagged_outer_sum_numba(kernel, weights, n_rows):
    out = np.zeros((n_rows, n_rows))
    nk = kernel.shape[0]
    for lag in range(weights.shape[0]):
        w = weights[lag]
        if w == 0.0 or lag >= n_rows:
            continue
        stop = min(nk, n_rows - lag)
        for i in range(stop):
            wi = w * kernel[i]
            if wi == 0.0:
                continue
            row = lag + i
            for j in range(stop):
                out[row, lag + j] += wi * kernel[j]
    return out


# ---------------------------------------------------------------------------
# Kaiser-windowed sinc interpolation of a finite sequence (zero outside)
# ---------------------------------------------------------------------------


@_njit
def _bessel_i0(x):
    # power series; converges fast for the window arguments used (|x| < 20)
    term = 1.0
    acc = 1.0
    q = 0.25 * x * x
    k = 1
    while True:
        term *= q / (k * k)
        acc += term
        if term < 1e-17 * acc:
            break
        k += 1
    return acc


def sinc_interp_numpy(x, positions, half_taps, beta):
    positions = np.asarray(positions, dtype=float)
    centre = np.rint(positions).astype(np.int64)
    offsets = np.arange(-half_taps, half_taps + 1)
    idx = centre[:, None] + offsets[None, :]
    dist = positions[:, None] - idx
    half_width = half_taps + 1.0
    arg = np.clip(1.0 - (dist / half_width) ** 2, 0.0, None)
    taps = np.sinc(dist) * np.i0(beta * np.sqrt(arg)) / np.i0(beta)
    valid = (idx >= 0) & (idx < x.size)
    vals = np.where(valid, x[np.clip(idx, 0, x.size - 1)], 0.0)
    return np.sum(taps * vals, axis=1)


@_njit
def sinc_interp_numba(x, positions, half_taps, beta):
    n_out = positions.shape[0]
    nx = x.shape[0]
    out = np.zeros(n_out)
    half_width = half_taps + 1.0
    norm = 1.0 / _bessel_i0(beta)
    for j in range(n_out):
        p = positions[j]
        c = int(np.rint(p))
        acc = 0.0
        for k in range(c - half_taps, c + half_taps + 1):
            if k < 0 or k >= nx:
                continue
            d = p - k
            if d == 0.0:
                sinc = 1.0
            else:
                sinc = np.sin(np.pi * d) / (np.pi * d)
            r = d / half_width
            arg = 1.0 - r * r
            if arg <= 0.0:
                continue
            acc += x[k] * sinc * _bessel_i0(beta * np.sqrt(arg)) * norm
        out[j] = acc
    return out


if USE_NUMBA:
    convolve_truncated = convolve_truncated_numba
    lagged_gram = lagged_gram_numba
    lagged_outer_sum = lagged_outer_sum_numba
    sinc_interp = sinc_interp_numba
else:
    convolve_truncated = convolve_truncated_numpy
    lagged_gram = lagged_gram_numpy
    lagged_outer_sum = lagged_outer_sum_numpy
    sinc_interp = sinc_interp_numpy


def backend() -> str:
    """Name of the active kernel backend."""
    return "numba" if USE_NUMBA else "numpy"
