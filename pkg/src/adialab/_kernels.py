"""Lattice-enumeration kernels for flat-torus spectra.

Each kernel walks the integer box |k_i| <= bound, evaluates the tangential
and transverse energies of the mode exp(2*pi*i k.x) and filters by
``eF + h*h*eH <= lam_max``.  Two implementations exist and must agree
bit-for-bit: a numba one (default) and a chunked pure-numpy one.  Setting
the environment variable ``ADIALAB_DISABLE_NUMBA=1`` before import selects
the numpy path for the public dispatchers.
"""

import os

import numpy as np

FOUR_PI_SQ = 4.0 * np.pi * np.pi

_CHUNK = 1 << 18


def _env_disabled():
    return os.environ.get("ADIALAB_DISABLE_NUMBA", "").strip().lower() in (
        "1", "true", "yes", "on")


try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_disabled()


# -- numba path ---------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _energies_nb(U, W, k):
        eF = 0.0
        for r in range(U.shape[0]):
            s = 0.0
            for i in range(k.shape[0]):
                s += U[r, i] * k[i]
            eF += s * s
        eH = 0.0
        for r in range(W.shape[0]):
            s = 0.0
            for i in range(k.shape[0]):
                s += W[r, i] * k[i]
            eH += s * s
        return FOUR_PI_SQ * eF, FOUR_PI_SQ * eH

    @njit(cache=True, nogil=True)
    def _advance(k, bound):
        # odometer step; returns False once the box is exhausted
        i = k.shape[0] - 1
        while i >= 0:
            if k[i] < bound:
                k[i] += 1
                return True
            k[i] = -bound
            i -= 1
        return False

    @njit(cache=True, nogil=True)
    def _box_count_nb(U, W, h, bound, lam_max):
        n = U.shape[1]
        k = np.full(n, -bound, dtype=np.int64)
        h2 = h * h
        count = 0
        while True:
            eF, eH = _energies_nb(U, W, k)
            if eF + h2 * eH <= lam_max:
                count += 1
            if not _advance(k, bound):
                break
        return count

    @njit(cache=True, nogil=True)
    def _box_collect_nb(U, W, h, bound, lam_max, size):
        n = U.shape[1]
        outF = np.empty(size, dtype=np.float64)
        outH = np.empty(size, dtype=np.float64)
        k = np.full(n, -bound, dtype=np.int64)
        h2 = h * h
        m = 0
        while True:
            eF, eH = _energies_nb(U, W, k)
            if eF + h2 * eH <= lam_max:
                outF[m] = eF
                outH[m] = eH
                m += 1
            if not _advance(k, bound):
                break
        return outF, outH

    @njit(cache=True, nogil=True)
    def _box_count_grid_nb(U, W, h, bound, lams):
        n = U.shape[1]
        hist = np.zeros(lams.shape[0], dtype=np.int64)
        lam_max = lams[lams.shape[0] - 1]
        k = np.full(n, -bound, dtype=np.int64)
        h2 = h * h
        while True:
            eF, eH = _energies_nb(U, W, k)
            v = eF + h2 * eH
            if v <= lam_max:
                hist[np.searchsorted(lams, v)] += 1
            if not _advance(k, bound):
                break
        return np.cumsum(hist)


# -- numpy path ---------------------------------------------------------------

def _chunks(n, bound):
    side = 2 * bound + 1
    total = side ** n
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        digits = np.unravel_index(idx, (side,) * n)
        yield [d.astype(np.int64) - bound for d in digits]


def _energies_np(U, W, ks):
    eF = np.zeros(ks[0].shape[0])
    for r in range(U.shape[0]):
        s = U[r, 0] * ks[0]
        for i in range(1, len(ks)):
            s += U[r, i] * ks[i]
        eF += s * s
    eH = np.zeros(ks[0].shape[0])
    for r in range(W.shape[0]):
        s = W[r, 0] * ks[0]
        for i in range(1, len(ks)):
            s += W[r, i] * ks[i]
        eH += s * s
    return FOUR_PI_SQ * eF, FOUR_PI_SQ * eH


def _box_count_np(U, W, h, bound, lam_max):
    h2 = h * h
    count = 0
    for ks in _chunks(U.shape[1], bound):
        eF, eH = _energies_np(U, W, ks)
        count += int(np.count_nonzero(eF + h2 * eH <= lam_max))
    return count


def _box_collect_np(U, W, h, bound, lam_max, size=None):
    h2 = h * h
    outF, outH = [], []
    for ks in _chunks(U.shape[1], bound):
        eF, eH = _energies_np(U, W, ks)
        keep = eF + h2 * eH <= lam_max
        outF.append(eF[keep])
        outH.append(eH[keep])
    return np.concatenate(outF), np.concatenate(outH)


def _box_count_grid_np(U, W, h, bound, lams):
    h2 = h * h
    hist = np.zeros(lams.shape[0], dtype=np.int64)
    lam_max = lams[-1]
    for ks in _chunks(U.shape[1], bound):
        eF, eH = _energies_np(U, W, ks)
        v = eF + h2 * eH
        v = v[v <= lam_max]
        hist += np.bincount(np.searchsorted(lams, v), minlength=lams.shape[0])
    return np.cumsum(hist)


# -- dispatch -----------------------------------------------------------------

def _prep(U, W):
    return (np.ascontiguousarray(U, dtype=np.float64),
            np.ascontiguousarray(W, dtype=np.float64))


def box_count(U, W, h, bound, lam_max, use_numba=None):
    """Number of lattice vectors in the box with eigenvalue <= lam_max."""
    U, W = _prep(U, W)
    if USE_NUMBA if use_numba is None else use_numba:
        return int(_box_count_nb(U, W, float(h), int(bound), float(lam_max)))
    return _box_count_np(U, W, float(h), int(bound), float(lam_max))


def box_collect(U, W, h, bound, lam_max, use_numba=None):
    """Energies ``(eF, eH)`` of every admitted lattice vector, in box order."""
    U, W = _prep(U, W)
    if USE_NUMBA if use_numba is None else use_numba:
        size = _box_count_nb(U, W, float(h), int(bound), float(lam_max))
        return _box_collect_nb(U, W, float(h), int(bound), float(lam_max), size)
    return _box_collect_np(U, W, float(h), int(bound), float(lam_max))


def box_count_grid(U, W, h, bound, lams, use_numba=None):
    """Cumulative counts ``N(lams[j])`` for an increasing grid, no mode list kept."""
    U, W = _prep(U, W)
    lams = np.ascontiguousarray(lams, dtype=np.float64)
    if lams.size == 0:
        return np.zeros(0, dtype=np.int64)
    if USE_NUMBA if use_numba is None else use_numba:
        return _box_count_grid_nb(U, W, float(h), int(bound), lams)
    return _box_count_grid_np(U, W, float(h), int(bound), lams)
