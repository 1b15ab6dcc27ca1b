"""Batched small-matrix kernels with a numba path and a pure-numpy path.

Every public function here takes stacks of small matrices or point tuples
(leading batch axis) and is called from the hot loops of energy sums,
Monte-Carlo integration and gradient ascent.

The numba path is used when numba imports cleanly and the environment
variable ``SPHERE_ENERGY_NO_NUMBA`` is unset (or ``0``). Both paths agree
to roundoff; ``tests/test_accel.py`` checks this and
``benchmarks/bench_backends.py`` times them against each other.
"""
from __future__ import annotations

import contextlib
import math
import os

import numpy as np

try:
    import numba
    from numba import njit, prange

    # prefer OpenMP: thread-safe (restarts may call in from several threads)
    # and avoids probing an outdated TBB
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

_ENV_FLAG = "SPHERE_ENERGY_NO_NUMBA"


def _env_backend() -> str:
    flag = os.environ.get(_ENV_FLAG, "").strip().lower()
    if not HAS_NUMBA or flag not in ("", "0", "false", "no"):
        return "numpy"
    return "numba"


_backend = _env_backend()


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not importable")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    prev = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


# ---------------------------------------------------------------------------
# numba kernels

if HAS_NUMBA:

    @njit(cache=True, nogil=True)
    def _det_inplace(a):
        # closed-form cofactor expansion up to 3x3, partial-pivot LU beyond
        m = a.shape[0]
        if m == 0:
            return 1.0
        if m == 1:
            return a[0, 0]
        if m == 2:
            return a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        if m == 3:
            return (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
                    - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
                    + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))
        det = 1.0
        for c in range(m):
            p = c
            best = abs(a[c, c])
            for r in range(c + 1, m):
                if abs(a[r, c]) > best:
                    best = abs(a[r, c])
                    p = r
            if best == 0.0:
                return 0.0
            if p != c:
                for q in range(m):
                    tmp = a[c, q]
                    a[c, q] = a[p, q]
                    a[p, q] = tmp
                det = -det
            piv = a[c, c]
            det *= piv
            for r in range(c + 1, m):
                f = a[r, c] / piv
                if f != 0.0:
                    for q in range(c + 1, m):
                        a[r, q] -= f * a[c, q]
        return det

    @njit(cache=True, nogil=True)
    def _adj_into(a, out, scratch):
        m = a.shape[0]
        if m == 1:
            out[0, 0] = 1.0
            return
        for i in range(m):
            for j in range(m):
                # minor deleting row i, column j
                rr = 0
                for r in range(m):
                    if r == i:
                        continue
                    cc = 0
                    for c in range(m):
                        if c == j:
                            continue
                        scratch[rr, cc] = a[r, c]
                        cc += 1
                    rr += 1
                sign = 1.0 if (i + j) % 2 == 0 else -1.0
                out[j, i] = sign * _det_inplace(scratch)

    @njit(cache=True, nogil=True, parallel=True)
    def _det_batch_nb(M):
        n, m, _ = M.shape
        out = np.empty(n)
        for b in prange(n):
            out[b] = _det_inplace(M[b].copy())
        return out

    @njit(cache=True, nogil=True, parallel=True)
    def _adj_batch_nb(M):
        n, m, _ = M.shape
        out = np.empty((n, m, m))
        for b in prange(n):
            scratch = np.empty((max(m - 1, 1), max(m - 1, 1)))
            _adj_into(M[b], out[b], scratch)
        return out

    @njit(cache=True, nogil=True, parallel=True)
    def _vol_pow_nb(P, kind, s, want_grad, scale):
        # kind 0: V^s from det(Gram); kind 1: A^s from the bordered Gram.
        n, k, d = P.shape
        vals = np.empty(n)
        sq_out = np.empty(n)
        grads = np.zeros((n, k, d)) if want_grad else np.zeros((0, k, d))
        mb = k + kind
        for b in prange(n):
            B = np.zeros((mb, mb))
            for i in range(k):
                for j in range(i, k):
                    acc = 0.0
                    for c in range(d):
                        acc += P[b, i, c] * P[b, j, c]
                    B[i, j] = acc
                    B[j, i] = acc
            if kind == 1:
                for i in range(k):
                    B[i, k] = 1.0
                    B[k, i] = 1.0
            det = _det_inplace(B.copy())
            sq = det * scale
            sq_out[b] = sq
            sqc = sq if sq > 0.0 else 0.0
            if s == 2.0:
                vals[b] = sqc
            else:
                vals[b] = sqc ** (0.5 * s)
            if want_grad and sqc > 0.0:
                adj = np.empty((mb, mb))
                scratch = np.empty((mb - 1, mb - 1))
                _adj_into(B, adj, scratch)
                if s == 2.0:
                    fac = 2.0 * scale
                else:
                    fac = 2.0 * scale * (0.5 * s) * sqc ** (0.5 * s - 1.0)
                for p in range(k):
                    for c in range(d):
                        acc = 0.0
                        for j in range(k):
                            acc += adj[p, j] * P[b, j, c]
                        grads[b, p, c] = fac * acc
        return vals, sq_out, grads


# ---------------------------------------------------------------------------
# numpy fallbacks


def _det_batch_np(M):
    # same arithmetic as _det_inplace, vectorized over the batch, so both
    # backends give exact zeros on tuples with repeated points
    n, m = M.shape[0], M.shape[-1]
    if m == 0:
        return np.ones(n)
    if m == 1:
        return M[:, 0, 0].copy()
    if m == 2:
        return M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
    if m == 3:
        return (M[:, 0, 0] * (M[:, 1, 1] * M[:, 2, 2] - M[:, 1, 2] * M[:, 2, 1])
                - M[:, 0, 1] * (M[:, 1, 0] * M[:, 2, 2] - M[:, 1, 2] * M[:, 2, 0])
                + M[:, 0, 2] * (M[:, 1, 0] * M[:, 2, 1] - M[:, 1, 1] * M[:, 2, 0]))
    a = np.array(M, dtype=np.float64)
    det = np.ones(n)
    rows = np.arange(n)
    for c in range(m):
        p = c + np.argmax(np.abs(a[:, c:, c]), axis=1)
        swap = p != c
        if np.any(swap):
            r = rows[swap]
            tmp = a[r, c].copy()
            a[r, c] = a[r, p[swap]]
            a[r, p[swap]] = tmp
            det[swap] = -det[swap]
        piv = a[:, c, c]
        det *= piv
        ok = piv != 0.0
        f = np.zeros((n, m - c - 1))
        f[ok] = a[ok, c + 1:, c] / piv[ok, None]
        a[:, c + 1:, c + 1:] -= f[:, :, None] * a[:, c, None, c + 1:]
    return det


def _adj_batch_np(M):
    n, m, _ = M.shape
    out = np.empty((n, m, m))
    if m == 1:
        out[:] = 1.0
        return out
    idx = np.arange(m)
    for i in range(m):
        rows = idx[idx != i]
        for j in range(m):
            cols = idx[idx != j]
            minor = M[:, rows][:, :, cols]
            out[:, j, i] = (-1.0) ** (i + j) * _det_batch_np(minor)
    return out


def _vol_pow_np(P, kind, s, want_grad, scale):
    n, k, d = P.shape
    G = np.einsum("bid,bjd->bij", P, P)
    if kind == 1:
        B = np.zeros((n, k + 1, k + 1))
        B[:, :k, :k] = G
        B[:, :k, k] = 1.0
        B[:, k, :k] = 1.0
    else:
        B = G
    sq = _det_batch_np(B) * scale
    sqc = np.maximum(sq, 0.0)
    vals = sqc if s == 2.0 else sqc ** (0.5 * s)
    if not want_grad:
        return vals, sq, np.zeros((0, k, d))
    adj = _adj_batch_np(B)[:, :k, :k]
    pos = sqc > 0.0
    if s == 2.0:
        fac = np.full(n, 2.0 * scale)
    else:
        fac = np.zeros(n)
        fac[pos] = 2.0 * scale * 0.5 * s * sqc[pos] ** (0.5 * s - 1.0)
    fac = np.where(pos, fac, 0.0)
    grads = fac[:, None, None] * np.einsum("bij,bjd->bid", adj, P)
    return vals, sq, grads


# ---------------------------------------------------------------------------
# dispatch


def det_batch(M: np.ndarray) -> np.ndarray:
    """Determinants of a stack of square matrices, shape (n, m, m) -> (n,)."""
    M = np.ascontiguousarray(M, dtype=np.float64)
    if _backend == "numba":
        return _det_batch_nb(M)
    return _det_batch_np(M)


def adjugate_batch(M: np.ndarray) -> np.ndarray:
    """Adjugates (transposed cofactor matrices); the 1x1 adjugate is [[1]]."""
    M = np.ascontiguousarray(M, dtype=np.float64)
    if M.shape[-1] == 0:
        return np.zeros_like(M)
    if _backend == "numba":
        return _adj_batch_nb(M)
    return _adj_batch_np(M)


def gram_batch(P: np.ndarray) -> np.ndarray:
    return np.einsum("bid,bjd->bij", P, P)


def vol_pow_batch(P: np.ndarray, kind: str, s: float, want_grad: bool = False):
    """Evaluate V^s or A^s on a stack of k-tuples P of shape (n, k, d).

    Returns ``(values, squared_raw, grads)`` where ``squared_raw`` is the
    unclamped V^2 or A^2 (useful for the negative-roundoff guard) and
    ``grads`` has shape (n, k, d) when ``want_grad`` is set. Gradients are
    zero wherever the clamped squared volume is zero.
    """
    P = np.ascontiguousarray(P, dtype=np.float64)
    k = P.shape[1]
    if kind == "V":
        code, scale = 0, 1.0
    elif kind == "A":
        code, scale = 1, -1.0 / math.factorial(k - 1) ** 2
    else:
        raise ValueError(f"kind must be 'V' or 'A', got {kind!r}")
    if _backend == "numba":
        return _vol_pow_nb(P, code, float(s), bool(want_grad), scale)
    return _vol_pow_np(P, code, float(s), bool(want_grad), scale)


def set_threads(n: int | None) -> None:
    """Cap numba's thread pool; a no-op on the numpy path."""
    if HAS_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
