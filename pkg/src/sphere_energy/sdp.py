"""Polynomial kernels behind semidefinite k-point bounds.

Three-input family (x, y, z) with u = <y,z>, v = <x,z>, t = <x,y>:

    Y_{m,i,j}(x,y,z) = P_i^{d+2m}(u) P_j^{d+2m}(v) Q_m^d(u,v,t),
    Q_m^d(u,v,t)     = ((1-u^2)(1-v^2))^{m/2} P_m^{d-1}((t-uv)/sqrt((1-u^2)(1-v^2))),

and S_{m,i,j} is the average of Y_{m,i,j} over the six orderings of (x,y,z).
Q_m^d is always evaluated in polynomial form, so u^2 = 1 or v^2 = 1 is fine.

General k inputs: with W the Gram matrix of the tail x_3..x_k and w_1, w_2
the inner products of x_1, x_2 with the tail, Q_{k,l}^d is the degree-l
polynomial

    sum_m a_{l-2m} (det W u_12 - w_1' adj W w_2)^{l-2m}
          ((det W - w_1' adj W w_1)(det W - w_2' adj W w_2))^m,

where a_j are the monomial coefficients of P_l^{d-k+2}.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _accel
from .gegenbauer import eval_gegenbauer, eval_gegenbauer_all, monomial_coefficients
from .kernels import MultiKernel, kernel_A_pow

SPHERE_CHECK_TOL = 1e-9
PSD_RTOL = 1e-10
W_COND_MAX = 1e8

_PERMS3 = tuple(itertools.permutations(range(3)))


class NotSphericalError(ValueError):
    pass


class DegenerateTailError(ValueError):
    pass


def _as_tuples(points, k: int | None = None) -> np.ndarray:
    """Accept k Points / arrays (one tuple) or an (n, k, d) stack."""
    if isinstance(points, np.ndarray) and points.ndim == 3:
        P = np.asarray(points, dtype=np.float64)
    else:
        P = np.stack([np.asarray(getattr(p, "coords", p), dtype=np.float64) for p in points])[None]
    if k is not None and P.shape[1] != k:
        raise ValueError(f"expected {k} inputs, got {P.shape[1]}")
    return P


def _check_spherical(P: np.ndarray) -> None:
    nrm = np.linalg.norm(P, axis=-1)
    if np.any(np.abs(nrm - 1.0) > SPHERE_CHECK_TOL):
        raise NotSphericalError("inputs must be unit vectors")


# ---------------------------------------------------------------------------
# three-input Y / S


@dataclass(frozen=True)
class YIndex:
    m: int
    i: int
    j: int
    d: int

    def __post_init__(self):
        if min(self.m, self.i, self.j) < 0:
            raise ValueError("indices must be nonnegative")
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.m >= 2 and self.d < 3:
            raise ValueError("Q_m^d with m >= 2 needs d >= 3")


def q3_poly(d: int, m: int, u, v, t):
    """Q_m^d(u, v, t) in polynomial form."""
    if m == 0:
        return np.ones_like(np.asarray(t, dtype=np.float64))
    a = monomial_coefficients(d - 1, m)
    s = t - u * v
    w = (1 - u * u) * (1 - v * v)
    out = np.zeros_like(np.asarray(s, dtype=np.float64))
    for j in range(m // 2 + 1):
        out = out + a[m - 2 * j] * s ** (m - 2 * j) * w ** j
    return out


def _uvt(P: np.ndarray):
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    return (np.einsum("nd,nd->n", y, z), np.einsum("nd,nd->n", x, z),
            np.einsum("nd,nd->n", x, y))


def y_values(idx: YIndex, P: np.ndarray) -> np.ndarray:
    u, v, t = _uvt(P)
    h = idx.d + 2 * idx.m
    return eval_gegenbauer(h, idx.i, u) * eval_gegenbauer(h, idx.j, v) * q3_poly(idx.d, idx.m, u, v, t)


def s_values(idx: YIndex, P: np.ndarray) -> np.ndarray:
    return sum(y_values(idx, P[:, list(p)]) for p in _PERMS3) / 6.0


def eval_Y(idx: YIndex, x, y=None, z=None):
    """Y_{m,i,j}^d at (x, y, z); pass three points or one (n, 3, d) stack."""
    P = _as_tuples(x if y is None else (x, y, z), 3)
    _check_spherical(P)
    out = y_values(idx, P)
    return float(out[0]) if y is not None else out


def eval_S(idx: YIndex, x, y=None, z=None):
    P = _as_tuples(x if y is None else (x, y, z), 3)
    _check_spherical(P)
    out = s_values(idx, P)
    return float(out[0]) if y is not None else out


def kernel_Y(idx: YIndex) -> MultiKernel:
    return MultiKernel(3, idx.d, lambda P: y_values(idx, P), f"Y[{idx.m},{idx.i},{idx.j}]",
                       rotation_invariant=True, spherical_only=True,
                       symmetric_first_two=idx.i == idx.j,
                       spec={"kind": "Y", "m": idx.m, "i": idx.i, "j": idx.j, "d": idx.d})


def kernel_S(idx: YIndex) -> MultiKernel:
    return MultiKernel(3, idx.d, lambda P: s_values(idx, P), f"S[{idx.m},{idx.i},{idx.j}]",
                       symmetric_all=True, rotation_invariant=True, spherical_only=True,
                       spec={"kind": "S", "m": idx.m, "i": idx.i, "j": idx.j, "d": idx.d})


# ---------------------------------------------------------------------------
# trace construction


@dataclass(frozen=True, eq=False)
class PsdCoefficientMatrix:
    m: int
    entries: np.ndarray
    zero_first_row_col: bool = False

    def __post_init__(self):
        A = np.array(self.entries, dtype=np.float64, ndmin=2)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"coefficient block must be square, got {A.shape}")
        if self.m < 0:
            raise ValueError("block index must be nonnegative")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max(initial=0))):
            raise ValueError("coefficient block must be symmetric")
        A = 0.5 * (A + A.T)
        scale = np.linalg.norm(A)
        if A.size and np.linalg.eigvalsh(A).min() < -PSD_RTOL * max(scale, 1e-300):
            raise ValueError(f"block A_{self.m} is not positive semidefinite")
        if self.m == 0:
            if A.size and (np.any(A[0] != 0) or np.any(A[:, 0] != 0)):
                raise ValueError("block A_0 must have zero first row and column")
            object.__setattr__(self, "zero_first_row_col", True)
        A.flags.writeable = False
        object.__setattr__(self, "entries", A)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def random(cls, m: int, size: int, rng: np.random.Generator, rank: int | None = None):
        G = rng.standard_normal((size, rank or size))
        A = G @ G.T
        if m == 0:
            A[0, :] = 0.0
            A[:, 0] = 0.0
        return cls(m, A)


def _trace_values(blocks, d: int, P: np.ndarray) -> np.ndarray:
    # Tr(Y_m A_m) = Q_m(u,v,t) * p(u)' A_m p(v) with p = (P_0^{d+2m}, ..., P_{n-1}^{d+2m})
    u, v, t = _uvt(P)
    acc = np.zeros(P.shape[0])
    for b in blocks:
        if b.size == 0:
            continue
        h = d + 2 * b.m
        pu = eval_gegenbauer_all(h, b.size - 1, u)
        pv = eval_gegenbauer_all(h, b.size - 1, v)
        acc += q3_poly(d, b.m, u, v, t) * np.einsum("in,ij,jn->n", pu, b.entries, pv)
    return acc


def trace_kernel(blocks, d: int, form: str = "S") -> MultiKernel:
    """K(x,y,z) = sum_m Tr(S_m(x,y,z) A_m); ``form="Y"`` skips the symmetrization."""
    blocks = [b if isinstance(b, PsdCoefficientMatrix) else PsdCoefficientMatrix(*b) for b in blocks]
    for b in blocks:
        YIndex(b.m, 0, 0, d)
    if form not in ("S", "Y"):
        raise ValueError("form must be 'S' or 'Y'")
    if form == "Y":
        fn = lambda P: _trace_values(blocks, d, P)  # noqa: E731
    else:
        fn = lambda P: sum(_trace_values(blocks, d, P[:, list(p)]) for p in _PERMS3) / 6.0  # noqa: E731
    spec = {"kind": "S-trace" if form == "S" else "Y-trace", "d": d,
            "blocks": [{"m": b.m, "entries": b.entries.tolist()} for b in blocks]}
    return MultiKernel(3, d, fn, f"{form}-trace", symmetric_all=form == "S",
                       symmetric_first_two=form == "S" or all(np.array_equal(b.entries, b.entries.T) for b in blocks),
                       rotation_invariant=True, spherical_only=True, spec=spec)


def a2_decomposition_blocks(d: int) -> list[PsdCoefficientMatrix]:
    """Blocks whose trace kernel equals 3(d-1)/d - 4 A^2 on the sphere."""
    if d < 3:
        raise ValueError("needs d >= 3")
    return [PsdCoefficientMatrix(0, np.diag([0.0, 0.0, 3 * (d - 1) / d])),
            PsdCoefficientMatrix(1, np.diag([6.0, 6.0])),
            PsdCoefficientMatrix(2, [[3 * (d - 2) / (d - 1)]])]


def v2_decomposition_blocks(d: int) -> list[PsdCoefficientMatrix]:
    """Blocks whose trace kernel equals (d-1)(d-2)/d^2 - V^2 on the sphere."""
    if d < 3:
        raise ValueError("needs d >= 3")
    return [PsdCoefficientMatrix(0, np.diag([0.0, 0.0, (d - 1) * (d - 2) / d ** 2])),
            PsdCoefficientMatrix(1, np.diag([0.0, 4 * (d - 2) / d])),
            PsdCoefficientMatrix(2, [[(3 * d - 4) * (d - 2) / (d * (d - 1))]])]


# ---------------------------------------------------------------------------
# k-input Q kernels


def _check_kl(k: int, l: int, d: int) -> None:
    if k < 3:
        raise ValueError(f"Q_(k,l) needs k >= 3, got {k}")
    if k > d + 1:
        raise ValueError(f"Q_(k,l) needs k <= d+1, got k={k}, d={d}")
    if l < 0:
        raise ValueError("l must be nonnegative")
    if k == d + 1 and l >= 2:
        raise ValueError("k = d+1 only allows l <= 1")


def q_values(k: int, l: int, d: int, P: np.ndarray) -> np.ndarray:
    _check_kl(k, l, d)
    n = P.shape[0]
    if l == 0:
        return np.ones(n)
    U = _accel.gram_batch(P)
    W = U[:, 2:, 2:]
    w1, w2 = U[:, 0, 2:], U[:, 1, 2:]
    detW = _accel.det_batch(W)
    adjW = _accel.adjugate_batch(W)
    aw1 = np.einsum("nij,nj->ni", adjW, w1)
    aw2 = np.einsum("nij,nj->ni", adjW, w2)
    cross = detW * U[:, 0, 1] - np.einsum("ni,ni->n", w2, aw1)
    n1 = detW * U[:, 0, 0] - np.einsum("ni,ni->n", w1, aw1)
    n2 = detW * U[:, 1, 1] - np.einsum("ni,ni->n", w2, aw2)
    a = monomial_coefficients(d - k + 2, l)
    out = np.zeros(n)
    for m in range(l // 2 + 1):
        out += a[l - 2 * m] * cross ** (l - 2 * m) * (n1 * n2) ** m
    return out


def eval_Q(k: int, l: int, d: int, inputs):
    """Q_{k,l}^d at one k-tuple (returns float) or at an (n, k, d) stack."""
    P = _as_tuples(inputs, k)
    if P.shape[2] != d:
        raise ValueError(f"inputs live in R^{P.shape[2]}, expected R^{d}")
    _check_spherical(P)
    out = q_values(k, l, d, P)
    return out if isinstance(inputs, np.ndarray) and inputs.ndim == 3 else float(out[0])


def eval_Q_geometric(k: int, l: int, d: int, inputs) -> float:
    """Q_{k,l}^d from the projections of x_1, x_2 off the tail span."""
    _check_kl(k, l, d)
    X = _as_tuples(inputs, k)[0]
    if l == 0:
        return 1.0
    T = X[2:]
    W = T @ T.T
    if np.linalg.cond(W) > W_COND_MAX:
        raise DegenerateTailError("tail is numerically dependent; use eval_Q")
    Qb, _ = np.linalg.qr(T.T)
    y1 = X[0] - Qb @ (Qb.T @ X[0])
    y2 = X[1] - Qb @ (Qb.T @ X[1])
    n1, n2 = np.linalg.norm(y1), np.linalg.norm(y2)
    if n1 == 0.0 or n2 == 0.0:
        raise DegenerateTailError("x_1 or x_2 lies in the span of the tail")
    c = float(np.clip(y1 @ y2 / (n1 * n2), -1.0, 1.0))
    detW = float(np.linalg.det(W))
    return detW ** l * (n1 * n2) ** l * float(eval_gegenbauer(d - k + 2, l, c))


def kernel_Q(k: int, l: int, d: int) -> MultiKernel:
    _check_kl(k, l, d)
    return MultiKernel(k, d, lambda P: q_values(k, l, d, P), f"Q[{k},{l}]",
                       symmetric_first_two=True, rotation_invariant=True, spherical_only=True,
                       spec={"kind": "Q", "k": k, "l": l, "d": d})


def _g_eval(G) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(G, MultiKernel):
        return G.evaluate
    if np.isscalar(G):
        c = float(G)
        return lambda P: np.full(P.shape[0], c)
    return G


def g_weighted_kernel(G, k: int, l: int, d: int, check_mean_zero: bool = True,
                      seed: int = 0) -> MultiKernel:
    """T = G(x_1, tail) G(x_2, tail) Q_{k,l}(x_1, x_2, tail).

    ``G`` maps an (n, k-1, d) stack to n values and should depend on inner
    products only. For l = 0 the construction needs G to integrate to zero
    in its first argument; this is spot-checked by sampling and a
    ``RuntimeWarning`` is raised when it visibly fails.
    """
    _check_kl(k, l, d)
    g = _g_eval(G)
    if isinstance(G, MultiKernel) and G.arity != k - 1:
        raise ValueError(f"G must take {k - 1} inputs, got arity {G.arity}")
    mean_zero = None
    if l == 0 and check_mean_zero:
        mean_zero = g_mean_zero_check(G, k, d, seed=seed)["ok"]
        if not mean_zero:
            warnings.warn("G does not appear to integrate to zero in its first argument",
                          RuntimeWarning, stacklevel=2)
    rest = [0] + list(range(2, k))
    rest2 = [1] + list(range(2, k))

    def fn(P):
        return g(P[:, rest]) * g(P[:, rest2]) * q_values(k, l, d, P)

    return MultiKernel(k, d, fn, f"G*G*Q[{k},{l}]", symmetric_first_two=True,
                       rotation_invariant=True, spherical_only=True,
                       spec={"kind": "G-weighted", "k": k, "l": l, "d": d, "mean_zero": mean_zero})


def g_mean_zero_check(G, k: int, d: int, n_samples: int = 20000, n_tails: int = 5,
                      seed: int = 0) -> dict:
    """Sample the mean of G(x, tail) over uniform x for a few random tails."""
    g = _g_eval(G)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_tails):
        tail = rng.standard_normal((k - 2, d))
        tail /= np.linalg.norm(tail, axis=1, keepdims=True)
        x = rng.standard_normal((n_samples, d))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        P = np.concatenate([x[:, None], np.broadcast_to(tail, (n_samples, k - 2, d))], axis=1)
        vals = g(P)
        se = vals.std(ddof=1) / math.sqrt(n_samples)
        worst = max(worst, abs(vals.mean()) / max(se, 1e-300) if se > 0 else (0.0 if vals.mean() == 0 else math.inf))
    return {"max_z": worst, "ok": worst <= 5.0}


# ---------------------------------------------------------------------------
# identity registry


def _sph(rng, n, k, d):
    g = rng.standard_normal((n, k, d))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def _S(m, i, j, d, P):
    return s_values(YIndex(m, i, j, d), P)


def _a2(P):
    return _accel.vol_pow_batch(P, "A", 2.0)[1]


def _v2(P):
    return _accel.vol_pow_batch(P, "V", 2.0)[1]


def _v2_rhs(d, P):
    c = (d - 1) * (d - 2) / d ** 2
    return (c - c * _S(0, 2, 2, d, P) - 4 * (d - 2) / d * _S(1, 1, 1, d, P)
            - (3 * d - 4) * (d - 2) / (d * (d - 1)) * _S(2, 0, 0, d, P))


def _a2_rhs(d, P):
    return 0.25 * (3 * (d - 1) / d - 3 * (d - 2) / (d - 1) * _S(2, 0, 0, d, P)
                   - 6 * _S(1, 1, 1, d, P) - 6 * _S(1, 0, 0, d, P) - 3 * (d - 1) / d * _S(0, 2, 2, d, P))


def _heron(d, P):
    u, v, t = _uvt(P)
    return 0.75 - 0.5 * (u + v + t) + 0.5 * (u * v + v * t + t * u) - 0.25 * (u * u + v * v + t * t)


def _sos_lhs(d, P):
    return (3 * (d - 2) / (d - 1) * _S(2, 0, 0, d, P) + 6 * _S(1, 1, 1, d, P)
            + 3 * (d - 1) / d * _S(0, 2, 2, d, P) + 3 / d)


def _sos_rhs(d, P):
    u, v, t = _uvt(P)
    return u * u + v * v + t * t


def _edge_a2(P):
    k = P.shape[1]
    E = P[:, 1:] - P[:, :1]
    return np.linalg.det(np.einsum("nid,njd->nij", E, E)) / math.factorial(k - 1) ** 2


def _q41_explicit(d, P):
    U = _accel.gram_batch(P)
    u = lambda i, j: U[:, i - 1, j - 1]  # noqa: E731
    return (u(1, 2) - u(1, 2) * u(3, 4) ** 2 - u(1, 3) * u(2, 3) - u(1, 4) * u(2, 4)
            + u(1, 3) * u(2, 4) * u(3, 4) + u(1, 4) * u(2, 3) * u(3, 4))


@dataclass(frozen=True)
class IdentityRecord:
    name: str
    lhs: str
    rhs: str
    arity: int | None
    d_min: int
    description: str = ""
    left: Callable | None = field(default=None, repr=False)
    right: Callable | None = field(default=None, repr=False)


IDENTITIES: dict[str, IdentityRecord] = {r.name: r for r in [
    IdentityRecord("v2_decomposition", "V^2", "c - c S022 - 4(d-2)/d S111 - (3d-4)(d-2)/(d(d-1)) S200",
                   3, 3, "three-input V^2 as a constant minus a PSD trace kernel",
                   lambda d, P: _v2(P), _v2_rhs),
    IdentityRecord("a2_decomposition", "A^2", "(3(d-1)/d - 3(d-2)/(d-1) S200 - 6 S111 - 6 S100 - 3(d-1)/d S022)/4",
                   3, 3, "three-input A^2 as a constant minus a PSD trace kernel",
                   lambda d, P: _a2(P), _a2_rhs),
    IdentityRecord("sum_of_squares_identity", "3(d-2)/(d-1) S200 + 6 S111 + 3(d-1)/d S022 + 3/d",
                   "u^2 + v^2 + t^2", 3, 3, "frame potential from three-point terms",
                   _sos_lhs, _sos_rhs),
    IdentityRecord("heron", "A^2 (bordered)", "3/4 - (u+v+t)/2 + (uv+vt+tu)/2 - (u^2+v^2+t^2)/4",
                   3, 2, "triangle area from inner products", lambda d, P: _a2(P), _heron),
    IdentityRecord("bordered_vs_edge", "A^2 (bordered)", "det(E E^T)/((k-1)!)^2",
                   None, 1, "two routes to the squared simplex volume, k = 2..d+1",
                   lambda d, P: _a2(P), lambda d, P: _edge_a2(P)),
    IdentityRecord("q31_explicit", "Q_{3,1}", "u_12 - u_13 u_23", 3, 2, "",
                   lambda d, P: q_values(3, 1, d, P),
                   lambda d, P: (lambda U: U[:, 0, 1] - U[:, 0, 2] * U[:, 1, 2])(_accel.gram_batch(P))),
    IdentityRecord("q41_explicit", "Q_{4,1}", "six-term polynomial in u_ij", 4, 3, "",
                   lambda d, P: q_values(4, 1, d, P), _q41_explicit),
    IdentityRecord("a_to_v_lift", "I_{V^2}(psi# mu)", "(d!)^2 d^d/(d+1)^(d+1) I_{A^2}(mu)",
                   None, 1, "lift of a measure on R^d, relative residual"),
]}


def _a_to_v_residual(d: int, trials: int, rng: np.random.Generator, n_atoms: int = 5) -> float:
    from .energy import energy_integral
    from .measures import DiscreteMeasure, lift_psi

    kA = kernel_A_pow(d + 1, d, 2.0)
    kV = MultiKernel(d + 1, d + 1, lambda P: np.maximum(_v2(P), 0.0), "V^2")
    c = math.factorial(d) ** 2 * d ** d / (d + 1) ** (d + 1)
    worst = 0.0
    for _ in range(trials):
        atoms = rng.standard_normal((n_atoms, d))
        w = rng.random(n_atoms) + 0.05
        w /= w.sum()
        atoms /= math.sqrt(float(w @ np.sum(atoms * atoms, axis=1)))
        mu = DiscreteMeasure(atoms, w)
        lhs = energy_integral(kV, lift_psi(mu)).value
        rhs = c * energy_integral(kA, mu).value
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    return worst


def identity_check(name: str, d: int, trials: int = 1000, seed: int = 0) -> float:
    """Largest residual between the two sides of a registered identity.

    Random spherical tuples are drawn with ``seed``; ``a_to_v_lift`` instead
    draws ``trials`` random 5-atom measures and reports relative residuals.
    """
    rec = IDENTITIES.get(name)
    if rec is None:
        raise KeyError(f"unknown identity {name!r}; known: {sorted(IDENTITIES)}")
    if d < rec.d_min:
        raise ValueError(f"{name} needs d >= {rec.d_min}, got {d}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    if name == "a_to_v_lift":
        return _a_to_v_residual(d, trials, rng)
    if rec.arity is None:
        worst = 0.0
        ks = list(range(2, d + 2))
        for idx, k in enumerate(ks):
            n = trials // len(ks) + (1 if idx < trials % len(ks) else 0)
            if n:
                P = _sph(rng, n, k, d)
                worst = max(worst, float(np.max(np.abs(rec.left(d, P) - rec.right(d, P)))))
        return worst
    P = _sph(rng, trials, rec.arity, d)
    return float(np.max(np.abs(rec.left(d, P) - rec.right(d, P))))
