"""Normalized Gegenbauer polynomials P_m^d with P_m^d(1) = 1.

P_m^d is orthogonal on [-1, 1] for the weight (1 - t^2)^((d-3)/2); d = 2 gives
Chebyshev T_m, d = 3 gives Legendre. For d = 1 only P_0 = 1 and P_1 = t exist.

The normalized family obeys

    P_{m+1}(t) = ((2m + d - 2) t P_m(t) - m P_{m-1}(t)) / (m + d - 2),

which is the ultraspherical recurrence divided through by C_m^lambda(1).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi

COEFF_RTOL = 1e-10
CONVERGENCE_TOL = 1e-8


class QuadratureWarning(RuntimeWarning):
    pass


def _check_degree(d: int, m: int) -> None:
    if m < 0:
        raise ValueError(f"degree must be nonnegative, got {m}")
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if d == 1 and m >= 2:
        raise ValueError("P_m^1 is only defined for m in {0, 1}")


def eval_gegenbauer(d: int, m: int, t):
    """Evaluate P_m^d at t (scalar or array)."""
    _check_degree(d, m)
    t = np.asarray(t, dtype=np.float64)
    if m == 0:
        return np.ones_like(t)[()]
    p_prev, p = np.ones_like(t), t.copy()
    for j in range(1, m):
        p_prev, p = p, ((2 * j + d - 2) * t * p - j * p_prev) / (j + d - 2)
    return p[()]


def eval_gegenbauer_all(d: int, M: int, t) -> np.ndarray:
    """Rows P_0^d(t) .. P_M^d(t), shape (M+1,) + t.shape."""
    _check_degree(d, M)
    t = np.asarray(t, dtype=np.float64)
    out = np.empty((M + 1,) + t.shape)
    out[0] = 1.0
    if M >= 1:
        out[1] = t
    for j in range(1, M):
        out[j + 1] = ((2 * j + d - 2) * t * out[j] - j * out[j - 1]) / (j + d - 2)
    return out


@lru_cache(maxsize=None)
def monomial_coefficients_exact(d: int, m: int) -> tuple[Fraction, ...]:
    """Exact coefficients (c_0, ..., c_m) with P_m^d(t) = sum c_j t^j."""
    _check_degree(d, m)
    p_prev = [Fraction(1)]
    if m == 0:
        return tuple(p_prev)
    p = [Fraction(0), Fraction(1)]
    for j in range(1, m):
        shifted = [Fraction(0)] + p
        nxt = []
        for i in range(j + 2):
            a = Fraction(2 * j + d - 2) * shifted[i]
            b = Fraction(j) * (p_prev[i] if i < len(p_prev) else 0)
            nxt.append((a - b) / (j + d - 2))
        p_prev, p = p, nxt
    return tuple(p)


def monomial_coefficients(d: int, m: int) -> np.ndarray:
    return np.array([float(c) for c in monomial_coefficients_exact(d, m)])


@dataclass(frozen=True)
class GegenbauerSeries:
    d: int
    coeffs: tuple[float, ...]
    converged: bool = True

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        P = eval_gegenbauer_all(self.d, len(self.coeffs) - 1, t)
        return np.tensordot(np.asarray(self.coeffs), P, axes=1)[()]

    def to_json(self) -> dict:
        return {"d": self.d, "coeffs": list(self.coeffs)}

    @classmethod
    def from_json(cls, doc) -> "GegenbauerSeries":
        if isinstance(doc, str):
            doc = json.loads(doc)
        return cls(int(doc["d"]), tuple(float(c) for c in doc["coeffs"]))


@lru_cache(maxsize=64)
def _jacobi_rule(d: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    a = (d - 3) / 2
    x, w = roots_jacobi(n, a, a)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _project(f: Callable, d: int, M: int, n: int) -> np.ndarray:
    x, w = _jacobi_rule(d, n)
    P = eval_gegenbauer_all(d, M, x)
    fx = np.asarray(f(x), dtype=np.float64)
    num = P @ (w * fx)
    den = (P * P) @ w
    return num / den


def expand_in_gegenbauer(f: Callable, d: int, M: int, max_nodes: int = 4096) -> GegenbauerSeries:
    """Coefficients f_m = <f, P_m> / <P_m, P_m> for m = 0..M.

    Gauss-Jacobi with alpha = beta = (d-3)/2 and 2M+16 nodes; the node count
    is doubled until successive coefficient vectors agree within 1e-8 or
    ``max_nodes`` is reached, in which case ``converged`` is False.
    """
    if d < 2:
        raise ValueError("expansions need d >= 2")
    if M < 0:
        raise ValueError("truncation degree must be nonnegative")
    n = 2 * M + 16
    c = _project(f, d, M, n)
    converged = False
    while 2 * n <= max_nodes:
        c2 = _project(f, d, M, 2 * n)
        delta = np.max(np.abs(c2 - c))
        c, n = c2, 2 * n
        if delta <= CONVERGENCE_TOL:
            converged = True
            break
    if not converged:
        warnings.warn(f"Gegenbauer coefficients did not settle below {CONVERGENCE_TOL:g} "
                      f"with {n} nodes", QuadratureWarning, stacklevel=2)
    return GegenbauerSeries(d, tuple(float(v) for v in c), converged)


def generalized_binomial(a: float, m: int) -> float:
    out = 1.0
    for i in range(m):
        out *= (a - i) / (i + 1)
    return out


@dataclass(frozen=True)
class SignReport:
    s: float
    kind: str
    coeffs: tuple[float, ...]
    powers: tuple[int, ...]
    all_nonpositive: bool

    @property
    def offending(self) -> list[int]:
        return [m for m, c in enumerate(self.coeffs) if m >= 1 and c > 0]


def maclaurin_sign_test(s: float, kind: str, n_terms: int = 25) -> SignReport:
    """Maclaurin coefficients of the two-input A^s or V^s in powers of <x,y>.

    kind "A": (2 - 2t)^(s/2) = 2^(s/2) sum (-1)^m binom(s/2, m) t^m.
    kind "V": (1 - t^2)^(s/2) = sum (-1)^m binom(s/2, m) t^(2m).
    Index m runs from 0 to ``n_terms`` inclusive.
    """
    if not 0 < s < 2:
        raise ValueError(f"s must lie in (0, 2), got {s}")
    kind = kind.upper()
    if kind not in ("A", "V"):
        raise ValueError(f"kind must be 'A' or 'V', got {kind!r}")
    pref = 2.0 ** (s / 2) if kind == "A" else 1.0
    coeffs = tuple(pref * (-1) ** m * generalized_binomial(s / 2, m) for m in range(n_terms + 1))
    powers = tuple(range(n_terms + 1)) if kind == "A" else tuple(2 * m for m in range(n_terms + 1))
    ok = all(c <= 0 for c in coeffs[1:])
    return SignReport(s, kind, coeffs, powers, ok)


def schoenberg_pd_test(series: GegenbauerSeries, from_m: int = 0) -> tuple[bool, list[int]]:
    """Nonnegativity of the Gegenbauer coefficients from index ``from_m`` on.

    ``from_m=0`` tests positive definiteness on the sphere; ``from_m=1`` tests
    positive definiteness modulo an additive constant.
    """
    c = np.asarray(series.coeffs)
    if c.size == 0:
        return True, []
    floor = -COEFF_RTOL * max(np.max(np.abs(c)), 1e-300)
    bad = [m for m in range(from_m, c.size) if c[m] < floor]
    return not bad, bad


def gegenbauer_inner(d: int, m: int, n: int, nodes: int | None = None) -> float:
    """<P_m, P_n> under the weight (1 - t^2)^((d-3)/2)."""
    nodes = nodes or (m + n) // 2 + 8
    x, w = _jacobi_rule(d, nodes)
    return float(np.sum(w * eval_gegenbauer(d, m, x) * eval_gegenbauer(d, n, x)))
