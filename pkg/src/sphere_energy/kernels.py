"""Multi-input kernels, the concrete V^s / A^s / frame families, and kernel algebra.

A :class:`MultiKernel` wraps a batched evaluator taking an array of k-tuples
of shape (n, k, d) and returning n values. Kernels are immutable; the algebra
(``+``, ``*``, scaling, lifting, symmetrization) builds new kernels whose
metadata flags are the conservative intersection of the operands' flags.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import _accel
from .geomcore import NEG_DET_TOL, NegativeVolumeError

Evaluator = Callable[[np.ndarray], np.ndarray]

_FLAGS = ("symmetric_all", "symmetric_first_two", "rotation_invariant",
          "spherical_only", "vanishes_on_repeats")


class KernelMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MultiKernel:
    arity: int
    dim: int
    fn: Evaluator
    name: str = "K"
    symmetric_all: bool = False
    symmetric_first_two: bool = False
    rotation_invariant: bool = False
    spherical_only: bool = False
    # K vanishes whenever two inputs coincide (true for V^s, A^s with s > 0)
    vanishes_on_repeats: bool = False
    # singular kernels are only summed over tuples of distinct points
    singular: bool = False
    grad: Evaluator | None = None
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arity < 1:
            raise ValueError("arity must be positive")
        if self.symmetric_all:
            object.__setattr__(self, "symmetric_first_two", True)

    def evaluate(self, P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=np.float64)
        if P.ndim != 3 or P.shape[1] != self.arity or P.shape[2] != self.dim:
            raise KernelMismatchError(
                f"{self.name} expects tuples of shape (n, {self.arity}, {self.dim}), got {P.shape}")
        return np.asarray(self.fn(P), dtype=np.float64)

    def tuple_grad(self, P: np.ndarray) -> np.ndarray:
        if self.grad is None:
            raise NotImplementedError(f"{self.name} has no analytic gradient")
        return self.grad(np.asarray(P, dtype=np.float64))

    def __call__(self, *points) -> float:
        P = np.stack([np.asarray(getattr(p, "coords", p), dtype=np.float64) for p in points])
        return float(self.evaluate(P[None])[0])

    def flags(self) -> dict:
        return {f: getattr(self, f) for f in _FLAGS} | {"singular": self.singular}

    # -- algebra ---------------------------------------------------------

    def _check_compat(self, other: "MultiKernel"):
        if other.arity != self.arity or other.dim != self.dim:
            raise KernelMismatchError(
                f"cannot combine arity/dim {self.arity}/{self.dim} with {other.arity}/{other.dim}")

    def _meet(self, other: "MultiKernel") -> dict:
        out = {f: getattr(self, f) and getattr(other, f) for f in _FLAGS}
        out["singular"] = self.singular or other.singular
        return out

    def __add__(self, other):
        if isinstance(other, MultiKernel):
            return kernel_sum(self, other)
        return add_constant(self, float(other))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, MultiKernel):
            return kernel_product(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return self + (-other if isinstance(other, MultiKernel) else -float(other))


def kernel_sum(a: MultiKernel, b: MultiKernel) -> MultiKernel:
    a._check_compat(b)
    grad = None
    if a.grad is not None and b.grad is not None:
        grad = lambda P: a.grad(P) + b.grad(P)  # noqa: E731
    flags = a._meet(b)
    return MultiKernel(a.arity, a.dim, lambda P: a.fn(P) + b.fn(P), f"({a.name} + {b.name})",
                       grad=grad, spec={"sum": [a.spec, b.spec]}, **flags)


def kernel_product(a: MultiKernel, b: MultiKernel) -> MultiKernel:
    a._check_compat(b)
    grad = None
    if a.grad is not None and b.grad is not None:
        def grad(P):
            return a.fn(P)[:, None, None] * b.grad(P) + b.fn(P)[:, None, None] * a.grad(P)
    flags = a._meet(b)
    flags["vanishes_on_repeats"] = a.vanishes_on_repeats or b.vanishes_on_repeats
    return MultiKernel(a.arity, a.dim, lambda P: a.fn(P) * b.fn(P), f"({a.name} * {b.name})",
                       grad=grad, spec={"product": [a.spec, b.spec]}, **flags)


def scale(a: MultiKernel, c: float) -> MultiKernel:
    grad = None if a.grad is None else (lambda P: c * a.grad(P))
    return replace(a, fn=lambda P: c * a.fn(P), name=f"{c:g}*{a.name}", grad=grad,
                   spec={"scale": c, "of": a.spec})


def add_constant(a: MultiKernel, c: float) -> MultiKernel:
    return replace(a, fn=lambda P: a.fn(P) + c, name=f"({a.name} + {c:g})",
                   vanishes_on_repeats=a.vanishes_on_repeats and c == 0.0,
                   spec={"add_constant": c, "of": a.spec})


def constant_kernel(k: int, d: int, c: float) -> MultiKernel:
    return MultiKernel(k, d, lambda P: np.full(P.shape[0], c), f"{c:g}",
                       symmetric_all=True, rotation_invariant=True,
                       grad=lambda P: np.zeros_like(P), spec={"kind": "const", "k": k, "d": d, "c": c})


# ---------------------------------------------------------------------------
# geometric families


def _volume_kernel(kind: str, k: int, d: int, s: float, singular: bool) -> MultiKernel:
    if s <= 0 and not singular:
        raise ValueError(f"s = {s} <= 0 requires singular=True")
    neg_tol = NEG_DET_TOL * k

    def _guard(sq):
        if sq.size and sq.min() < -neg_tol:
            raise NegativeVolumeError(f"{kind}^2 = {sq.min():.3e} below roundoff tolerance")

    if s > 0:
        def fn(P):
            vals, sq, _ = _accel.vol_pow_batch(P, kind, s)
            _guard(sq)
            return vals

        def grad(P):
            return _accel.vol_pow_batch(P, kind, s, want_grad=True)[2]
    else:
        def fn(P):
            _, sq, _ = _accel.vol_pow_batch(P, kind, 2.0)
            _guard(sq)
            with np.errstate(divide="ignore"):
                return np.power(np.maximum(sq, 0.0), 0.5 * s)

        def grad(P):
            _, sq, g2 = _accel.vol_pow_batch(P, kind, 2.0, want_grad=True)
            sq = np.maximum(sq, 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                fac = np.where(sq > 0, 0.5 * s * sq ** (0.5 * s - 1.0), 0.0)
            return fac[:, None, None] * g2

    return MultiKernel(k, d, fn, f"{kind}^{s:g}", symmetric_all=True, rotation_invariant=True,
                       vanishes_on_repeats=s > 0, singular=s <= 0, grad=grad,
                       spec={"kind": kind, "k": k, "d": d, "s": s})


def kernel_V_pow(k: int, d: int, s: float, singular: bool = False) -> MultiKernel:
    """V(x_1..x_k)^s, the s-th power of the spanned parallelepiped volume."""
    if not 2 <= k <= d:
        raise ValueError(f"V needs 2 <= k <= d, got k={k}, d={d}")
    return _volume_kernel("V", k, d, s, singular)


def kernel_A_pow(k: int, d: int, s: float, singular: bool = False) -> MultiKernel:
    """A(x_1..x_k)^s, the s-th power of the simplex volume."""
    if not 2 <= k <= d + 1:
        raise ValueError(f"A needs 2 <= k <= d+1, got k={k}, d={d}")
    return _volume_kernel("A", k, d, s, singular)


def kernel_log(kind: str, k: int, d: int) -> MultiKernel:
    """-log V or -log A; singular, so energies skip coincident tuples."""
    base = kernel_V_pow(k, d, 2.0) if kind == "V" else kernel_A_pow(k, d, 2.0)

    def fn(P):
        with np.errstate(divide="ignore"):
            return -0.5 * np.log(base.fn(P))

    def grad(P):
        v = base.fn(P)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(v > 0, -0.5 / v, 0.0)
        return fac[:, None, None] * base.grad(P)

    return MultiKernel(k, d, fn, f"-log {kind}", symmetric_all=True, rotation_invariant=True,
                       singular=True, grad=grad, spec={"kind": f"log{kind}", "k": k, "d": d})


def kernel_frame(d: int) -> MultiKernel:
    """The frame potential <x, y>^2."""
    if d < 1:
        raise ValueError("d must be >= 1")

    def fn(P):
        return np.einsum("nd,nd->n", P[:, 0], P[:, 1]) ** 2

    def grad(P):
        t = np.einsum("nd,nd->n", P[:, 0], P[:, 1])[:, None]
        return np.stack([2 * t * P[:, 1], 2 * t * P[:, 0]], axis=1)

    return MultiKernel(2, d, fn, "frame", symmetric_all=True, rotation_invariant=True,
                       grad=grad, spec={"kind": "frame", "d": d})


# ---------------------------------------------------------------------------
# lifting and symmetrization


def lift_kernel(base: MultiKernel, n: int, permutations: Sequence[Sequence[int]] | str = "all") -> MultiKernel:
    """Average base(x_1, x_2, x_pi(3), ..., x_pi(k)) over pi in ``permutations``.

    Each permutation is given by its images (pi(3), ..., pi(n)), 1-based,
    a rearrangement of 3..n. ``"all"`` uses every permutation of 3..n.
    """
    k = base.arity
    if n < k:
        raise ValueError(f"cannot lift arity {k} down to {n}")
    tail = list(range(3, n + 1))
    if isinstance(permutations, str):
        if permutations != "all":
            raise ValueError("permutations must be 'all' or an explicit list")
        perms = list(itertools.permutations(tail))
    else:
        perms = [tuple(p) for p in permutations]
    if not perms:
        raise ValueError("the permutation set must be nonempty")
    for p in perms:
        if sorted(p) != tail:
            raise ValueError(f"{p} is not a permutation of {tail}")
    # only the first k-2 images matter; dedupe while keeping multiplicity
    cols = np.array([[0, 1] + [q - 1 for q in p[: k - 2]] for p in perms], dtype=int)

    def fn(P):
        acc = np.zeros(P.shape[0])
        for c in cols:
            acc += base.fn(P[:, c])
        return acc / len(cols)

    grad = None
    if base.grad is not None:
        def grad(P):
            out = np.zeros_like(P)
            for c in cols:
                g = base.grad(P[:, c])
                for slot, src in enumerate(c):
                    out[:, src] += g[:, slot]
            return out / len(cols)

    sym_tail = isinstance(permutations, str)
    return MultiKernel(n, base.dim, fn, f"lift_{n}({base.name})",
                       symmetric_all=base.symmetric_all and k == n and sym_tail,
                       symmetric_first_two=base.symmetric_first_two,
                       rotation_invariant=base.rotation_invariant,
                       spherical_only=base.spherical_only,
                       vanishes_on_repeats=False,
                       singular=base.singular, grad=grad,
                       spec={"lift": {"n": n, "of": base.spec}})


def symmetrize(base: MultiKernel) -> MultiKernel:
    """Average of ``base`` over all k! orderings of its inputs."""
    k = base.arity
    if k > 8:
        warnings.warn(f"symmetrizing arity {k} costs {math.factorial(k)} evaluations per tuple",
                      RuntimeWarning, stacklevel=2)
    perms = np.array(list(itertools.permutations(range(k))), dtype=int)

    def fn(P):
        acc = np.zeros(P.shape[0])
        for p in perms:
            acc += base.fn(P[:, p])
        return acc / len(perms)

    grad = None
    if base.grad is not None:
        def grad(P):
            out = np.zeros_like(P)
            for p in perms:
                out[:, p] += base.grad(P[:, p])
            return out / len(perms)

    return MultiKernel(k, base.dim, fn, f"sym({base.name})", symmetric_all=True,
                       rotation_invariant=base.rotation_invariant, spherical_only=base.spherical_only,
                       vanishes_on_repeats=base.vanishes_on_repeats, singular=base.singular,
                       grad=grad, spec={"symmetrize": base.spec})


# ---------------------------------------------------------------------------
# two-input views


@dataclass(frozen=True, eq=False)
class PotentialSlice:
    """(x, y) -> K(x, y, z_3, ..., z_k) for a fixed tail."""

    parent: MultiKernel
    tail: np.ndarray

    def __post_init__(self):
        tail = np.asarray(self.tail, dtype=np.float64).reshape(-1, self.parent.dim) \
            if np.size(self.tail) else np.zeros((0, self.parent.dim))
        if tail.shape[0] != self.parent.arity - 2:
            raise KernelMismatchError(
                f"tail of length {tail.shape[0]} for arity {self.parent.arity}")
        tail.flags.writeable = False
        object.__setattr__(self, "tail", tail)

    def pairs(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        n = X.shape[0]
        T = np.broadcast_to(self.tail, (n,) + self.tail.shape)
        return self.parent.evaluate(np.concatenate([X[:, None], Y[:, None], T], axis=1))

    def __call__(self, x, y) -> float:
        return float(self.pairs(x, y)[0])

    def matrix(self, X: np.ndarray) -> np.ndarray:
        """M_ij = K(x_i, x_j, tail) over the rows of X."""
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        return self.pairs(X[ii.ravel()], X[jj.ravel()]).reshape(n, n)


def slice_kernel(kernel: MultiKernel, tail=()) -> PotentialSlice:
    return PotentialSlice(kernel, np.asarray(tail, dtype=np.float64))
