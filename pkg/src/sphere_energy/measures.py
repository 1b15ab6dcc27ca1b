"""Probability measures: discrete atoms, the uniform sphere, and mixtures.

Sampling is reproducible and independent of how work is split: draw ``n``
is cut into fixed blocks of ``BLOCK`` points and block ``b`` uses the
stream ``SeedSequence(seed, spawn_key=(b,))``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

BLOCK = 1 << 16
MASS_TOL = 1e-12
SECOND_MOMENT_TOL = 1e-10


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(block),)))


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        X = np.array(getattr(self.atoms, "points", self.atoms), dtype=np.float64)
        if X.ndim == 1:
            X = X[None]
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[0] != w.size or w.size == 0:
            raise ValueError(f"{X.shape[0] if X.ndim == 2 else '?'} atoms but {w.size} weights")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        X.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "atoms", X)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, atoms) -> "DiscreteMeasure":
        X = np.asarray(getattr(atoms, "points", atoms), dtype=np.float64)
        return cls(X, np.full(X.shape[0], 1.0 / X.shape[0]))

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    def to_json(self) -> dict:
        return {"variant": "discrete", "dim": self.dim, "atoms": self.atoms.tolist(),
                "weights": self.weights.tolist()}


@dataclass(frozen=True)
class UniformSphere:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")

    def to_json(self) -> dict:
        return {"variant": "uniform_sphere", "dim": self.dim}


@dataclass(frozen=True, eq=False)
class Mixture:
    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), m) for w, m in self.components)
        if not comps:
            raise ValueError("empty mixture")
        ws = np.array([w for w, _ in comps])
        if np.any(ws < 0) or abs(ws.sum() - 1.0) > MASS_TOL:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if len({m.dim for _, m in comps}) != 1:
            raise ValueError("mixture components have different dimensions")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components[0][1].dim

    def to_json(self) -> dict:
        return {"variant": "mixture", "dim": self.dim,
                "components": [{"weight": w, "measure": m.to_json()} for w, m in self.components]}


MeasureSpec = Union[DiscreteMeasure, UniformSphere, Mixture]


def measure_from_json(doc) -> MeasureSpec:
    if isinstance(doc, str):
        doc = json.loads(doc)
    kind = doc.get("variant")
    if kind == "discrete":
        atoms = np.array(doc["atoms"], dtype=np.float64).reshape(-1, int(doc["dim"]))
        return DiscreteMeasure(atoms, doc["weights"])
    if kind == "uniform_sphere":
        return UniformSphere(int(doc["dim"]))
    if kind == "mixture":
        return Mixture(tuple((c["weight"], measure_from_json(c["measure"])) for c in doc["components"]))
    raise ValueError(f"unknown measure variant {kind!r}")


# ---------------------------------------------------------------------------
# sampling


def _draw(spec: MeasureSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec, UniformSphere):
        g = rng.standard_normal((n, spec.dim))
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    if isinstance(spec, DiscreteMeasure):
        idx = rng.choice(spec.n_atoms, size=n, p=spec.weights)
        return spec.atoms[idx]
    if isinstance(spec, Mixture):
        ws = np.array([w for w, _ in spec.components])
        which = rng.choice(len(ws), size=n, p=ws / ws.sum())
        out = np.empty((n, spec.dim))
        for c, (_, m) in enumerate(spec.components):
            sel = np.flatnonzero(which == c)
            if sel.size:
                out[sel] = _draw(m, sel.size, rng)
        return out
    raise TypeError(f"not a measure: {type(spec).__name__}")


def sample(spec: MeasureSpec, n: int, seed: int = 0) -> np.ndarray:
    """n i.i.d. draws from ``spec`` as an (n, d) array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    parts = []
    for b in range(-(-n // BLOCK)):
        size = min(BLOCK, n - b * BLOCK)
        parts.append(_draw(spec, size, block_rng(seed, b)))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class MomentReport:
    mean: np.ndarray
    second_moment: np.ndarray
    trace: float
    balanced: bool
    isotropic: bool
    unit_second_moment: bool
    tol: float
    exact: bool

    @property
    def isotropy_error(self) -> float:
        d = self.second_moment.shape[0]
        return float(np.max(np.abs(self.second_moment - np.eye(d) / d)))

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "second_moment": self.second_moment.tolist(),
                "trace": self.trace, "balanced": self.balanced, "isotropic": self.isotropic,
                "unit_second_moment": self.unit_second_moment, "tol": self.tol, "exact": self.exact}


def moments(m: MeasureSpec, tol: float | None = None, n_samples: int = 200_000,
            seed: int = 0) -> MomentReport:
    """Mean, second-moment matrix, and the balanced / isotropic flags.

    Discrete measures are summed exactly with default tolerance 1e-9.
    Other measures are sampled; the default tolerance is then five standard
    errors of the worst entry.
    """
    if isinstance(m, DiscreteMeasure):
        X, w = m.atoms, m.weights
        mean = w @ X
        M2 = (X * w[:, None]).T @ X
        t = tol if tol is not None else 1e-9
        exact = True
    else:
        X = sample(m, n_samples, seed)
        mean = X.mean(axis=0)
        outer = X[:, :, None] * X[:, None, :]
        M2 = outer.mean(axis=0)
        if tol is None:
            se_mean = X.std(axis=0, ddof=1).max() / math.sqrt(n_samples)
            se_m2 = outer.std(axis=0, ddof=1).max() / math.sqrt(n_samples)
            t = 5.0 * max(se_mean, se_m2)
        else:
            t = tol
        exact = False
    d = X.shape[1]
    tr = float(np.trace(M2))
    return MomentReport(mean=mean, second_moment=M2, trace=tr,
                        balanced=bool(np.max(np.abs(mean)) <= t),
                        isotropic=bool(np.max(np.abs(M2 - np.eye(d) / d)) <= t),
                        unit_second_moment=bool(abs(tr - 1.0) <= max(t, SECOND_MOMENT_TOL)),
                        tol=t, exact=exact)


# ---------------------------------------------------------------------------
# projection and lift


def project_pi(m: DiscreteMeasure) -> DiscreteMeasure:
    """Radial projection with mass reweighted by |x|^2."""
    if not isinstance(m, DiscreteMeasure):
        raise TypeError("project_pi needs a discrete measure")
    nrm2 = np.sum(m.atoms ** 2, axis=1)
    if np.any(nrm2 == 0.0):
        raise ValueError("an atom sits at the origin")
    second = float(m.weights @ nrm2)
    if abs(second - 1.0) > SECOND_MOMENT_TOL:
        raise ValueError(f"second moment is {second!r}, not 1")
    w = m.weights * nrm2
    return DiscreteMeasure(m.atoms / np.sqrt(nrm2)[:, None], w / w.sum())


def psi(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d = X.shape[1]
    return np.hstack([math.sqrt(d / (d + 1)) * X, np.full((X.shape[0], 1), 1 / math.sqrt(d + 1))])


def lift_psi(m: DiscreteMeasure) -> DiscreteMeasure:
    """Pushforward under x -> (sqrt(d/(d+1)) x, 1/sqrt(d+1))."""
    if not isinstance(m, DiscreteMeasure):
        raise TypeError("lift_psi needs a discrete measure")
    return DiscreteMeasure(psi(m.atoms), m.weights)


# ---------------------------------------------------------------------------
# named constructions


def regular_simplex(d: int) -> np.ndarray:
    """d+1 unit vectors in R^d with pairwise inner products -1/d."""
    if d < 1:
        raise ValueError("d must be >= 1")
    G = (1 + 1 / d) * np.eye(d + 1) - 1 / d
    lam, V = np.linalg.eigh(G)
    X = V[:, 1:] * np.sqrt(np.maximum(lam[1:], 0.0))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def regular_polygon(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("a polygon needs at least 2 vertices")
    a = 2 * np.pi * np.arange(n) / n
    return np.stack([np.cos(a), np.sin(a)], axis=1)


_ALIASES = {"sigma": "sigma", "uniform_sphere": "sigma",
            "onb": "onb", "orthonormal_basis": "onb",
            "simplex": "simplex", "regular_simplex": "simplex",
            "pair": "pair", "antipodal_pair": "pair",
            "cross": "cross", "cross_polytope": "cross",
            "polygon": "polygon"}


def make_named_measure(name: str, d: int | None = None) -> MeasureSpec:
    """sigma, onb, simplex, pair, cross (parameter d) or polygon (vertex count, in R^2)."""
    key = _ALIASES.get(name)
    if key is None:
        raise ValueError(f"unknown named measure {name!r}")
    if d is None or d < 1:
        raise ValueError(f"{name} needs a positive integer parameter")
    if key == "sigma":
        return UniformSphere(d)
    if key == "onb":
        return DiscreteMeasure.uniform(np.eye(d))
    if key == "simplex":
        return DiscreteMeasure.uniform(regular_simplex(d))
    if key == "pair":
        e = np.zeros(d)
        e[0] = 1.0
        return DiscreteMeasure.uniform(np.stack([e, -e]))
    if key == "cross":
        return DiscreteMeasure.uniform(np.vstack([np.eye(d), -np.eye(d)]))
    return DiscreteMeasure.uniform(regular_polygon(d))


def parse_measure(text: str) -> MeasureSpec:
    """``sigma:3``-style names or inline JSON."""
    text = text.strip()
    if text.startswith("{"):
        return measure_from_json(text)
    name, _, arg = text.partition(":")
    if not arg:
        raise ValueError(f"measure {text!r} needs a parameter, e.g. {name}:3")
    try:
        n = int(arg)
    except ValueError:
        raise ValueError(f"measure parameter must be an integer, got {arg!r}") from None
    return make_named_measure(name, n)
