"""Gram matrices, determinants, and the two volume potentials V and A.

``V(x_1..x_k)`` is the k-volume of the parallelepiped spanned by the vectors,
so ``V^2 = det(Gram)``. ``A(x_1..x_k)`` is the (k-1)-volume of the simplex
with those vertices, obtained from the bordered Gram determinant

    ((k-1)!)^2 A^2 = -det [[U, 1], [1^T, 0]].

An independent route through the Gram matrix of the edge vectors
``x_j - x_1`` is kept as :func:`volume_simplex_edge_form` for cross-checks.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _accel

SPHERE_TOL = 1e-12
NEG_DET_TOL = 1e-10


class DimensionMismatchError(ValueError):
    pass


class NegativeVolumeError(ArithmeticError):
    """A squared volume came out more negative than roundoff allows."""


class DegenerateVolumeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Point:
    coords: np.ndarray
    spherical: bool = False

    def __post_init__(self):
        c = np.array(self.coords, dtype=np.float64).reshape(-1)
        if c.size < 1:
            raise ValueError("a point needs at least one coordinate")
        if self.spherical:
            nrm = np.linalg.norm(c)
            if nrm == 0.0:
                raise ValueError("cannot put the origin on the sphere")
            c = c / nrm
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.size


@dataclass(frozen=True)
class PointConfig:
    """An ordered multiset of N points in R^d, stored as an (N, d) array."""

    points: np.ndarray
    spherical: bool = False

    def __post_init__(self):
        pts = self.points
        if isinstance(pts, PointConfig):
            pts = pts.points
        if isinstance(pts, (list, tuple)) and pts and isinstance(pts[0], Point):
            dims = {p.dim for p in pts}
            if len(dims) != 1:
                raise DimensionMismatchError(f"points have mixed dimensions {sorted(dims)}")
            pts = np.stack([p.coords for p in pts])
        elif isinstance(pts, (list, tuple)):
            lens = {len(np.atleast_1d(p)) for p in pts}
            if len(lens) > 1:
                raise DimensionMismatchError(f"points have mixed dimensions {sorted(lens)}")
        arr = np.array(pts, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected an (N, d) array with N, d >= 1, got shape {arr.shape}")
        if self.spherical:
            nrm = np.linalg.norm(arr, axis=1, keepdims=True)
            if np.any(nrm == 0.0):
                raise ValueError("cannot put the origin on the sphere")
            arr = arr / nrm
        arr.flags.writeable = False
        object.__setattr__(self, "points", arr)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def __getitem__(self, i) -> Point:
        return Point(self.points[i], spherical=self.spherical)

    def subset(self, idx: Sequence[int]) -> "PointConfig":
        return PointConfig(self.points[list(idx)], spherical=self.spherical)

    # -- serialization -------------------------------------------------

    def to_text(self) -> str:
        lines = [f"{self.n} {self.dim}"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.points]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, spherical: bool = False) -> "PointConfig":
        rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        n, d = int(rows[0][0]), int(rows[0][1])
        body = rows[1:]
        if len(body) != n or any(len(r) != d for r in body):
            raise ValueError(f"header says {n}x{d} but body does not match")
        return cls(np.array(body, dtype=np.float64), spherical=spherical)

    def to_json(self) -> dict:
        return {"dim": self.dim, "points": self.points.tolist()}

    @classmethod
    def from_json(cls, doc: dict | str, spherical: bool = False) -> "PointConfig":
        if isinstance(doc, str):
            doc = json.loads(doc)
        pts = np.array(doc["points"], dtype=np.float64).reshape(-1, int(doc["dim"]))
        return cls(pts, spherical=spherical)


def load_config(path: str | Path, spherical: bool = False) -> PointConfig:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return PointConfig.from_json(text, spherical=spherical)
    return PointConfig.from_text(text, spherical=spherical)


def as_array(config) -> np.ndarray:
    if isinstance(config, PointConfig):
        return config.points
    if isinstance(config, (list, tuple)) and config and isinstance(config[0], Point):
        return PointConfig(list(config)).points
    arr = np.asarray(config, dtype=np.float64)
    return arr[None, :] if arr.ndim == 1 else arr


@dataclass(frozen=True)
class GramBundle:
    U: np.ndarray
    det: float
    adjugate: np.ndarray
    dim: int

    @property
    def k(self) -> int:
        return self.U.shape[0]

    def submatrix(self, drop_rows: Iterable[int] = (), drop_cols: Iterable[int] = ()) -> np.ndarray:
        """U with the listed rows and columns removed (U_{I,J})."""
        rows = [i for i in range(self.k) if i not in set(drop_rows)]
        cols = [j for j in range(self.k) if j not in set(drop_cols)]
        return self.U[np.ix_(rows, cols)]


def gram(config) -> GramBundle:
    X = as_array(config)
    U = X @ X.T
    det = float(_accel.det_batch(U[None])[0])
    adj = _accel.adjugate_batch(U[None])[0]
    for a in (U, adj):
        a.flags.writeable = False
    return GramBundle(U=U, det=det, adjugate=adj, dim=X.shape[1])


def _clamp(sq: float, scale: float, tol: float, what: str) -> float:
    if sq < -tol * max(scale, 1.0):
        raise NegativeVolumeError(f"{what} = {sq:.3e} is below -{tol:g}; inputs are not a real tuple?")
    return max(sq, 0.0)


def volume_parallelepiped_sq(config, neg_tol: float = NEG_DET_TOL) -> float:
    X = as_array(config)
    k, d = X.shape
    if k > d:
        warnings.warn(f"{k} vectors in R^{d} are always dependent; V = 0", DegenerateVolumeWarning, stacklevel=2)
        return 0.0
    _, sq, _ = _accel.vol_pow_batch(X[None], "V", 2.0)
    scale = float(np.max(np.sum(X * X, axis=1))) ** k
    return _clamp(float(sq[0]), scale, neg_tol * k, "V^2")


def volume_parallelepiped(config, neg_tol: float = NEG_DET_TOL) -> float:
    """k-volume of the parallelepiped spanned by the k rows of ``config``.

    For k > d the volume is identically zero; a
    :class:`DegenerateVolumeWarning` is emitted instead of raising.
    """
    return math.sqrt(volume_parallelepiped_sq(config, neg_tol))


def volume_simplex_sq(config, neg_tol: float = NEG_DET_TOL) -> float:
    X = as_array(config)
    k = X.shape[0]
    if k < 2:
        raise ValueError("a simplex needs at least two vertices")
    _, sq, _ = _accel.vol_pow_batch(X[None], "A", 2.0)
    scale = float(np.max(np.sum(X * X, axis=1))) ** (k - 1)
    return _clamp(float(sq[0]), scale, neg_tol * k, "A^2")


def volume_simplex(config, neg_tol: float = NEG_DET_TOL) -> float:
    """(k-1)-volume of the simplex with vertices the k rows of ``config``."""
    return math.sqrt(volume_simplex_sq(config, neg_tol))


def volume_simplex_edge_form(config) -> float:
    X = as_array(config)
    k = X.shape[0]
    if k < 2:
        raise ValueError("a simplex needs at least two vertices")
    E = X[1:] - X[0]
    det = float(np.linalg.det(E @ E.T))
    return math.sqrt(max(det, 0.0)) / math.factorial(k - 1)


def face_functional(config, j: int, s: float) -> float:
    """Sum of Vol_j(F)^s over all j-dimensional faces of the simplex ``config``.

    ``config`` holds the d+1 vertices of a d-simplex in R^d; a j-face has
    j+1 vertices.
    """
    X = as_array(config)
    n, d = X.shape
    if n != d + 1:
        raise ValueError(f"need d+1 = {d + 1} vertices, got {n}")
    if not 1 <= j <= d:
        raise ValueError(f"face dimension j must lie in [1, {d}], got {j}")
    if s <= 0:
        raise ValueError("s must be positive")
    faces = np.array(list(itertools.combinations(range(n), j + 1)))
    _, sq, _ = _accel.vol_pow_batch(X[faces], "A", 2.0)
    return float(np.sum(np.maximum(sq, 0.0) ** (0.5 * s)))


def random_sphere(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))
