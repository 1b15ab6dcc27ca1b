"""Projected gradient ascent of discrete energies on (S^{d-1})^N.

Each restart starts from i.i.d. uniform points, steps along the Riemannian
gradient (the Euclidean gradient with radial parts removed), retracts by
renormalizing, and accepts a step only under the Armijo condition, so the
energy never decreases.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .energy import discrete_energy, iter_tuples
from .geomcore import PointConfig, as_array
from .kernels import MultiKernel
from .measures import block_rng

FD_STEP = 1e-5


@dataclass(frozen=True)
class AscentConfig:
    restarts: int = 20
    max_iters: int = 5000
    step: float = 0.1
    backtrack: float = 0.5
    armijo: float = 1e-4
    tol: float = 1e-8
    max_step: float = 10.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if min(self.restarts, self.max_iters, self.workers) < 1:
            raise ValueError("restarts, max_iters and workers must be positive")
        if not (self.step > 0 and 0 < self.backtrack < 1 and 0 < self.armijo < 1 and self.tol > 0):
            raise ValueError("step > 0, backtrack and armijo in (0, 1), tol > 0 required")


@dataclass(frozen=True)
class AscentResult:
    best_config: PointConfig
    best_energy: float
    restart_energies: tuple[float, ...]
    grad_norm: float
    iterations: int
    converged: bool
    failed_restarts: int = 0
    stop_reason: str = "max_iters"
    history: tuple[float, ...] = field(default=(), repr=False)

    def to_json(self) -> dict:
        return {"best_energy": self.best_energy, "restart_energies": list(self.restart_energies),
                "grad_norm": self.grad_norm, "iterations": self.iterations,
                "converged": self.converged, "stop_reason": self.stop_reason,
                "failed_restarts": self.failed_restarts,
                "config": self.best_config.to_json()}


def _normalize(X):
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def project_tangent(X: np.ndarray, G: np.ndarray) -> np.ndarray:
    return G - np.sum(G * X, axis=1, keepdims=True) * X


def _energy(kernel: MultiKernel, X: np.ndarray) -> float:
    return discrete_energy(kernel, X).value


def euclidean_gradient(kernel: MultiKernel, X: np.ndarray) -> np.ndarray:
    """Gradient of E_K in the ambient coordinates of all N points."""
    X = np.asarray(X, dtype=np.float64)
    N, d = X.shape
    k = kernel.arity
    if kernel.grad is None:
        return _fd_gradient(kernel, X)
    distinct = kernel.singular
    if distinct:
        norm = math.perm(N, k)
        if kernel.singular and len({tuple(r) for r in X}) < N:
            raise ValueError("coincident points under a singular kernel")
    else:
        norm = N ** k
    G = np.zeros_like(X)
    for idx, mult in iter_tuples(N, k, kernel.symmetric_all, distinct or kernel.vanishes_on_repeats):
        g = kernel.tuple_grad(X[idx]) * mult[:, None, None]
        for slot in range(k):
            np.add.at(G, idx[:, slot], g[:, slot])
    return G / norm


def _fd(f, X: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    G = np.zeros_like(X)
    for i, j in itertools.product(range(X.shape[0]), range(X.shape[1])):
        Xp, Xm = X.copy(), X.copy()
        Xp[i, j] += h
        Xm[i, j] -= h
        G[i, j] = (f(Xp) - f(Xm)) / (2 * h)
    return G


def _fd_gradient(kernel: MultiKernel, X: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    return _fd(lambda Y: _energy(kernel, Y), X, h)


def gradient(kernel: MultiKernel, config, analytic: bool = True) -> np.ndarray:
    """Riemannian gradient of E_K: one tangent vector per point, shape (N, d)."""
    X = as_array(config)
    G = euclidean_gradient(kernel, X) if analytic else _fd_gradient(kernel, X)
    return project_tangent(X, G)


def _ascend(energy, grad, X: np.ndarray, cfg: AscentConfig):
    E = energy(X)
    if not math.isfinite(E):
        raise FloatingPointError("non-finite starting energy")
    step = cfg.step
    it, gnorm = 0, math.inf
    history = [E]
    for it in range(1, cfg.max_iters + 1):
        G = grad(X)
        g2 = float(np.sum(G * G))
        gnorm = math.sqrt(g2)
        if not math.isfinite(gnorm):
            raise FloatingPointError("gradient blew up")
        if gnorm <= cfg.tol:
            return X, E, gnorm, it, True, "gradient_tol", history
        alpha = min(step, cfg.max_step)
        while True:
            Xn = _normalize(X + alpha * G)
            En = energy(Xn)
            # difference form: a step that leaves E unchanged in floating point is rejected
            if math.isfinite(En) and En - E >= cfg.armijo * alpha * g2:
                break
            alpha *= cfg.backtrack
            if alpha < 1e-14:
                # no representable improvement left along G
                return X, E, gnorm, it, False, "stagnated", history
        assert En >= E, "Armijo step decreased the energy"
        X, E = Xn, En
        history.append(E)
        step = alpha * 2.0
    return X, E, gnorm, it, False, "max_iters", history


def _run_restart(energy, grad, N, d, cfg, r):
    failures = 0
    # a failed restart is rerun on a fresh stream, at most 3x the budget overall
    for attempt in range(3):
        rng = block_rng(cfg.seed, r + attempt * cfg.restarts)
        X0 = _normalize(rng.standard_normal((N, d)))
        try:
            return _ascend(energy, grad, X0, cfg), failures
        except FloatingPointError:
            failures += 1
    return None, failures


def maximize_objective(energy, N: int, d: int, cfg: AscentConfig, grad=None) -> AscentResult:
    """Multistart ascent of any smooth function of an (N, d) configuration on spheres.

    Without ``grad`` a central-difference gradient is used.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if grad is None:
        def grad(X):
            return project_tangent(X, _fd(energy, X))
    job = lambda r: _run_restart(energy, grad, N, d, cfg, r)  # noqa: E731
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            outs = list(ex.map(job, range(cfg.restarts)))
    else:
        outs = [job(r) for r in range(cfg.restarts)]
    runs = [o for o, _ in outs if o is not None]
    failed = sum(f for _, f in outs)
    if not runs:
        raise FloatingPointError("every restart hit a non-finite energy")
    energies = tuple(float(r[1]) for r in runs)
    b = int(np.argmax(energies))
    X, E, gnorm, it, conv, reason, hist = runs[b]
    return AscentResult(PointConfig(X, spherical=True), E, energies, gnorm, it, conv, failed, reason,
                        tuple(hist))


def maximize_discrete(kernel: MultiKernel, N: int, d: int, cfg: AscentConfig = AscentConfig()) -> AscentResult:
    """Multistart ascent of E_K over N-point configurations on S^{d-1}."""
    if kernel.dim != d:
        raise ValueError(f"{kernel.name} lives in R^{kernel.dim}, asked for d={d}")
    if kernel.singular and N < kernel.arity:
        raise ValueError("singular kernels need N >= k")
    return maximize_objective(lambda X: _energy(kernel, X), N, d, cfg,
                              grad=lambda X: gradient(kernel, X))


# ---------------------------------------------------------------------------
# certificates


def local_max_certificate(kernel: MultiKernel, config, trials: int = 500, radius: float = 1e-3,
                          seed: int = 0, slack: float = 1e-10) -> bool:
    """No random tangent perturbation of size <= radius raises E_K by more than ``slack``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    X = _normalize(as_array(config))
    E0 = _energy(kernel, X)
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        Z = project_tangent(X, rng.standard_normal(X.shape))
        Z *= radius * rng.random() / max(np.linalg.norm(Z), 1e-300)
        if _energy(kernel, _normalize(X + Z)) > E0 + slack:
            return False
    return True


@dataclass(frozen=True)
class PsdReport:
    min_normalized_eig: float
    per_tail: tuple[float, ...]
    consistent: bool
    threshold: float

    def to_json(self) -> dict:
        return {"min_normalized_eig": self.min_normalized_eig, "per_tail": list(self.per_tail),
                "consistent": self.consistent, "threshold": self.threshold}


def slice_min_eig(kernel: MultiKernel, X: np.ndarray, tail: np.ndarray) -> float:
    """Smallest eigenvalue of [K(x_i, x_j, tail)] over the nuclear norm."""
    from .kernels import slice_kernel

    M = slice_kernel(kernel, tail).matrix(X)
    M = 0.5 * (M + M.T)
    lam = np.linalg.eigvalsh(M)
    scale = float(np.sum(np.abs(lam)))
    return float(lam[0] / scale) if scale > 0 else 0.0


def psd_empirical(kernel: MultiKernel, n_points: int = 60, n_tails: int = 20, seed: int = 0,
                  threshold: float = -1e-8) -> PsdReport:
    """Look for negative directions in two-input slices at random tails.

    The minimum eigenvalue of each slice matrix is divided by the sum of
    absolute eigenvalues (the trace, when the matrix is PSD).
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    d, k = kernel.dim, kernel.arity
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(max(n_tails, 1) if k > 2 else 1):
        X = _normalize(rng.standard_normal((n_points, d)))
        tail = _normalize(rng.standard_normal((k - 2, d))) if k > 2 else np.zeros((0, d))
        out.append(slice_min_eig(kernel, X, tail))
    worst = min(out)
    return PsdReport(worst, tuple(out), worst >= threshold, threshold)


# ---------------------------------------------------------------------------
# configuration comparison


def procrustes_align(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, float]:
    """Rotate X onto Y (rows matched in order); returns (X R, max row error)."""
    R, _ = orthogonal_procrustes(X, Y)
    XR = X @ R
    return XR, float(np.max(np.linalg.norm(XR - Y, axis=1)))


def gram_distance(X: np.ndarray, Y: np.ndarray, absolute: bool = False) -> float:
    """Max entrywise Gram mismatch minimized over relabelings of Y (N <= 8).

    ``absolute`` compares |Gram| entries, which ignores sign flips of
    individual points as appropriate for V-kernels.
    """
    X, Y = as_array(X), as_array(Y)
    if X.shape != Y.shape:
        raise ValueError("configurations differ in shape")
    GX, GY = X @ X.T, Y @ Y.T
    if absolute:
        GX, GY = np.abs(GX), np.abs(GY)
    N = X.shape[0]
    if N > 8:
        a = np.sort(np.linalg.eigvalsh(GX))
        b = np.sort(np.linalg.eigvalsh(GY))
        return float(np.max(np.abs(a - b)))
    best = math.inf
    for p in itertools.permutations(range(N)):
        p = list(p)
        best = min(best, float(np.max(np.abs(GX - GY[np.ix_(p, p)]))))
    return best
