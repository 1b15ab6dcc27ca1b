"""Discrete energies, exact and Monte-Carlo energy integrals, and reference values.

For a k-input kernel K and a discrete measure with atoms x_i and weights w_i,

    I_K(mu) = sum over ordered k-tuples of w_{i_1} ... w_{i_k} K(x_{i_1}, ..., x_{i_k}).

Symmetric kernels are summed over multisets with multinomial
multiplicities. Singular kernels only see tuples of pairwise-distinct atoms,
renormalized by the total weight of such tuples (for N equal weights this
is N(N-1)...(N-k+1)).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .geomcore import PointConfig, as_array
from .kernels import MultiKernel, kernel_A_pow, kernel_V_pow
from .measures import DiscreteMeasure, Mixture, UniformSphere, block_rng, _draw, make_named_measure

CHUNK = 1 << 15
MIN_MC_SAMPLES = 1000
MIN_BATCHES = 30


@dataclass(frozen=True)
class EnergyEstimate:
    value: float
    std_error: float
    samples_used: int
    exact: bool

    def __post_init__(self):
        if self.exact and self.std_error != 0.0:
            raise ValueError("exact estimates carry no standard error")

    def z_score(self, reference: float) -> float | None:
        if self.exact or self.std_error == 0.0:
            return None
        return (self.value - reference) / self.std_error

    def to_json(self) -> dict:
        return {"value": self.value, "std_error": self.std_error,
                "samples_used": self.samples_used, "exact": self.exact}


# ---------------------------------------------------------------------------
# tuple enumeration


def _multinomial_weights(idx: np.ndarray) -> np.ndarray:
    k = idx.shape[1]
    out = np.empty(idx.shape[0])
    fk = math.factorial(k)
    for r, row in enumerate(idx):
        _, counts = np.unique(row, return_counts=True)
        out[r] = fk / math.prod(math.factorial(c) for c in counts)
    return out


def iter_tuples(N: int, k: int, symmetric: bool, distinct: bool) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Chunks of (index tuples, multiplicities) covering the ordered k-tuples.

    ``distinct`` drops tuples with a repeated index. For ``symmetric``
    kernels each multiset appears once with its number of orderings.
    """
    if symmetric and distinct:
        gen, mult = itertools.combinations(range(N), k), float(math.factorial(k))
    elif symmetric:
        gen, mult = itertools.combinations_with_replacement(range(N), k), None
    elif distinct:
        gen, mult = itertools.permutations(range(N), k), 1.0
    else:
        gen, mult = itertools.product(range(N), repeat=k), 1.0
    while True:
        flat = np.fromiter(itertools.chain.from_iterable(itertools.islice(gen, CHUNK)),
                           dtype=np.int64)
        if flat.size == 0:
            return
        idx = flat.reshape(-1, k)
        m = _multinomial_weights(idx) if mult is None else np.full(idx.shape[0], mult)
        yield idx, m


def _weighted_sum(kernel: MultiKernel, X: np.ndarray, w: np.ndarray, distinct: bool,
                  skip_repeats: bool) -> float:
    N, k = X.shape[0], kernel.arity
    total, norm = 0.0, 0.0
    for idx, mult in iter_tuples(N, k, kernel.symmetric_all, distinct or skip_repeats):
        tw = mult * np.prod(w[idx], axis=1)
        vals = kernel.evaluate(X[idx])
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError(f"{kernel.name} is not finite on some tuple")
        total += float(tw @ vals)
        norm += float(tw.sum())
    if distinct:
        if norm == 0.0:
            raise ValueError("no tuples of distinct atoms carry weight")
        return total / norm
    return total


def _check_dim(kernel: MultiKernel, X: np.ndarray):
    if X.shape[1] != kernel.dim:
        raise ValueError(f"{kernel.name} lives in R^{kernel.dim}, points in R^{X.shape[1]}")


def discrete_energy(kernel: MultiKernel, config, distinct: bool | None = None) -> EnergyEstimate:
    """E_K(omega_N) = N^-k sum over all N^k ordered tuples, exactly.

    ``distinct`` (forced for singular kernels) averages over the
    N(N-1)...(N-k+1) tuples of pairwise-distinct indices instead.
    """
    X = as_array(config)
    _check_dim(kernel, X)
    N, k = X.shape[0], kernel.arity
    distinct = kernel.singular if distinct is None else distinct
    if kernel.singular and not distinct:
        raise ValueError(f"{kernel.name} is singular; use the distinct-tuples mode")
    if distinct and N < k:
        raise ValueError(f"distinct-tuples mode needs N >= k, got N={N}, k={k}")
    w = np.full(N, 1.0 / N)
    val = _weighted_sum(kernel, X, w, distinct, kernel.vanishes_on_repeats)
    count = math.perm(N, k) if distinct else N ** k
    return EnergyEstimate(val, 0.0, count, True)


def energy_integral(kernel: MultiKernel, measure, mc_samples: int = 1_000_000, seed: int = 0,
                    n_batches: int = 50) -> EnergyEstimate:
    """I_K(mu): exact for discrete measures, batched Monte Carlo otherwise.

    Monte Carlo draws ``mc_samples`` i.i.d. k-tuples in ``n_batches`` equal
    batches (at least 30); the standard error comes from the spread of the
    batch means. Batch b uses its own stream, so the result does not depend
    on how batches are scheduled.
    """
    if isinstance(measure, PointConfig):
        measure = DiscreteMeasure.uniform(measure.points)
    if isinstance(measure, DiscreteMeasure):
        _check_dim(kernel, measure.atoms)
        val = _weighted_sum(kernel, measure.atoms, measure.weights, kernel.singular,
                            kernel.vanishes_on_repeats)
        return EnergyEstimate(val, 0.0, measure.n_atoms ** kernel.arity, True)
    if not isinstance(measure, (UniformSphere, Mixture)):
        raise TypeError(f"not a measure: {type(measure).__name__}")
    if measure.dim != kernel.dim:
        raise ValueError(f"{kernel.name} lives in R^{kernel.dim}, measure in R^{measure.dim}")
    if mc_samples < MIN_MC_SAMPLES:
        raise ValueError(f"mc_samples = {mc_samples} < {MIN_MC_SAMPLES}; error bars would be meaningless")
    B = max(MIN_BATCHES, int(n_batches))
    per = -(-int(mc_samples) // B)
    k, d = kernel.arity, kernel.dim
    means = np.empty(B)
    for b in range(B):
        rng = block_rng(seed, b)
        acc, done = 0.0, 0
        while done < per:
            n = min(CHUNK, per - done)
            P = _draw(measure, n * k, rng).reshape(n, k, d)
            acc += float(np.sum(kernel.evaluate(P)))
            done += n
        means[b] = acc / per
    value = float(means.mean())
    se = float(means.std(ddof=1) / math.sqrt(B))
    return EnergyEstimate(value, se, per * B, False)


# ---------------------------------------------------------------------------
# reference values


def closed_form_max(kind: str, d: int, k: int | None = None) -> float:
    """Known optimal values.

    V2: max of I_{V^2}, 2 <= k <= d, equal to k!/d^k C(d,k).
    A2: max of I_{A^2} on the sphere, 2 <= k <= d+1, equal to k/((k-1)! d^(k-1)) C(d,k-1).
    A2_full: max of I_{A^2} over unit-second-moment measures with k = d+1, (d+1)/(d! d^d).
    frame_min: min of the frame energy, 1/d.
    """
    if kind == "V2":
        if k is None or not 2 <= k <= d:
            raise ValueError(f"V2 needs 2 <= k <= d, got k={k}, d={d}")
        return math.factorial(k) / d ** k * math.comb(d, k)
    if kind == "A2":
        if k is None or not 2 <= k <= d + 1:
            raise ValueError(f"A2 needs 2 <= k <= d+1, got k={k}, d={d}")
        return k / (math.factorial(k - 1) * d ** (k - 1)) * math.comb(d, k - 1)
    if kind == "A2_full":
        if k is not None and k != d + 1:
            raise ValueError(f"A2_full is for k = d+1, got k={k}, d={d}")
        if d < 1:
            raise ValueError("d must be >= 1")
        return (d + 1) / (math.factorial(d) * d ** d)
    if kind == "frame_min":
        if k not in (None, 2) or d < 1:
            raise ValueError("frame_min is a two-input quantity with d >= 1")
        return 1.0 / d
    raise ValueError(f"unknown closed form {kind!r}")


def jensen_bound(B_value_at_sigma: float, k: int, N: int, f: Callable[[float], float]) -> float:
    """Upper bound ff/N^k f(N^k I_B(sigma)/ff) on E_{f o B}, ff = N(N-1)...(N-k+1)."""
    if N < k:
        raise ValueError(f"need N >= k, got N={N}, k={k}")
    ff = math.perm(N, k)
    return ff / N ** k * float(f(N ** k * B_value_at_sigma / ff))


def discrete_max_bound(kind: str, k: int, d: int, N: int, s: float) -> tuple[float, bool]:
    """Jensen bound on E_{A^s} or E_{V^s} over N points, 0 < s <= 2, N >= k.

    Returns ``(bound, attained)`` where ``attained`` flags the cases with a
    known extremal configuration: the regular simplex for N = d+1, and an
    orthonormal basis for V-kernels with N = d.
    """
    if not 0 < s <= 2:
        raise ValueError(f"the bound needs 0 < s <= 2, got {s}")
    base = closed_form_max("A2" if kind == "A" else "V2", d, k)
    bound = jensen_bound(base, k, N, power_map(s))
    return bound, N == d + 1 or (kind == "V" and N == d)


def power_map(s: float) -> Callable[[float], float]:
    """t -> t^(s/2), turning a squared volume into its s-th power."""
    return lambda t: t ** (0.5 * s)


# ---------------------------------------------------------------------------
# two-input phase table


def two_input_phase_report(kind: str, s: float, d: int, candidates: Sequence | None = None,
                           mc_samples: int = 400_000, seed: int = 0) -> list[dict]:
    """I_{K^s} for the two-input A or V kernel at each candidate measure and sigma, ranked."""
    if s <= 0:
        raise ValueError("s must be positive")
    kernel = kernel_A_pow(2, d, s) if kind.upper() == "A" else kernel_V_pow(2, d, s)
    if candidates is None:
        candidates = [("pair", make_named_measure("pair", d)), ("onb", make_named_measure("onb", d)),
                      ("simplex", make_named_measure("simplex", d)),
                      ("cross", make_named_measure("cross", d))]
    rows = []
    for c in candidates:
        name, m = c if isinstance(c, tuple) else (getattr(c, "name", type(c).__name__), c)
        est = energy_integral(kernel, m, mc_samples=mc_samples, seed=seed)
        rows.append({"measure": name, **est.to_json()})
    est = energy_integral(kernel, UniformSphere(d), mc_samples=mc_samples, seed=seed)
    rows.append({"measure": "sigma", **est.to_json()})
    rows.sort(key=lambda r: -r["value"])
    return rows
