import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import eval_jacobi

from sphere_energy.kernels import kernel_A_pow, kernel_V_pow, kernel_frame
from sphere_energy.sdp import (IDENTITIES, DegenerateTailError, NotSphericalError,
                               PsdCoefficientMatrix, YIndex, a2_decomposition_blocks, eval_Q,
                               eval_Q_geometric, eval_S, eval_Y, g_mean_zero_check,
                               g_weighted_kernel, identity_check, kernel_Q, kernel_S, q3_poly,
                               trace_kernel, v2_decomposition_blocks)

from conftest import sphere


def gegen_jacobi(d, m, t):
    a = (d - 3) / 2
    return eval_jacobi(m, a, a, t) / eval_jacobi(m, a, a, 1.0)


def y_oracle(m, i, j, d, x, y, z):
    # angular form, away from u^2 = 1 or v^2 = 1
    u, v, t = y @ z, x @ z, x @ y
    r = math.sqrt((1 - u * u) * (1 - v * v))
    q = r ** m * gegen_jacobi(d - 1, m, (t - u * v) / r) if m else 1.0
    h = d + 2 * m
    return gegen_jacobi(h, i, u) * gegen_jacobi(h, j, v) * q


@pytest.mark.parametrize("m,i,j,d", [(0, 0, 0, 3), (0, 2, 1, 4), (1, 1, 1, 3), (1, 0, 2, 5),
                                     (2, 0, 0, 3), (2, 1, 0, 4), (3, 2, 2, 6)])
def test_y_matches_angular_oracle(rng, m, i, j, d):
    idx = YIndex(m, i, j, d)
    for x, y, z in sphere(rng, 30, 3, d):
        assert eval_Y(idx, x, y, z) == pytest.approx(y_oracle(m, i, j, d, x, y, z), abs=1e-12)


def test_q3_poly_at_degenerate_arguments():
    # u = 1 makes the angular form 0/0; the polynomial form is just 0 for m >= 1
    for m in (1, 2, 3):
        assert q3_poly(4, m, 1.0, 0.3, 0.3) == pytest.approx(0.0, abs=1e-15)
    assert q3_poly(4, 0, 1.0, 0.3, 0.3) == 1.0


def test_y_swap_symmetry(rng):
    idx, swapped = YIndex(1, 2, 0, 4), YIndex(1, 0, 2, 4)
    P = sphere(rng, 100, 3, 4)
    assert np.allclose(eval_Y(idx, P), eval_Y(swapped, P[:, [1, 0, 2]]), atol=1e-13)


def test_s_fully_symmetric(rng):
    idx = YIndex(1, 1, 0, 4)
    P = sphere(rng, 100, 3, 4)
    base = eval_S(idx, P)
    for p in itertools.permutations(range(3)):
        assert np.allclose(eval_S(idx, P[:, list(p)]), base, atol=1e-13)
    assert kernel_S(idx).symmetric_all


def test_yindex_validation():
    with pytest.raises(ValueError):
        YIndex(-1, 0, 0, 3)
    with pytest.raises(ValueError):
        YIndex(2, 0, 0, 2)
    YIndex(1, 0, 0, 2)


def test_not_spherical():
    with pytest.raises(NotSphericalError):
        eval_Y(YIndex(0, 0, 0, 3), np.ones(3), np.eye(3)[0], np.eye(3)[1])
    with pytest.raises(NotSphericalError):
        eval_Q(3, 1, 3, [np.ones(3), np.eye(3)[0], np.eye(3)[1]])


def test_psd_block_validation(rng):
    with pytest.raises(ValueError):
        PsdCoefficientMatrix(1, [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        PsdCoefficientMatrix(1, [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        PsdCoefficientMatrix(0, np.eye(2))
    B = PsdCoefficientMatrix.random(0, 3, rng)
    assert B.zero_first_row_col and np.all(B.entries[0] == 0)
    assert PsdCoefficientMatrix.random(2, 4, rng, rank=1).size == 4


@pytest.mark.parametrize("d", [3, 4, 6])
def test_decomposition_blocks(rng, d):
    P = sphere(rng, 500, 3, d)
    A2 = kernel_A_pow(3, d, 2.0).evaluate(P)
    V2 = kernel_V_pow(3, d, 2.0).evaluate(P)
    TA = trace_kernel(a2_decomposition_blocks(d), d).evaluate(P)
    TV = trace_kernel(v2_decomposition_blocks(d), d).evaluate(P)
    assert np.max(np.abs(TA - (3 * (d - 1) / d - 4 * A2))) < 1e-12
    assert np.max(np.abs(TV - ((d - 1) * (d - 2) / d ** 2 - V2))) < 1e-12


def test_trace_kernel_forms(rng):
    blocks = [PsdCoefficientMatrix.random(m, 3, rng) for m in range(3)]
    S = trace_kernel(blocks, 4, "S")
    Y = trace_kernel(blocks, 4, "Y")
    P = sphere(rng, 50, 3, 4)
    perms = [list(p) for p in itertools.permutations(range(3))]
    assert np.allclose(S.evaluate(P), sum(Y.evaluate(P[:, p]) for p in perms) / 6)
    with pytest.raises(ValueError):
        trace_kernel(blocks, 4, "X")
    with pytest.raises(ValueError):
        trace_kernel([PsdCoefficientMatrix(2, [[1.0]])], 2)


def test_q_small_cases(rng):
    P = sphere(rng, 200, 3, 4)
    U = np.einsum("nid,njd->nij", P, P)
    assert np.allclose(eval_Q(3, 1, 4, P), U[:, 0, 1] - U[:, 0, 2] * U[:, 1, 2], atol=1e-14)
    assert np.all(eval_Q(4, 0, 4, sphere(rng, 5, 4, 4)) == 1.0)
    # k = 2 + 1 tail at d = 2: the tail is the full complement, l = 1 only
    with pytest.raises(ValueError):
        kernel_Q(3, 2, 2)
    with pytest.raises(ValueError):
        kernel_Q(5, 1, 3)
    with pytest.raises(ValueError):
        kernel_Q(2, 1, 3)


@settings(max_examples=25)
@given(st.sampled_from([(3, 1, 5), (4, 2, 5), (5, 3, 6), (4, 3, 7)]), st.integers(0, 10_000))
def test_q_geometric_oracle(case, seed):
    k, l, d = case
    rng = np.random.default_rng(seed)
    X = sphere(rng, k, d)
    ref = eval_Q_geometric(k, l, d, X)
    assert eval_Q(k, l, d, list(X)) == pytest.approx(ref, rel=1e-9, abs=1e-13)


def test_q_vanishes_on_dependent_tail(rng):
    d = 5
    for _ in range(20):
        X = sphere(rng, 5, d)
        X[4] = -X[3]
        assert abs(eval_Q(5, 2, d, list(X))) <= 1e-12
        with pytest.raises(DegenerateTailError):
            eval_Q_geometric(5, 2, d, X)


def test_q_symmetric_in_first_two_and_tail(rng):
    P = sphere(rng, 100, 5, 6)
    K = kernel_Q(5, 2, 6)
    base = K.evaluate(P)
    assert np.allclose(K.evaluate(P[:, [1, 0, 2, 3, 4]]), base, atol=1e-13)
    assert np.allclose(K.evaluate(P[:, [0, 1, 4, 2, 3]]), base, atol=1e-13)


def test_g_weighted(rng):
    G = kernel_frame(3) - 1 / 3
    T = g_weighted_kernel(G, 3, 0, 3, seed=1)
    P = sphere(rng, 50, 3, 3)
    g1 = G.evaluate(P[:, [0, 2]])
    g2 = G.evaluate(P[:, [1, 2]])
    assert np.allclose(T.evaluate(P), g1 * g2)
    assert g_mean_zero_check(G, 3, 3)["ok"]
    with pytest.warns(RuntimeWarning):
        g_weighted_kernel(kernel_frame(3), 3, 0, 3)
    with pytest.raises(ValueError):
        g_weighted_kernel(kernel_frame(3), 4, 1, 3)


def test_identity_registry():
    assert {"v2_decomposition", "a2_decomposition", "heron", "sum_of_squares_identity",
            "bordered_vs_edge", "q31_explicit", "q41_explicit", "a_to_v_lift"} <= set(IDENTITIES)
    with pytest.raises(KeyError):
        identity_check("nope", 3)
    with pytest.raises(ValueError):
        identity_check("v2_decomposition", 2)
    for name in IDENTITIES:
        d = max(3, IDENTITIES[name].d_min)
        assert identity_check(name, d, trials=200 if name != "a_to_v_lift" else 5) <= 1e-11


def test_identity_check_detects_wrong_rhs():
    # scaling one side must produce a visible residual
    rec = IDENTITIES["heron"]
    rng = np.random.default_rng(0)
    P = sphere(rng, 100, 3, 3)
    assert np.max(np.abs(rec.left(3, P) - 1.01 * rec.right(3, P))) > 1e-4
