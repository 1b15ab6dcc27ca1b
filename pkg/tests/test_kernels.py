import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sphere_energy.energy import energy_integral
from sphere_energy.kernels import (KernelMismatchError, MultiKernel, add_constant, constant_kernel,
                                   kernel_A_pow, kernel_frame, kernel_log, kernel_product,
                                   kernel_sum, kernel_V_pow, lift_kernel, scale, slice_kernel,
                                   symmetrize)
from sphere_energy.measures import DiscreteMeasure, regular_simplex
from sphere_energy.sdp import kernel_Q

from conftest import sphere


def triple_with(u, v, t):
    return np.linalg.cholesky(np.array([[1, t, v], [t, 1, u], [v, u, 1.0]]))


def random_measure(rng, n, d):
    return DiscreteMeasure(sphere(rng, n, d), rng.dirichlet(np.ones(n)))


def inner_xy(d):
    return MultiKernel(3, d, lambda P: np.einsum("nd,nd->n", P[:, 0], P[:, 1]), "<x,y>")


def test_v_pow_examples(rng):
    assert kernel_V_pow(3, 3, 2.0)(*np.eye(3)) == pytest.approx(1.0)
    assert kernel_V_pow(3, 3, 2.0)(*triple_with(0.5, 0.5, 0.5)) == pytest.approx(0.5)
    x = sphere(rng, 4)
    assert kernel_V_pow(3, 4, 3.0)(x, -x, sphere(rng, 4)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        kernel_V_pow(4, 3, 2.0)
    with pytest.raises(ValueError):
        kernel_V_pow(2, 3, -1.0)


def test_a_pow_examples():
    x = np.array([0.0, 0.0, 1.0])
    assert kernel_A_pow(2, 3, 2.0)(x, -x) == pytest.approx(4.0)
    assert kernel_A_pow(3, 2, 2.0)(*regular_simplex(2)) == pytest.approx(27 / 16, abs=1e-14)
    assert kernel_A_pow(3, 3, 2.0)(*triple_with(0.0, 0.0, 0.0)) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        kernel_A_pow(5, 3, 2.0)


def test_frame_examples(rng):
    K = kernel_frame(3)
    x, y = np.eye(3)[:2]
    assert K(x, x) == 1.0 and K(x, y) == 0.0 and K(x, -x) == 1.0


@pytest.mark.parametrize("make,k,d", [(kernel_V_pow, 3, 4), (kernel_A_pow, 3, 3), (kernel_A_pow, 4, 3)])
def test_volume_kernels_symmetric(rng, make, k, d):
    K = make(k, d, 1.3)
    P = sphere(rng, 1000, k, d)
    base = K.evaluate(P)
    for p in itertools.permutations(range(k)):
        assert np.allclose(K.evaluate(P[:, list(p)]), base, atol=1e-12)


def test_two_input_forms(rng):
    P = sphere(rng, 500, 2, 4)
    dist = np.linalg.norm(P[:, 0] - P[:, 1], axis=1)
    for s in (0.5, 1.0, 3.0):
        assert np.allclose(kernel_A_pow(2, 4, s).evaluate(P), dist ** s, atol=1e-12)
    t = np.einsum("nd,nd->n", P[:, 0], P[:, 1])
    assert np.allclose(kernel_V_pow(2, 4, 2.0).evaluate(P), 1 - t ** 2, atol=1e-12)


def test_v_pow_dominated_by_v2(rng):
    P = sphere(rng, 10_000, 3, 4)
    v2 = kernel_V_pow(3, 4, 2.0).evaluate(P)
    for s in (2.5, 3.0, 5.0):
        vs = kernel_V_pow(3, 4, s).evaluate(P)
        assert np.all(vs <= v2 + 1e-15)
    # equality only where V is 0 or 1
    E = np.stack([np.eye(4)[:3], np.stack([np.eye(4)[0]] * 2 + [np.eye(4)[1]])])
    assert np.allclose(kernel_V_pow(3, 4, 3.0).evaluate(E), kernel_V_pow(3, 4, 2.0).evaluate(E))


def test_heron(rng):
    P = sphere(rng, 2000, 3, 5)
    u = np.einsum("nd,nd->n", P[:, 1], P[:, 2])
    v = np.einsum("nd,nd->n", P[:, 0], P[:, 2])
    t = np.einsum("nd,nd->n", P[:, 0], P[:, 1])
    heron = 0.75 - (u + v + t) / 2 + (u * v + v * t + t * u) / 2 - (u * u + v * v + t * t) / 4
    assert np.max(np.abs(kernel_A_pow(3, 5, 2.0).evaluate(P) - heron)) <= 1e-11


def test_singular_kernels():
    K = kernel_A_pow(2, 2, -1.0, singular=True)
    x = np.array([1.0, 0.0])
    assert K.singular and math.isinf(K(x, x))
    assert K(x, -x) == pytest.approx(0.5)
    L = kernel_log("A", 2, 2)
    assert L(x, -x) == pytest.approx(-math.log(2.0))
    assert math.isinf(L(x, x))


@pytest.mark.parametrize("K", [kernel_A_pow(3, 3, 2.0), kernel_A_pow(3, 3, 1.0), kernel_V_pow(3, 4, 1.5),
                               kernel_frame(3), kernel_log("V", 2, 3), kernel_A_pow(2, 3, -1.0, singular=True)],
                         ids=lambda K: K.name)
def test_tuple_grad_finite_differences(rng, K):
    P = sphere(rng, 20, K.arity, K.dim)
    g = K.tuple_grad(P)
    h = 1e-6
    fd = np.zeros_like(P)
    for i, j in itertools.product(range(K.arity), range(K.dim)):
        Pp, Pm = P.copy(), P.copy()
        Pp[:, i, j] += h
        Pm[:, i, j] -= h
        fd[:, i, j] = (K.evaluate(Pp) - K.evaluate(Pm)) / (2 * h)
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-7)


def test_lift_identity_and_tail():
    F = kernel_frame(3)
    assert lift_kernel(F, 2, [()]) is not F
    P = sphere(np.random.default_rng(1), 50, 2, 3)
    assert np.allclose(lift_kernel(F, 2, [()]).evaluate(P), F.evaluate(P))
    L = lift_kernel(F, 3)
    P3 = sphere(np.random.default_rng(2), 50, 3, 3)
    assert np.allclose(L.evaluate(P3), F.evaluate(P3[:, :2]))
    with pytest.raises(ValueError):
        lift_kernel(F, 3, [])
    with pytest.raises(ValueError):
        lift_kernel(F, 4, [(3, 3)])


def test_lift_preserves_energy(rng):
    Q = kernel_Q(3, 1, 3)
    L = lift_kernel(Q, 4, [(3, 4), (4, 3)])
    for _ in range(5):
        mu = random_measure(rng, 4, 3)
        assert energy_integral(L, mu).value == pytest.approx(energy_integral(Q, mu).value, abs=1e-12)


def test_symmetrize_matches_enumeration(rng):
    S = symmetrize(inner_xy(4))
    P = sphere(rng, 100, 3, 4)
    g = np.einsum("nid,njd->nij", P, P)
    ref = (g[:, 0, 1] + g[:, 0, 2] + g[:, 1, 2]) / 3
    assert np.allclose(S.evaluate(P), ref, atol=1e-14)
    assert S.symmetric_all


def test_symmetrize_keeps_symmetric_kernel_and_energy(rng):
    K = kernel_A_pow(3, 3, 2.0)
    P = sphere(rng, 200, 3, 3)
    assert np.allclose(symmetrize(K).evaluate(P), K.evaluate(P), atol=1e-12)
    B = inner_xy(3)
    mu = random_measure(rng, 5, 3)
    assert energy_integral(symmetrize(B), mu).value == pytest.approx(energy_integral(B, mu).value, abs=1e-12)


def test_symmetrize_warns_for_large_arity():
    K = MultiKernel(9, 2, lambda P: np.zeros(P.shape[0]))
    with pytest.warns(RuntimeWarning):
        symmetrize(K)


def test_algebra(rng):
    F = kernel_frame(3)
    P = sphere(rng, 100, 2, 3)
    assert np.allclose((F + 0).evaluate(P), F.evaluate(P))
    assert np.allclose((F + F).evaluate(P), (2 * F).evaluate(P))
    mu = random_measure(rng, 6, 3)
    assert energy_integral(-F, mu).value == pytest.approx(-energy_integral(F, mu).value, abs=1e-15)
    assert np.allclose((F * F).evaluate(P), F.evaluate(P) ** 2)
    assert np.allclose((F - 1.0).evaluate(P), F.evaluate(P) - 1)
    with pytest.raises(KernelMismatchError):
        kernel_sum(F, kernel_frame(4))
    with pytest.raises(KernelMismatchError):
        F + kernel_A_pow(3, 3, 2.0)


def test_flags_intersect():
    A = kernel_A_pow(3, 3, 2.0)
    S = symmetrize(inner_xy(3))
    Y = inner_xy(3)
    assert (A + S).symmetric_all
    assert not (A + Y).symmetric_all
    assert not add_constant(A, 1.0).vanishes_on_repeats
    assert kernel_product(A, Y).vanishes_on_repeats
    assert (A + kernel_log("A", 3, 3)).singular


def test_algebra_gradients(rng):
    A = kernel_A_pow(3, 3, 2.0)
    V = kernel_V_pow(3, 3, 2.0)
    P = sphere(rng, 10, 3, 3)
    assert np.allclose((A + V).tuple_grad(P), A.tuple_grad(P) + V.tuple_grad(P))
    prod = (A * V).tuple_grad(P)
    ref = A.evaluate(P)[:, None, None] * V.tuple_grad(P) + V.evaluate(P)[:, None, None] * A.tuple_grad(P)
    assert np.allclose(prod, ref)
    assert np.allclose((3 * A).tuple_grad(P), 3 * A.tuple_grad(P))
    assert np.all(constant_kernel(3, 3, 2.0).tuple_grad(P) == 0)


def test_slices(rng):
    F = kernel_frame(3)
    S = slice_kernel(F)
    x, y = sphere(rng, 2, 3)
    assert S(x, y) == pytest.approx(F(x, y))
    z = np.array([0.0, 0.0, 1.0])
    assert slice_kernel(kernel_A_pow(3, 3, 2.0), [z])(z, z) == pytest.approx(0.0, abs=1e-15)
    Qs = slice_kernel(kernel_Q(3, 1, 3), [z])
    X = sphere(rng, 20, 3)
    M = Qs.matrix(X)
    ref = X @ X.T - np.outer(X @ z, X @ z)
    assert np.allclose(M, ref, atol=1e-14)
    with pytest.raises(KernelMismatchError):
        slice_kernel(kernel_A_pow(3, 3, 2.0), [])


@given(st.floats(0.1, 4.0), st.integers(0, 10_000))
def test_rotation_invariance(s, seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    P = sphere(rng, 5, 3, 4)
    for K in (kernel_A_pow(3, 4, s), kernel_V_pow(3, 4, s)):
        assert np.allclose(K.evaluate(P @ q.T), K.evaluate(P), atol=1e-12)


def test_arity_check():
    with pytest.raises(KernelMismatchError):
        kernel_frame(3).evaluate(np.zeros((1, 3, 3)))
