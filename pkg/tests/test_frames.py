import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from dualframes.errors import ICFailureError
from dualframes.estimation import exact_ssv
from dualframes.frames import (DualFrame, average_optimal_duals, canonical_duals, duality_residual, frame_bounds,
                               frame_superoperator, is_dual_frame, optimal_duals, optimal_weights,
                               product_weighted_duals, svd_basis, svd_duals, svd_free_params, weighted_duals)
from dualframes.operators import I2, Z, haar_random_state, hermitian_basis, make_rng, random_observable, vectorize
from dualframes.povm import (CLASS_IDS, ProductPovm, classical_shadows_povm, dilation4_povm, lbcs_povm, pm_povm,
                             random_raw, spec_from_raw)

from .conftest import dm

seeds = st.integers(0, 2 ** 32 - 1)


def random_class_povm(cid, rng):
    return spec_from_raw(cid, random_raw(cid, rng)).build()


def brute_frame_matrix(povm, w):
    return sum(wk * np.outer(vectorize(m), vectorize(m).conj()) for wk, m in zip(w, povm.effects))


def test_classical_shadows_frame_superoperator():
    cs = classical_shadows_povm()
    f = frame_superoperator(cs)
    assert_allclose(f.eigenvalues(), [1 / 9, 1 / 9, 1 / 9, 1 / 3], atol=1e-15)
    assert_allclose(f.apply(I2), I2 / 3, atol=1e-15)
    assert_allclose(f.apply(Z), Z / 9, atol=1e-15)
    assert_allclose(f.matrix, brute_frame_matrix(cs, np.ones(6)), atol=1e-15)
    assert_allclose(frame_superoperator(cs, 2.5 * np.ones(6)).matrix, 2.5 * f.matrix, atol=1e-15)


def test_frame_superoperator_properties(rng):
    p = random_class_povm("general_pm", rng)
    w = rng.uniform(0.1, 3, p.n)
    f = frame_superoperator(p, w)
    assert np.max(np.abs(f.matrix - f.matrix.conj().T)) < 1e-12
    assert f.eigenvalues()[0] > 0
    assert_allclose(f.matrix, brute_frame_matrix(p, w), atol=1e-14)
    d = dilation4_povm(rng.normal(size=8))
    assert np.linalg.matrix_rank(frame_superoperator(d).matrix) == 4


def test_canonical_examples():
    cs = classical_shadows_povm()
    d = canonical_duals(cs)
    assert_allclose(d.dual(4), 3 * dm("0") - I2, atol=1e-14)
    with pytest.raises(ICFailureError):
        canonical_duals(pm_povm(np.eye(2)))


def test_weighted_duals_examples(rng):
    p = random_class_povm("mub", rng)
    w = rng.uniform(0.2, 5, 6)
    assert_allclose(weighted_duals(p, np.ones(6)).duals, canonical_duals(p).duals, atol=1e-10)
    assert_allclose(weighted_duals(p, w).duals, weighted_duals(p, 7.3 * w).duals, atol=1e-9)
    assert_allclose(weighted_duals(p, w).weights.sum(), 6)
    with pytest.raises(ValueError):
        weighted_duals(p, np.ones(5))


def test_negative_weights_are_checked(rng):
    p = classical_shadows_povm()
    w = np.ones(6)
    w[0] = 0.2
    w[1] = -0.1
    d = weighted_duals(p, w)
    assert is_dual_frame(p, d)
    # removing the X basis leaves F without an X direction
    with pytest.raises(ICFailureError):
        weighted_duals(p, [0, 0, 1, 1, 1, 1.0])


def test_minimal_ic_dual_is_unique(rng):
    d = dilation4_povm(rng.normal(size=8))
    can = canonical_duals(d).duals
    rho = haar_random_state(2, rng)
    for other in (average_optimal_duals(d), optimal_duals(d, rho), weighted_duals(d, rng.uniform(0.1, 9, 4))):
        assert np.max(np.abs(other.duals - can)) < 1e-9
    assert svd_basis(d).n_free == 0
    assert np.max(np.abs(svd_duals(d).duals - can)) < 1e-9


def test_optimal_duals_examples(rng):
    p = random_class_povm("general_pm", rng)
    assert_allclose(optimal_duals(p, np.eye(2) / 2).duals, average_optimal_duals(p).duals, atol=1e-10)
    w = optimal_weights(classical_shadows_povm(), dm("0"), floor=1e-12)
    assert w[5] == pytest.approx(1e12)
    assert np.all(np.isfinite(optimal_duals(classical_shadows_povm(), dm("0")).duals))
    with pytest.raises(ValueError):
        optimal_weights(p, dm("0"), floor=0)


def test_optimal_beats_canonical_on_random_instances():
    rng = make_rng(17)
    for _ in range(100):
        p = random_class_povm("general_pm", rng)
        rho, o = haar_random_state(2, rng), random_observable(2, rng)
        assert exact_ssv(p, optimal_duals(p, rho), o, rho) <= exact_ssv(p, canonical_duals(p), o, rho) + 1e-9


def test_average_optimal_examples():
    cs = classical_shadows_povm()
    assert_allclose(average_optimal_duals(cs).duals, canonical_duals(cs).duals, atol=1e-12)
    lb = lbcs_povm(0.5, 0.25)
    diff = np.max(np.abs(average_optimal_duals(lb).duals - canonical_duals(lb).duals))
    assert diff > 1e-6
    assert is_dual_frame(lb, average_optimal_duals(lb))


@pytest.mark.parametrize("cid", CLASS_IDS)
def test_duality_all_constructors(cid):
    rng = make_rng(3, CLASS_IDS.index(cid))
    p = random_class_povm(cid, rng)
    rho = haar_random_state(2, rng)
    frames = [canonical_duals(p), average_optimal_duals(p), optimal_duals(p, rho)]
    frames += [weighted_duals(p, rng.uniform(0.05, 5, p.n)) for _ in range(5)]
    svd = svd_basis(p)
    frames += [svd_duals(p, rng.normal(size=(4, svd.n_free)), svd) for _ in range(5)]
    for d in frames:
        assert duality_residual(p, d) < 1e-9
        for _ in range(20):
            o = random_observable(2, rng)
            omega = np.einsum("ij,kji->k", o, d.duals).real
            assert np.max(np.abs(np.einsum("k,kij->ij", omega, p.effects) - o)) < 1e-8


def test_svd_examples(rng):
    p = random_class_povm("general_pm", rng)
    svd = svd_basis(p)
    assert svd.n_free == 2
    assert np.max(np.abs(svd_duals(p, None, svd).duals - canonical_duals(p).duals)) < 1e-10
    for _ in range(100):
        assert is_dual_frame(p, svd_duals(p, rng.normal(size=(4, 2)), svd))
    target = weighted_duals(p, rng.uniform(0.1, 5, 6))
    free = svd_free_params(p, target, svd)
    assert np.max(np.abs(svd_duals(p, free, svd).duals - target.duals)) < 1e-8


def test_svd_sign_convention_reproducible(rng):
    p = random_class_povm("mub", rng)
    a, b = svd_basis(p), svd_basis(p)
    assert np.array_equal(a.u, b.u)
    for i in range(a.u.shape[1]):
        assert a.u[np.argmax(np.abs(a.u[:, i])), i] > 0


def test_frame_bounds_examples():
    lo, hi = frame_bounds(classical_shadows_povm())
    assert abs(lo - 1 / 9) < 1e-12 and abs(hi - 1 / 3) < 1e-12
    lo, hi = frame_bounds(hermitian_basis(2))
    assert_allclose([lo, hi], [1, 1], atol=1e-12)
    with pytest.raises(ICFailureError):
        frame_bounds(pm_povm(np.eye(2)))
    cs = classical_shadows_povm()
    lo2, hi2 = frame_bounds(ProductPovm((cs, cs)))
    ev = np.linalg.eigvalsh(frame_superoperator(ProductPovm((cs, cs)).materialize()).matrix)
    assert_allclose([lo2, hi2], [ev[0], ev[-1]], atol=1e-12)


@given(seeds)
def test_frame_bound_sandwich(seed):
    rng = make_rng(seed)
    p = random_class_povm("general_pm", rng)
    lo, hi = frame_bounds(p)
    assert lo <= hi
    o = random_observable(2, rng)
    s = np.sum(np.einsum("ij,kji->k", o, p.effects).real ** 2)
    norm2 = np.real(np.trace(o @ o))
    assert lo * norm2 <= s * (1 + 1e-12) and s <= hi * norm2 * (1 + 1e-12)


def test_product_weighted_duals_examples(rng):
    cs = classical_shadows_povm()
    pp = ProductPovm((cs, random_class_povm("mub", rng)))
    loc = product_weighted_duals(pp, [(0,), (1,)], [np.ones(6), np.ones(6)])
    glob = canonical_duals(pp.materialize())
    assert np.max(np.abs(loc.materialize() - glob.duals)) < 1e-10
    w = rng.uniform(0.1, 4, 36)
    one = product_weighted_duals(pp, [(0, 1)], [w])
    assert np.max(np.abs(one.materialize() - weighted_duals(pp.materialize(), w).duals)) < 1e-10
    p4 = ProductPovm((cs,) * 4)
    four = product_weighted_duals(p4, [(0, 1), (2, 3)], [np.ones(36), np.ones(36)])
    assert [t.shape for t in four.group_duals] == [(36, 4, 4), (36, 4, 4)]
    with pytest.raises(ValueError):
        product_weighted_duals(pp, [(0,)], [np.ones(6)])


@given(seeds)
def test_product_vs_global_oracle(seed):
    rng = make_rng(seed)
    pp = ProductPovm(tuple(random_class_povm("lbcs", rng) for _ in range(3)))
    w02, w1 = rng.uniform(0.1, 4, 36), rng.uniform(0.1, 4, 6)
    prod = product_weighted_duals(pp, [(0, 2), (1,)], [w02, w1])
    full = np.einsum("ac,b->abc", w02.reshape(6, 6), w1).ravel()
    glob = weighted_duals(pp.materialize(), full)
    scale = max(1.0, np.max(np.abs(glob.duals)))
    assert np.max(np.abs(prod.materialize() - glob.duals)) < 1e-9 * scale
    assert duality_residual(pp, prod) < 1e-9


def test_dual_frame_json_and_validation(rng):
    d = canonical_duals(classical_shadows_povm())
    obj = d.to_json()
    assert obj["provenance"] == "canonical"
    back = np.array([np.array(m["real"]) + 1j * np.array(m["imag"]) for m in obj["group_duals"][0]])
    assert_allclose(back, d.duals)
    with pytest.raises(ValueError):
        DualFrame("magic", (6,), duals=d.duals)
    with pytest.raises(ValueError):
        DualFrame("canonical", (6,))
