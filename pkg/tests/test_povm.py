import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from dualframes.operators import haar_random_state, make_rng, projector, tensor
from dualframes.povm import (CLASS_IDS, SIX_LABELS, Povm, PovmClassSpec, ProductPovm, born_probabilities,
                             canonical_class_id, class_product_povm, classical_shadows_povm, counts_table,
                             default_raw, description_hash, dilation4_povm, dilation_params_from_isometry,
                             dilation_reference_params, dilation_unitary, euler_unitary,
                             general_pm_simulable_povm, is_informationally_complete, lbcs_povm, mub_povm,
                             n_raw_params, normalize_description, pm_povm, povm_from_description,
                             random_raw, sample_outcomes, simplex_from_logits, spec_from_raw)
from dualframes.products import embed_product, traces_against_products

from .conftest import dm

seeds = st.integers(0, 2 ** 32 - 1)


def assert_valid(povm, tol=1e-10):
    assert np.min(np.linalg.eigvalsh(povm.effects)) >= -tol
    assert np.max(np.abs(povm.effects.sum(axis=0) - np.eye(povm.dim))) < tol


def test_classical_shadows_examples():
    cs = classical_shadows_povm()
    assert cs.labels == SIX_LABELS
    assert np.max(np.abs(cs.effects.sum(axis=0) - np.eye(2))) < 1e-14
    assert_allclose(cs.traces(), 1 / 3, atol=1e-15)
    assert_allclose(born_probabilities(cs, dm("0")), [1 / 6, 1 / 6, 1 / 6, 1 / 6, 1 / 3, 0], atol=1e-15)
    assert_allclose(born_probabilities(cs, np.eye(2) / 2), 1 / 6, atol=1e-15)


def test_lbcs_examples():
    assert_allclose(lbcs_povm(1 / 3, 1 / 3).effects, classical_shadows_povm().effects, atol=1e-15)
    p = lbcs_povm(0.5, 0.25)
    assert_valid(p, 1e-14)
    assert_allclose(p.traces(), [0.5, 0.5, 0.25, 0.25, 0.25, 0.25])
    for bad in [(0.8, 0.2), (0.9, 0.3), (0.0, 0.5), (-0.1, 0.5)]:
        with pytest.raises(ValueError):
            lbcs_povm(*bad)


def _bases(povm):
    """Normalized basis vectors: leading eigenvector of each effect."""
    vecs = []
    for e in povm.effects:
        w, v = np.linalg.eigh(e)
        vecs.append(v[:, -1])
    return vecs


def test_mub_examples(rng):
    assert_allclose(mub_povm(1 / 3, 1 / 3, 0, 0, 0).effects, classical_shadows_povm().effects, atol=1e-15)
    for _ in range(100):
        angles = rng.uniform(-np.pi, np.pi, 3)
        p = mub_povm(0.2, 0.3, *angles)
        assert np.max(np.abs(p.effects.sum(axis=0) - np.eye(2))) < 1e-12
        v = _bases(p)
        for a in range(0, 6, 2):
            for b in range(0, 6, 2):
                if a != b:
                    assert abs(np.vdot(v[a], v[b])) ** 2 == pytest.approx(0.5, abs=1e-12)


def test_general_pm_examples(rng):
    assert_allclose(general_pm_simulable_povm(1 / 3, 1 / 3, np.zeros(9)).effects,
                    classical_shadows_povm().effects, atol=1e-15)
    angles = rng.uniform(-np.pi, np.pi, 3)
    assert_allclose(general_pm_simulable_povm(0.1, 0.6, np.tile(angles, 3)).effects,
                    mub_povm(0.1, 0.6, *angles).effects, atol=1e-14)
    with pytest.raises(ValueError):
        general_pm_simulable_povm(0.1, 0.6, np.zeros(8))


def test_pm_simulable_effects_are_weighted_rank_one(rng):
    for _ in range(50):
        raw = random_raw("general_pm", rng)
        p = spec_from_raw("general_pm", raw).build()
        qx, qy = simplex_from_logits(*raw[:2])
        q = np.array([qx, qx, qy, qy, 1 - qx - qy, 1 - qx - qy])
        for e, qk in zip(p.effects, q):
            ev = np.linalg.eigvalsh(e / qk)
            assert_allclose(ev, [0, 1], atol=1e-10)


def test_dilation_examples(rng):
    for _ in range(100):
        p = dilation4_povm(rng.uniform(-np.pi, np.pi, 8))
        assert np.max(np.abs(p.effects.sum(axis=0) - np.eye(2))) < 1e-10
        assert is_informationally_complete(p) == (True, 4)
    sic = dilation4_povm(dilation_reference_params())
    assert_allclose(sic.traces(), 0.5, atol=1e-10)
    # tetrahedral: pairwise overlaps Tr[M_j M_k] = 1/12 for j != k
    gram = np.real(np.einsum("aij,bji->ab", sic.effects, sic.effects))
    assert_allclose(gram[~np.eye(4, dtype=bool)], 1 / 12, atol=1e-12)


@given(seeds)
def test_dilation_parametrization_roundtrip(seed):
    """Every rank-one 4-outcome POVM is reached: invert a random isometry."""
    rng = make_rng(seed)
    g = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    a, _ = np.linalg.qr(g)
    target = np.einsum("ki,kj->kij", a.conj(), a)
    got = dilation4_povm(dilation_params_from_isometry(a)).effects
    assert_allclose(got, target, atol=1e-10)


def test_dilation_unitary_is_unitary(rng):
    w = dilation_unitary(rng.normal(size=8))
    assert_allclose(w.conj().T @ w, np.eye(4), atol=1e-13)


def test_euler_unitary():
    assert_allclose(euler_unitary(0, 0, 0), np.eye(2))
    assert_allclose(euler_unitary(np.pi, 0, np.pi), [[0, 1], [1, 0]], atol=1e-15)


@pytest.mark.parametrize("cid", CLASS_IDS)
def test_class_constructors_valid_for_random_params(cid):
    rng = make_rng(99, CLASS_IDS.index(cid))
    for _ in range(1000):
        raw = random_raw(cid, rng) * rng.uniform(0.1, 4)
        p = spec_from_raw(cid, raw).build()
        assert_valid(p)
        assert p.n == (4 if cid == "dilation4" else 6)


def test_class_specs():
    assert [n_raw_params(c) for c in CLASS_IDS] == [0, 2, 5, 11, 8]
    assert canonical_class_id("MUB") == "mub"
    assert canonical_class_id("General-PM-Simulable") == "general_pm"
    with pytest.raises(ValueError):
        canonical_class_id("tomography")
    with pytest.raises(ValueError):
        PovmClassSpec("lbcs", (0.3,))
    for cid in CLASS_IDS:
        assert spec_from_raw(cid, default_raw(cid)).build().n in (4, 6)
    assert_allclose(spec_from_raw("mub", np.zeros(5)).build().effects, classical_shadows_povm().effects)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_simplex_map_open(a, b):
    qx, qy = simplex_from_logits(a, b)
    assert qx > 0 and qy > 0 and qx + qy < 1 + 1e-15


def test_product_povm_examples():
    cs = classical_shadows_povm()
    pp = ProductPovm((cs, cs))
    assert pp.n == 36 and pp.outcome_shape == (6, 6)
    zp = SIX_LABELS.index("Z+")
    assert_allclose(pp.materialize_effect((zp, zp)), np.diag([1, 0, 0, 0]) / 9)
    assert np.max(np.abs(pp.materialize().effects.sum(axis=0) - np.eye(4))) < 1e-12
    with pytest.raises(ValueError):
        ProductPovm(())


def test_product_matches_materialized(rng):
    for n in (1, 2, 3):
        factors = tuple(spec_from_raw("general_pm", random_raw("general_pm", rng)).build() for _ in range(n))
        pp = ProductPovm(factors)
        glob = pp.materialize()
        k = tuple(rng.integers(0, 6, n))
        assert_allclose(glob.effects[np.ravel_multi_index(k, pp.outcome_shape)], pp.materialize_effect(k))
        rho = haar_random_state(2 ** n, rng)
        assert np.max(np.abs(born_probabilities(pp, rho).ravel() - born_probabilities(glob, rho))) < 1e-12
        assert born_probabilities(pp, rho).sum() == pytest.approx(1, abs=1e-12)
        prod_state = [haar_random_state(2, rng) for _ in range(n)]
        assert_allclose(born_probabilities(pp, prod_state).ravel(),
                        born_probabilities(glob, tensor(prod_state)), atol=1e-12)


def test_group_povm_orders_qubits(rng):
    f = [spec_from_raw("mub", random_raw("mub", rng)).build() for _ in range(3)]
    pp = ProductPovm(tuple(f))
    g = pp.group_povm((2, 0))
    assert_allclose(g.effects[1 * 6 + 4], np.kron(f[2].effects[1], f[0].effects[4]))


def test_traces_and_embedding(rng):
    cs = classical_shadows_povm()
    pp = ProductPovm((cs, cs, cs))
    op = haar_random_state(8, rng)
    groups = ((0, 2), (1,))
    tables = (pp.group_povm((0, 2)).effects, cs.effects)
    t = traces_against_products(op, groups, tables, pp.outcome_shape)
    direct = np.einsum("ij,kji->k", op, pp.materialize().effects).reshape(6, 6, 6)
    assert_allclose(t, direct, atol=1e-14)
    a, b = rng.normal(size=(2, 4, 4)), rng.normal(size=(2, 2, 2))
    emb = embed_product([a[0], b[0]], ((0, 2), (1,)), 3)
    # qubits 0 and 2 carry a, qubit 1 carries b
    x = rng.normal(size=(2, 2, 2))
    y = np.einsum("acAC,bB,ABC->abc", a[0].reshape(2, 2, 2, 2), b[0], x)
    assert_allclose(emb @ x.reshape(-1), y.reshape(-1), atol=1e-12)


def test_sampling_examples():
    cs = classical_shadows_povm()
    rec = sample_outcomes(cs, dm("0"), 10 ** 6, make_rng(1))
    counts = counts_table(rec)
    assert counts[SIX_LABELS.index("Z-")] == 0
    f = counts[SIX_LABELS.index("Z+")] / 1e6
    assert abs(f - 1 / 3) < 3 * np.sqrt((1 / 3) * (2 / 3) / 1e6)
    again = sample_outcomes(cs, dm("0"), 100, make_rng(1))
    assert_array_equal(again.outcomes, sample_outcomes(cs, dm("0"), 100, make_rng(1)).outcomes)


@pytest.mark.parametrize("cid", CLASS_IDS)
def test_sampling_total_variation(cid):
    rng = make_rng(5, CLASS_IDS.index(cid))
    p = spec_from_raw(cid, random_raw(cid, rng)).build()
    rho = haar_random_state(2, rng)
    s = 10 ** 5
    rec = sample_outcomes(p, rho, s, rng)
    f = counts_table(rec) / s
    tv = 0.5 * np.abs(f - born_probabilities(p, rho)).sum()
    assert tv < 5 * np.sqrt(p.n / s)


def test_product_state_sampling_matches_global(rng):
    cs = classical_shadows_povm()
    pp = ProductPovm((cs, cs))
    parts = [dm("0"), dm("+")]
    s = 200000
    f1 = counts_table(sample_outcomes(pp, parts, s, rng)) / s
    f2 = counts_table(sample_outcomes(pp, tensor(parts), s, rng)) / s
    p = born_probabilities(pp, parts)
    assert 0.5 * np.abs(f1 - p).sum() < 5 * np.sqrt(36 / s)
    assert 0.5 * np.abs(f2 - p).sum() < 5 * np.sqrt(36 / s)


def test_informational_completeness():
    cs = classical_shadows_povm()
    assert is_informationally_complete(cs) == (True, 4)
    pz = pm_povm(np.eye(2))
    assert is_informationally_complete(pz) == (False, 2)
    assert is_informationally_complete(ProductPovm((cs, cs))) == (True, 16)
    assert is_informationally_complete(ProductPovm((cs, cs)).materialize()) == (True, 16)


def test_invalid_povms():
    with pytest.raises(ValueError):
        Povm(np.array([np.eye(2), -np.eye(2) * 0]) * 0.5)
    with pytest.raises(ValueError):
        Povm(np.array([np.diag([1.5, 0.5]), np.diag([-0.5, 0.5])]))
    with pytest.raises(ValueError):
        Povm(np.eye(2))


def test_descriptions_and_hash():
    desc = {"class": "lbcs", "params": [0.5, 0.25], "n_qubits": 2}
    norm = normalize_description(desc)
    assert len(norm["product"]) == 2
    same = {"product": [{"class": "LBCS", "params": [0.5, 0.25]}, {"params": [0.5, 0.25], "class": "lbcs"}]}
    assert description_hash(desc) == description_hash(same)
    assert description_hash(desc) != description_hash({"class": "lbcs", "params": [0.5, 0.26], "n_qubits": 2})
    pp = povm_from_description(desc)
    assert isinstance(pp, ProductPovm) and pp.outcome_shape == (6, 6)
    assert isinstance(povm_from_description({"class": "cs"}), Povm)
    json.dumps(norm)
    with pytest.raises(ValueError):
        normalize_description({"params": [1]})


def test_class_product_povm(rng):
    raw = rng.normal(size=4)
    pp = class_product_povm("lbcs", raw, 2)
    assert_allclose(pp.factors[1].effects, spec_from_raw("lbcs", raw[2:]).build().effects)
    with pytest.raises(ValueError):
        class_product_povm("lbcs", raw, 3)


def test_projector_normalization():
    v = np.array([1, 1j]) / np.sqrt(2)
    assert_allclose(projector(v) @ projector(v), projector(v), atol=1e-15)
