import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdefinetti.channels import (
    ChoiMatrix,
    KrausChannel,
    Superoperator,
    apply_channel,
    apply_superop,
    blocks_permutation,
    channel_from_choi,
    channel_from_json,
    channels_agree,
    choi_from_channel,
    choi_from_superop,
    collapse_operations,
    depolarizing_channel,
    dilation_action,
    fully_depolarizing_channel,
    identity_channel,
    interleave_permutation,
    matrix_unit,
    max_entangled_state,
    mixture_superop,
    op_extendibility_check,
    op_symmetry_check,
    random_channel,
    remix_kraus,
    s_coefficients,
    scaled_channel,
    stinespring_dilate,
    superop_from_channels,
    superop_from_map,
    tp_filter_demo,
    unitary_channel,
    unvec,
    vec,
)
from qdefinetti.errors import DimensionError, InvalidStateError, IsometryError, NotCPError, ResourceLimitError
from qdefinetti.linalg import kron, partial_trace, permute_systems
from qdefinetti.states import PAULIS, basis_state, bloch_to_rho, haar_unitary, rho_to_bloch, sample_density


def _broken(rng, d=2):
    ch = random_channel(d, rng)
    return KrausChannel(ch.kraus * (1 + rng.uniform(0.05, 0.3)), require_tp=False)


def test_identity_channel_action(rng):
    rho = sample_density(3, rng)
    np.testing.assert_allclose(apply_channel(identity_channel(3), rho), rho)


def test_collapse_operations_postselect(rng):
    rho = sample_density(3, rng)
    for a, op in enumerate(collapse_operations(3)):
        out = apply_channel(op, rho)
        np.testing.assert_allclose(out / np.trace(out), basis_state(a, 3), atol=1e-15)


def test_depolarizing_shrinks_bloch():
    s = np.array([0.3, -0.5, 0.6])
    out = apply_channel(depolarizing_channel(0.3), bloch_to_rho(s))
    np.testing.assert_allclose(rho_to_bloch(out), 0.7 * s, atol=1e-14)


def test_apply_channel_dim_mismatch():
    with pytest.raises(DimensionError):
        apply_channel(identity_channel(2), np.eye(3) / 3)


def test_kraus_requires_tp():
    with pytest.raises(InvalidStateError):
        KrausChannel(np.array([2 * np.eye(2)]))


def test_choi_examples():
    np.testing.assert_allclose(choi_from_channel(identity_channel(2)).matrix, max_entangled_state(2), atol=1e-15)
    np.testing.assert_allclose(choi_from_channel(fully_depolarizing_channel(2)).matrix, np.eye(4) / 4, atol=1e-15)


def test_choi_layout_is_reference_first(rng):
    ch = random_channel(2, rng)
    d = 2
    j = choi_from_channel(ch).matrix
    # J = sum_{jk} |j><k| (x) Phi(|j><k|) / d
    oracle = sum(kron(matrix_unit(a, b, d), apply_channel(ch, matrix_unit(a, b, d))) for a in range(d) for b in range(d)) / d
    np.testing.assert_allclose(j, oracle, atol=1e-14)


def test_random_channel_marginal(rng):
    for _ in range(10):
        j = choi_from_channel(random_channel(3, rng))
        np.testing.assert_allclose(j.reference_marginal(), np.eye(3) / 3, atol=1e-10)
        assert j.min_eigenvalue() >= -1e-12


def test_choi_roundtrip_examples():
    ident = channel_from_choi(ChoiMatrix(max_entangled_state(2)))
    assert ident.rank == 1
    np.testing.assert_allclose(ident.kraus[0] / ident.kraus[0][0, 0], np.eye(2), atol=1e-12)
    flat = channel_from_choi(ChoiMatrix(np.eye(4) / 4))
    for p in PAULIS:
        np.testing.assert_allclose(apply_channel(flat, p), np.zeros((2, 2)), atol=1e-12)
    np.testing.assert_allclose(apply_channel(flat, np.eye(2) / 2), np.eye(2) / 2, atol=1e-12)


def test_choi_roundtrip_random(rng):
    for _ in range(50):
        ch = random_channel(2, rng, kraus_rank=int(rng.integers(1, 5)))
        assert channels_agree(ch, channel_from_choi(choi_from_channel(ch)), tol=1e-9)


def test_negative_choi_is_not_cp():
    p = max_entangled_state(2)
    with pytest.raises(NotCPError):
        channel_from_choi(ChoiMatrix(1.15 * p - 0.05 * (np.eye(4) - p)))


def test_tp_iff_marginal(rng):
    for _ in range(100):
        ch = random_channel(2, rng)
        assert ch.is_trace_preserving() and choi_from_channel(ch).is_trace_preserving()
    for _ in range(20):
        ch = _broken(rng)
        assert not ch.is_trace_preserving() and not choi_from_channel(ch).is_trace_preserving()


def test_remixed_kraus_same_choi(rng):
    ch = random_channel(2, rng, kraus_rank=3)
    other = remix_kraus(ch, haar_unitary(3, rng))
    assert not np.allclose(other.kraus, ch.kraus)
    assert np.abs(choi_from_channel(ch).matrix - choi_from_channel(other).matrix).max() < 1e-12


def test_channel_json(rng):
    ch = random_channel(2, rng)
    assert channels_agree(channel_from_json(ch.to_json()), ch)
    assert channels_agree(channel_from_json(choi_from_channel(ch).to_json()), ch)
    with pytest.raises(DimensionError):
        channel_from_json({"dim": 2})


def test_dilation_identity():
    dil = stinespring_dilate(identity_channel(2))
    np.testing.assert_allclose(dil.unitary, np.eye(4), atol=1e-15)
    np.testing.assert_allclose(dil.ancilla_state, np.diag([1, 0]))


def test_dilation_reproduces_channel(rng):
    for _ in range(10):
        ch = random_channel(2, rng, kraus_rank=3)
        dil = stinespring_dilate(ch)
        u = dil.unitary
        assert np.linalg.norm(u @ u.conj().T - np.eye(len(u))) < 1e-10
        for j, k in itertools.product(range(2), repeat=2):
            e = matrix_unit(j, k, 2)
            assert np.abs(dilation_action(dil, e) - apply_channel(ch, e)).max() < 1e-9


def test_two_distinct_dilations(rng):
    ch = random_channel(2, rng)
    a = stinespring_dilate(ch)
    b = stinespring_dilate(remix_kraus(ch, haar_unitary(2, rng)), ancilla_index=1)
    assert not np.allclose(a.ancilla_state, b.ancilla_state)
    assert not np.allclose(a.unitary, b.unitary)
    for j, k in itertools.product(range(2), repeat=2):
        e = matrix_unit(j, k, 2)
        assert np.abs(dilation_action(a, e) - dilation_action(b, e)).max() < 1e-9


def test_dilation_choi_cross_check(rng):
    ch = random_channel(2, rng)
    dil = stinespring_dilate(ch)
    via = superop_from_map(lambda x: dilation_action(dil, x), 2)
    j = choi_from_superop(Superoperator(via, 2, 1))
    assert np.abs(j - choi_from_channel(ch).matrix).max() < 1e-9


def test_dilation_rejects_non_tp(rng):
    with pytest.raises(IsometryError):
        stinespring_dilate(_broken(rng))


def test_vec_is_column_stacking():
    m = np.array([[1, 2], [3, 4]])
    np.testing.assert_array_equal(vec(m), [1, 3, 2, 4])
    np.testing.assert_array_equal(unvec(vec(m)), m)


def test_superop_identity():
    s = superop_from_channels([identity_channel(2)] * 2)
    np.testing.assert_allclose(s.matrix, np.eye(16))


def test_superop_product_action(rng):
    rho, sigma = sample_density(2, rng), sample_density(2, rng)
    s = superop_from_channels([depolarizing_channel(0.4), identity_channel(2)])
    out = apply_superop(s, kron(rho, sigma))
    np.testing.assert_allclose(out, kron(apply_channel(depolarizing_channel(0.4), rho), sigma), atol=1e-12)


def test_superop_matches_kraus_product_oracle(rng):
    a, b = random_channel(2, rng), random_channel(2, rng, kraus_rank=3)
    psi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    rho = np.outer(psi, psi.conj()) / np.vdot(psi, psi).real
    oracle = sum(kron(x, y) @ rho @ kron(x, y).conj().T for x in a.kraus for y in b.kraus)
    assert np.abs(apply_superop(superop_from_channels([a, b]), rho) - oracle).max() < 1e-10


def test_superop_dual_tp_check(rng):
    assert superop_from_channels([random_channel(2, rng)] * 2).is_trace_preserving()
    assert not Superoperator(2 * np.eye(4), 2).is_trace_preserving()


def test_superop_size_limit():
    with pytest.raises(ResourceLimitError):
        superop_from_channels([identity_channel(2)] * 7)


def test_s_coefficients(rng):
    ch = random_channel(2, rng)
    s = s_coefficients(superop_from_channels([ch]))
    for j, k in itertools.product(range(2), repeat=2):
        out = apply_channel(ch, matrix_unit(j, k, 2))
        np.testing.assert_allclose(s[:, j, :, k], out, atol=1e-14)


def test_multi_copy_choi_interleaving(rng):
    a, b = random_channel(2, rng), random_channel(2, rng)
    j2 = choi_from_superop(superop_from_channels([a, b]))
    single = kron(choi_from_channel(a).matrix, choi_from_channel(b).matrix)
    assert np.abs(j2 - single).max() < 1e-10
    blocked = choi_from_superop(superop_from_channels([a, b]), interleaved=False)
    assert np.abs(permute_systems(blocked, (2,) * 4, interleave_permutation(2)) - j2).max() < 1e-15
    assert np.abs(permute_systems(j2, (2,) * 4, blocks_permutation(2)) - blocked).max() < 1e-15


def test_mixture_superop_examples(rng):
    ch = random_channel(2, rng)
    np.testing.assert_allclose(mixture_superop([1.0], [ch], 2).matrix, superop_from_channels([ch, ch]).matrix)
    u, v = unitary_channel(haar_unitary(2, rng)), unitary_channel(haar_unitary(2, rng))
    avg = mixture_superop([0.5, 0.5], [u, v], 1).matrix
    np.testing.assert_allclose(avg, 0.5 * superop_from_channels([u]).matrix + 0.5 * superop_from_channels([v]).matrix)
    with pytest.raises(InvalidStateError):
        mixture_superop([0.5], [u, v], 1)


def test_power_superop_symmetric(rng):
    ch = random_channel(2, rng)
    assert op_symmetry_check(superop_from_channels([ch] * 3))


def test_asymmetric_product_names_transposition():
    res = op_symmetry_check(superop_from_channels([depolarizing_channel(0.5), identity_channel(2)]))
    assert not res and res.transposition == (0, 1)


def test_extendibility_power_and_mixture(rng):
    ch = random_channel(2, rng)
    assert op_extendibility_check(superop_from_channels([ch]), superop_from_channels([ch, ch]))
    chs = [random_channel(2, rng) for _ in range(3)]
    w = rng.dirichlet(np.ones(3))
    assert op_extendibility_check(mixture_superop(w, chs, 1), mixture_superop(w, chs, 2))


def test_extendibility_fails_for_mismatched_weights(rng):
    chs = [depolarizing_channel(0.9), identity_channel(2)]
    assert not op_extendibility_check(mixture_superop([0.5, 0.5], chs, 1), mixture_superop([0.2, 0.8], chs, 2))
    with pytest.raises(DimensionError):
        op_extendibility_check(mixture_superop([1.0], chs[:1], 1), mixture_superop([1.0], chs[:1], 3))


def test_tp_filter_all_tp(rng):
    rep = tp_filter_demo([0.3, 0.7], [random_channel(2, rng), identity_channel(2)], sample_density(2, rng))
    assert not rep.violation and rep.first_violation is None
    assert all(abs(v - 1) < 1e-9 for _, v in rep.rows)


def test_tp_filter_scaled_component(rng):
    maps = [identity_channel(2), scaled_channel(identity_channel(2), 1.1)]
    rep = tp_filter_demo([0.5, 0.5], maps, sample_density(2, rng))
    assert rep.violation and rep.first_violation == 1 and rep.growing_index == 1
    for n, v in rep.rows:
        assert abs(v - (0.5 + 0.5 * 1.1**n)) <= 1e-12 * v


def test_tp_filter_deficient_component(rng):
    maps = [identity_channel(2), scaled_channel(identity_channel(2), 0.8)]
    rep = tp_filter_demo([0.9, 0.1], maps, sample_density(2, rng))
    assert rep.violation and rep.deficient_indices == [1]
    assert all(v < 1 for _, v in rep.rows)
    assert rep.flags


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_kraus_channels_have_psd_choi(seed, rank):
    ch = random_channel(2, np.random.default_rng(seed), kraus_rank=rank)
    j = choi_from_channel(ch)
    assert j.min_eigenvalue() >= -1e-12
    assert abs(np.trace(j.matrix) - 1) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mixture_superops_are_exchangeable(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    chs = [random_channel(2, rng) for _ in range(m)]
    w = rng.dirichlet(np.ones(m))
    two, three = mixture_superop(w, chs, 2), mixture_superop(w, chs, 3)
    assert op_symmetry_check(two) and op_symmetry_check(three)
    assert op_extendibility_check(two, three)
