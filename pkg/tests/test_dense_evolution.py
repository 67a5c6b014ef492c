import math

import numpy as np
import pytest

from floquet_purification.backend.infra.settings import Settings
from floquet_purification.backend.services import dense_evolution as ed
from floquet_purification.backend.services.errors import CapacityError, ParameterError
from floquet_purification.backend.services.model_core import HALF_PI, CircuitParams, symmetry_ops


def _settings(**kw):
    base = dict(l_max_ed=16, memory_budget_mb=2048, workers=1, output_dir=".")
    base.update(kw)
    return Settings(**base)


def test_sector_basis_dimensions():
    basis = ed.sector_basis(6, 3)
    assert basis.dim == 20
    assert np.all(ed.popcount(basis.states, 6) == 3)
    assert np.all(basis.index_of[basis.states] == np.arange(basis.dim))


def test_capacity_checks():
    p = CircuitParams(L=6, gamma=0.5, T=1.0)
    with pytest.raises(CapacityError):
        ed.build_block_operator(p, settings=_settings(l_max_ed=4))
    with pytest.raises(CapacityError) as err:
        ed.build_block_operator(p, settings=_settings(memory_budget_mb=0))
    assert err.value.required_bytes == ed.estimate_block_bytes(6, range(7))


@pytest.mark.parametrize(
    "variant, extra",
    [
        (ed.Variant.PLAIN, {}),
        (ed.Variant.SANDWICHED, {"delta": 0.2}),
        (ed.Variant.TILTED, {"delta_prime": 0.2}),
    ],
)
def test_blocks_agree_with_gate_level_evolution(variant, extra):
    p = CircuitParams(L=6, gamma=0.7, T=1.3, **extra)
    op = ed.build_block_operator(p, variant, sectors=[2, 3])
    for n_up in (2, 3):
        psi = ed.random_sector_state(6, n_up, seed=n_up)
        basis = ed.sector_basis(6, n_up)
        amp = psi.reshape(-1)[basis.states]
        out = ed.apply_floquet(op, psi).reshape(-1)
        assert np.allclose(out[basis.states], op.blocks[n_up] @ amp, atol=1e-12)
        outside = np.delete(out, basis.states)
        assert np.all(np.abs(outside) < 1e-14)


def test_unitary_line_gives_unitary_blocks():
    op = ed.build_block_operator(CircuitParams(L=6, gamma=0.0, T=0.8))
    for block in op.blocks.values():
        assert np.allclose(block @ block.conj().T, np.eye(block.shape[0]), atol=1e-12)


def test_symmetric_phase_spectrum_is_unimodular():
    spec = ed.full_spectrum(ed.build_block_operator(CircuitParams(L=6, gamma=0.5, T=1.0)))
    assert np.max(np.abs(np.abs(spec.eigenvalues) - 1)) < 1e-8
    assert spec.gap == 0.0


def test_spectrum_sorted_by_modulus():
    spec = ed.full_spectrum(ed.build_block_operator(CircuitParams(L=6, gamma=0.5, T=1.8)))
    mod = np.abs(spec.eigenvalues)
    assert spec.eigenvalues.size == 2 ** 6
    assert np.all(np.diff(np.round(mod / mod[0], 8)) <= 0)
    assert spec.degeneracy_count >= 1


def test_spectral_pairing_without_tilt():
    spec = ed.full_spectrum(ed.build_block_operator(CircuitParams(L=6, gamma=0.6, T=1.7)))
    assert ed.spectral_pairing_deviation(spec) < 1e-8


def test_antiunitary_commutation_plain_vs_tilted():
    s = symmetry_ops(6)
    plain = ed.build_block_operator(CircuitParams(L=6, gamma=0.6, T=1.7))
    tilted = ed.build_block_operator(CircuitParams(L=6, gamma=0.6, T=1.7, delta_prime=0.2), ed.Variant.TILTED)
    assert ed.check_antiunitary(plain, s) < 1e-10
    assert ed.check_antiunitary(tilted, s) > 0.1


@pytest.mark.parametrize("T", [1.0, 1.3, 1.78992])
def test_sandwiched_spectrum_keeps_inverse_conjugate_pairing(T):
    op = ed.build_block_operator(CircuitParams(L=8, gamma=0.5, T=T, delta=0.2), ed.Variant.SANDWICHED)
    assert ed.spectral_pairing_deviation(ed.full_spectrum(op)) < 1e-8


def test_sandwiched_operator_breaks_reflection_antiunitary():
    op = ed.build_block_operator(CircuitParams(L=6, gamma=0.5, T=1.3, delta=0.2), ed.Variant.SANDWICHED)
    assert ed.check_antiunitary(op, symmetry_ops(6)) > 1.0


def test_purity_starts_maximally_mixed_and_stays_bounded():
    L = 6
    trace = ed.evolve_purity(ed.build_block_operator(CircuitParams(L=L, gamma=0.5, T=1.0)), 20)
    assert trace.n[0] == 0
    assert trace.purity[0] == pytest.approx(2.0 ** -L)
    assert all(0 < x <= 1 + 1e-12 for x in trace.purity)
    assert len(trace.steps) == 21


def test_steps_to_purity_threshold():
    trace = ed.PurityTrace(steps=[(0, 0.1, 0.0), (1, 0.5, 0.0), (2, 0.995, 0.0)])
    assert ed.steps_to_purity(trace) == 2
    assert ed.steps_to_purity(trace, threshold=0.999) is None


def test_purification_time_from_gap():
    assert ed.purification_time_from_gap(0.0) == math.inf
    assert ed.purification_time_from_gap(1.0) == pytest.approx(math.log(100) / 2)


def test_ferromagnetic_overlap_shape():
    op = ed.build_block_operator(CircuitParams(L=6, gamma=0.5, T=1.0, delta_prime=0.2), ed.Variant.TILTED)
    w = ed.ferromagnetic_overlap(op, 10)
    assert w.shape == (11,)
    assert w[0] == pytest.approx(2.0 ** -6)
    assert np.all((w >= 0) & (w <= 1))


def test_ferromagnetic_overlap_needs_top_sector():
    op = ed.build_block_operator(CircuitParams(L=6, gamma=0.5, T=1.0), sectors=[3])
    with pytest.raises(ParameterError):
        ed.ferromagnetic_overlap(op, 3)


def test_half_chain_entropy_product_and_bell():
    product = np.zeros((2,) * 4, dtype=complex)
    product[0, 1, 0, 1] = 1.0
    assert ed.half_chain_entropy(product, 4) == pytest.approx(0.0, abs=1e-12)

    bell = np.zeros((2, 2), dtype=complex)
    bell[0, 1] = bell[1, 0] = 1 / math.sqrt(2)
    assert ed.half_chain_entropy(bell, 2) == pytest.approx(math.log(2))

    with pytest.raises(ParameterError):
        ed.half_chain_entropy(product, 4, cut=4)


def test_all_up_trajectory_has_zero_entropy():
    op = ed.circuit_operator(CircuitParams(L=6, gamma=1.0, T=1.5))
    series = ed.trajectory_entropy(op, n_up=6, seed=1, n_steps=5)
    assert [n for n, _ in series] == list(range(6))
    assert all(abs(s) < 1e-10 for _, s in series)


def test_trajectory_is_seed_deterministic():
    op = ed.circuit_operator(CircuitParams(L=6, gamma=1.0, T=1.5))
    a = ed.trajectory_entropy(op, n_up=4, seed=7, n_steps=6, record_every=3)
    b = ed.trajectory_entropy(op, n_up=4, seed=7, n_steps=6, record_every=3)
    assert a == b
    assert [n for n, _ in a] == [0, 3, 6]


def test_gaussian_broken_phase_is_degenerate():
    spec = ed.full_spectrum(ed.build_block_operator(CircuitParams(L=8, gamma=HALF_PI, T=1.5)))
    assert spec.gap < 1e-8
    assert spec.degeneracy_count > 1
