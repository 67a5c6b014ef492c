import math

import numpy as np
import pytest
from scipy.linalg import expm

from floquet_purification.backend.services.errors import ParameterError
from floquet_purification.backend.services.model_core import (
    HALF_PI,
    CircuitParams,
    Region,
    critical_times,
    derive_params,
    gate_generator,
    perturbation_gate_u3,
    phase_label,
    reduce_period,
    symmetry_ops,
    two_site_gate,
)

T_WEAK = math.pi / (2 * math.cos(0.5))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(L=5, gamma=0.5, T=1.0),
        dict(L=2, gamma=0.5, T=1.0),
        dict(L=8, gamma=2.0, T=1.0),
        dict(L=8, gamma=0.5, T=-0.1),
        dict(L=8, gamma=HALF_PI, T=0.0),
        dict(L=8, gamma=0.5, T=1.0, delta=-0.1),
        dict(L=8, gamma=float("nan"), T=1.0),
    ],
)
def test_invalid_params_raise(kwargs):
    with pytest.raises(ParameterError):
        CircuitParams(**kwargs)


def test_critical_times_formula():
    lo, hi = critical_times(0.5)
    c = math.cos(0.5)
    assert lo == pytest.approx((math.pi - 1.0) / (2 * c))
    assert hi == pytest.approx((math.pi + 1.0) / (2 * c))
    assert critical_times(HALF_PI) == (1.0, math.inf)


def test_region_and_alpha_branch():
    sym = derive_params(CircuitParams(L=8, gamma=0.5, T=1.0))
    assert sym.region is Region.SYMMETRIC
    assert abs(sym.alpha.imag) < 1e-12

    broken = derive_params(CircuitParams(L=8, gamma=0.5, T=T_WEAK))
    assert broken.region is Region.BROKEN
    assert broken.alpha.imag == pytest.approx(HALF_PI)
    assert abs(broken.beta.imag) < 1e-12


def test_unitary_line_is_symmetric_for_all_T():
    for T in (0.3, 1.5, 4.0):
        d = derive_params(CircuitParams(L=8, gamma=0.0, T=T))
        assert d.region is Region.SYMMETRIC
        assert d.alpha == 0


def test_critical_point_has_nan_alpha():
    lo, _ = critical_times(0.5)
    d = derive_params(CircuitParams(L=8, gamma=0.5, T=lo))
    assert d.region is Region.CRITICAL
    assert math.isnan(d.alpha.real)


def test_reduce_period_folds_T():
    period = math.pi / math.cos(0.5)
    assert reduce_period(0.5, period + 0.3) == pytest.approx(0.3)
    assert reduce_period(HALF_PI, 7.0) == 7.0


@pytest.mark.parametrize(
    "gamma, T, delta, delta_prime, expected",
    [
        (0.5, 1.0, 0.0, 0.0, "mixed"),
        (0.5, T_WEAK, 0.0, 0.0, "weakly-purifying"),
        (HALF_PI, 1.5, 0.0, 0.0, "mixed"),
        (0.0, 1.5, 0.0, 0.0, "mixed"),
        (0.5, T_WEAK, 0.2, 0.0, "strongly-purifying"),
        (0.5, 1.0, 0.0, 0.2, "strongly-purifying"),
    ],
)
def test_phase_label_table(gamma, T, delta, delta_prime, expected):
    p = CircuitParams(L=8, gamma=gamma, T=T, delta=delta, delta_prime=delta_prime)
    assert phase_label(p, derive_params(p)) == expected


@pytest.mark.parametrize("gamma, T", [(0.3, 0.7), (0.9, 2.2), (1.2, 1.1)])
def test_gate_matches_matrix_exponential(gamma, T):
    h = gate_generator(gamma)
    gate = two_site_gate(CircuitParams(L=4, gamma=gamma, T=T)).entries
    assert np.allclose(gate, expm(1j * T * h), atol=1e-12)


def test_gate_generator_squares_to_multiple():
    for gamma in (0.2, 0.8):
        h = gate_generator(gamma)
        assert np.allclose(h @ h, 2 * math.cos(gamma) * h, atol=1e-12)
    h = gate_generator(HALF_PI)
    assert np.allclose(h @ h, 0, atol=1e-12)


def test_gate_conserves_magnetization_and_fixes_aligned_pairs():
    g = two_site_gate(CircuitParams(L=4, gamma=0.7, T=1.3)).entries
    assert g[0, 0] == pytest.approx(1.0)
    assert g[3, 3] == pytest.approx(1.0)
    mask = np.ones((4, 4), dtype=bool)
    mask[1:3, 1:3] = False
    mask[0, 0] = mask[3, 3] = False
    assert np.all(np.abs(g[mask]) < 1e-15)


def test_unitary_gate_at_gamma_zero():
    g = two_site_gate(CircuitParams(L=4, gamma=0.0, T=0.9)).entries
    assert np.allclose(g @ g.conj().T, np.eye(4), atol=1e-12)


def test_u3_factors_are_staggered():
    p = CircuitParams(L=6, gamma=0.5, T=1.0, delta=0.2)
    f = perturbation_gate_u3(p)
    assert f.shape == (6, 2)
    assert np.allclose(f[:, 0] * f[:, 1], 1.0)
    assert f[0, 0] == pytest.approx(math.exp(-0.2))
    assert f[1, 0] == pytest.approx(math.exp(0.2))


def test_symmetry_composite_is_reflection_and_involution():
    s = symmetry_ops(8)
    assert s.composite() == tuple((-i) % 8 for i in range(8))
    assert s.a_squared_is_identity()
