import math

import numpy as np
import pytest

from floquet_purification.backend.services import free_fermion as ff
from floquet_purification.backend.services.errors import FitError, ParameterError
from floquet_purification.backend.services.model_core import HALF_PI, CircuitParams, derive_params


def _beta(T):
    return derive_params(CircuitParams(L=8, gamma=HALF_PI, T=T)).beta


def test_momentum_grids():
    ks, edge = ff.momentum_grid(8, integer_grid=True)
    assert ks.tolist() == [-1.0, 0.0, 1.0]
    assert edge is True

    ks, edge = ff.momentum_grid(8, integer_grid=False)
    assert ks.tolist() == [-1.5, -0.5, 0.5, 1.5]
    assert edge is False


def test_gaussian_beta_is_real_in_broken_phase():
    b = _beta(1.5)
    assert abs(b.imag) < 1e-12
    assert b.real != 0


@pytest.mark.parametrize("T", [1.5, 3.0, 0.5])
def test_roots_solve_single_particle_equation(T):
    beta = _beta(T)
    for m_parity in (0, 1):
        roots = ff.ff_roots(12, beta, m_parity)
        assert roots
        assert max(ff.single_particle_residual(r, 12, beta) for r in roots) < 1e-10


def test_type_ii_roots_sit_on_quarter_lines():
    beta = _beta(1.5)
    roots = ff.ff_roots(16, beta, 1)
    kinds = {r.kind for r in roots}
    assert ff.RootKind.TYPE_I in kinds
    for r in roots:
        if r.kind is ff.RootKind.TYPE_II:
            assert abs(abs(r.lam.imag) - math.pi / 4) < 1e-10
        else:
            assert abs(r.lam.real) < 1e-10


def test_best_with_parity_enumeration_and_closed_form_agree():
    values = np.array([1.0, 0.5, -0.2])
    for parity in (0, 1):
        assert ff._best_by_enumeration(values, parity, 1e-9) == pytest.approx(
            ff._best_closed_form(values, parity, 1e-9)
        )
    assert ff.best_with_parity([1.0, 0.5, -0.2], 1) == pytest.approx((1.3, 1))
    assert ff.best_with_parity([1.0, 0.0, 0.0], 1) == pytest.approx((1.0, 2))


def test_census_symmetric_phase_is_fully_degenerate():
    c = ff.ff_max_modulus_census(8, _beta(0.5))
    assert c.degeneracy == 2 ** 8
    assert c.max_modulus == 1.0


def test_census_broken_phase():
    c = ff.ff_max_modulus_census(12, _beta(1.5))
    assert c.max_modulus >= 1.0
    assert c.degeneracy >= 1
    assert set(c.grid_counts) == {"integer", "half-integer"}


def test_eigenvalue_rejects_wrong_parity():
    bad = ff.RootSelection(roots=(), integer_grid=True)
    assert not bad.parity_consistent
    with pytest.raises(ParameterError):
        ff.ff_eigenvalue(bad, _beta(1.5))


def test_f_pm_at_zero_diverges_with_sign():
    b = _beta(1.5).real
    up = ff.f_pm(0.0, +1, 64, b)
    down = ff.f_pm(0.0, -1, 64, b)
    assert math.isinf(up) and math.isinf(down)
    assert up == -down


def test_f_pm_sum_is_derivative_of_added_root():
    b = _beta(1.5).real
    L, mu = 32, 0.4
    base = [r.lam for r in ff.top_selection(L, b, integer_grid=True).roots]
    for sign in (+1, -1):
        added = complex(mu, sign * math.pi / 4)
        expected = ff.depsilon_log_lambda(base + [added], b, L) - ff.depsilon_log_lambda(base, b, L)
        assert ff.f_pm(mu, sign, L, b, "finite_sum") == pytest.approx(expected, rel=1e-8, abs=1e-12)


def test_hurwitz_zeta_matches_known_values():
    assert ff.hurwitz_zeta(0.5, 1.0) == pytest.approx(-1.4603545088095868, abs=1e-10)
    assert ff.hurwitz_zeta(-0.5, 1.0) == pytest.approx(-0.20788622497735457, abs=1e-10)
    assert ff.hurwitz_zeta(2.0, 1.0) == pytest.approx(math.pi ** 2 / 6, abs=1e-12)
    # ζ(s, a) = a^{−s} + ζ(s, a + 1)
    assert ff.hurwitz_zeta(0.5, 0.2) == pytest.approx(0.2 ** -0.5 + ff.hurwitz_zeta(0.5, 1.2), abs=1e-10)
    with pytest.raises(ParameterError):
        ff.hurwitz_zeta(0.5, 0.0)


@pytest.mark.parametrize("mu", [0.5, 1.0])
def test_f_pm_edge_corrected_sum_matches_integral(mu):
    b = _beta(1.5).real
    for sign in (+1, -1):
        raw = ff.f_pm(mu, sign, 2048, b, "finite_sum")
        fixed = ff.f_pm(mu, sign, 2048, b, "edge_corrected")
        i = ff.f_pm(mu, sign, 2048, b, "integral")
        assert abs(fixed - i) < 1e-3
        assert abs(fixed - i) < abs(raw - i)


def test_band_edge_correction_accounts_for_sum_integral_gap():
    b = _beta(1.5).real
    gaps = []
    for L in (512, 2048):
        for grid in (True, False):
            raw = ff.f_pm(0.5, 1, L, b, "finite_sum", grid)
            gaps.append(abs(raw - ff.f_pm(0.5, 1, L, b, "integral", grid)
                            - ff.band_edge_correction(0.5, 1, L, b, grid)))
    assert max(gaps) < 1e-3


def test_f_pm_rejects_bad_input():
    b = _beta(1.5).real
    with pytest.raises(ParameterError):
        ff.f_pm(0.3, 0, 64, b)
    with pytest.raises(ParameterError):
        ff.f_pm(0.3, 1, 64, b, mode="other")


def test_perturbative_top_is_parity_consistent():
    top = ff.ff_perturbative_top(12, _beta(1.5).real)
    assert top.selection.parity_consistent
    assert math.isfinite(top.slope)


def test_gap_scaling_needs_nonzero_epsilon():
    with pytest.raises(FitError):
        ff.gap_scaling_epsilon([6], [0.0], T=1.5)


def test_gap_scaling_reports_stderr_and_relative_residual():
    fit = ff.gap_scaling_epsilon([6, 8], [0.01, 0.02], T=1.5)
    assert fit.params["c"] > 0
    assert math.isfinite(fit.stderr["c"]) and fit.stderr["c"] >= 0
    y = fit.data["gap"]
    expected = float(np.max(np.abs(fit.residuals) / np.abs(y)))
    assert fit.params["max_rel_residual"] == pytest.approx(expected)
