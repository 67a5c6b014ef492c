import numpy as np
import pytest

from floquet_purification.backend.services.errors import FitError
from floquet_purification.backend.services.scaling_fit import (
    fit_linear_in_inverse_l,
    fit_log_law,
    fit_power_law,
    fit_two_variable_power_law,
)


def test_linear_in_inverse_l_exact():
    L = np.array([10.0, 20.0, 30.0, 40.0])
    y = (3.0 - 2.0 / L) / L
    fit = fit_linear_in_inverse_l(L, y)
    assert fit.params["a"] == pytest.approx(3.0)
    assert fit.params["b"] == pytest.approx(-2.0)
    assert fit.n_points == 4
    assert np.max(np.abs(fit.residuals)) < 1e-12


def test_power_law_recovers_exponent():
    x = np.array([0.1, 0.05, 0.025, 0.0125])
    fit = fit_power_law(x, 2.0 * x ** -0.7)
    assert fit.params["p"] == pytest.approx(-0.7)
    assert fit.params["c"] == pytest.approx(2.0)


def test_log_law_coefficients():
    L = np.array([8.0, 10.0, 12.0, 14.0, 16.0])
    fit = fit_log_law(L, 0.24 * np.log(L) + 0.52)
    assert fit.params["a"] == pytest.approx(0.24)
    assert fit.params["b"] == pytest.approx(0.52)


def test_two_variable_power_law():
    eps = np.array([0.005, 0.01, 0.02, 0.005, 0.01, 0.02])
    L = np.array([8.0, 8.0, 8.0, 12.0, 12.0, 12.0])
    fit = fit_two_variable_power_law(eps, L, 0.9 * eps / L)
    assert fit.params["p"] == pytest.approx(1.0)
    assert fit.params["q"] == pytest.approx(-1.0)
    assert fit.params["c"] == pytest.approx(0.9)


def test_two_variable_power_law_needs_both_axes_varied():
    eps = np.array([0.005, 0.01, 0.02])
    with pytest.raises(FitError):
        fit_two_variable_power_law(eps, [8.0, 8.0, 8.0], eps / 8)


def test_fit_preconditions():
    with pytest.raises(FitError) as err:
        fit_log_law([8.0, 10.0], [0.1, 0.2])
    assert err.value.diagnostics["n_points"] == 2
    with pytest.raises(FitError):
        fit_power_law([1.0, 2.0, -3.0], [1.0, 2.0, 3.0])
    with pytest.raises(FitError):
        fit_linear_in_inverse_l([8, 10, 12, 14], [0.1, np.nan, 0.1, 0.1])
