"""Acceptance gate: every numbered criterion must hold at its tolerance.

The whole suite runs once per session (about a minute, dominated by the
long trajectories and the trap-width optimization); each test then asserts
one criterion so the pass/fail lines stay readable.
"""

import pytest

from ptfourwell import acceptance


@pytest.fixture(scope="module")
def results():
    return {r.index: r for r in acceptance.run_all()}

def check(results, index):
    result = results[index]
    assert result.passed, f"criterion {index} ({result.name}): {result.detail}"


def test_criterion_01_two_mode_eigenstructure(results):
    check(results, 1)


def test_criterion_02_linear_middle_pair_equivalence(results):
    check(results, 2)


def test_criterion_03_stationary_populations_and_drift(results):
    check(results, 3)


def test_criterion_04_condition_residuals(results):
    check(results, 4)


def test_criterion_05_norm_conservation(results):
    check(results, 5)


def test_criterion_06_oscillation_frequency(results):
    check(results, 6)


def test_criterion_07_mean_field_correction_and_balance(results):
    check(results, 7)


def test_criterion_08_adiabatic_ramp(results):
    check(results, 8)


def test_criterion_09_physical_unit_scales(results):
    check(results, 9)


def test_criterion_10_matrix_elements_vs_quadrature(results):
    check(results, 10)


def test_criterion_11_trap_inversion_round_trip(results):
    check(results, 11)


def test_criterion_12_noise_robustness(results):
    check(results, 12)
