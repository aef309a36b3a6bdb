"""Fast path against the number-basis oracle on small comparison grids."""

import math

import pytest

from isrsim.fock import (
    CrossCheckCase,
    TruncationError,
    cross_validate,
    default_grid,
)

CHEAP_CASES = [
    CrossCheckCase(
        thermal_n=0.4,
        c1=0.3 - 0.1j,
        c2=0.08j,
        damping_rate=1.2,
        delay=0.6,
        coupling_norm=0.2,
        intensity_y=10.0,
        phase_diff=0.5,
    ),
    CrossCheckCase(
        thermal_n=0.0,
        c1=0.2,
        c2=0.0,
        damping_rate=0.8,
        delay=0.0,
        coupling_norm=0.1,
        intensity_y=6.0,
        phase_diff=-1.0,
    ),
]


def test_cross_validate_passes_on_cheap_cases():
    results = cross_validate(CHEAP_CASES)
    assert all(res.passed for res in results)
    for res in results:
        assert max(res.moment_errors.values()) < 1e-6
        assert res.mean_error < 1e-4
        assert res.var_error < 1e-4


def test_cross_validate_catches_injected_fault():
    results = cross_validate([CHEAP_CASES[0]], fault_scale=5e-4)
    assert not results[0].passed
    assert results[0].var_error >= 4e-4


def test_cross_validate_respects_dimension_cap():
    # The first case relaxes from a hot squeezed state; 24 levels cannot
    # hold it, and with the cap in place the retry ladder must raise
    # instead of silently comparing a clipped state.
    hot = CrossCheckCase(
        thermal_n=2.0,
        c1=0.9 - 0.4j,
        c2=0.25j,
        damping_rate=1.0,
        delay=3.0,
        coupling_norm=0.3,
        intensity_y=50.0,
        phase_diff=0.7,
    )
    with pytest.raises(TruncationError):
        cross_validate([hot], max_dim=24)


def test_default_grid_covers_validated_ranges():
    cases = default_grid()
    assert len(cases) == 8
    for case in cases:
        assert 0.0 <= case.thermal_n <= 2.0
        assert 0.0 <= 2.0 * abs(case.c2) <= 0.5
        assert 0.0 <= case.damping_rate * case.delay <= 3.0 + 1e-12
        assert 0.0 <= case.coupling_norm <= 0.3
        assert 5.0 <= case.intensity_y <= 50.0
        assert case.omega == pytest.approx(2.0 * math.pi * 3.84)


def test_default_grid_is_deterministic():
    assert default_grid() == default_grid()
    assert default_grid(seed=1) != default_grid(seed=2)
