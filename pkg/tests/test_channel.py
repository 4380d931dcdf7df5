import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riscal.channel import (
    bu_channel,
    delay_phase,
    make_sounding_plan,
    noise_variance,
    path_gains,
    pilot_energy,
    ris_inner,
    steering_vector,
    to_dbm,
)
from riscal.scene import PlanarArray, Waveform

seeds = st.integers(0, 2**32 - 1)


def test_steering_vector_unit_modulus_and_broadside():
    pos = PlanarArray(4, 4).element_positions(0.01)
    a = steering_vector(pos, [1.0, 0.0, 0.0], 0.01)
    # element x-coordinates are zero, so broadside gives all ones
    np.testing.assert_allclose(a, np.ones(16))
    b = steering_vector(pos, [0.0, 0.6, 0.8], 0.01)
    np.testing.assert_allclose(np.abs(b), 1.0)


def test_half_wavelength_phase_step():
    pos = PlanarArray(1, 2).element_positions(0.02)
    a = steering_vector(pos, [0.0, 1.0, 0.0], 0.02)
    assert np.angle(a[1] / a[0]) == pytest.approx(np.pi)


def test_ris_inner_dimension_mismatch():
    with pytest.raises(ValueError):
        ris_inner(np.ones(4), np.ones(5), np.ones(4))


def test_ris_inner_all_ones_profile_sums_elements():
    a = np.exp(1j * np.arange(6))
    assert ris_inner(a, np.ones(6), a.conj()) == pytest.approx(6.0)


@given(seeds)
def test_sounding_plan_properties(seed):
    plan = make_sounding_plan(seed, 5, 9, 4, 3, pilot_energy=2.0)
    np.testing.assert_allclose(np.abs(plan.ris_profiles), 1.0)
    np.testing.assert_allclose(np.linalg.norm(plan.combiners, axis=1), 1.0)
    np.testing.assert_allclose(plan.pilots, np.sqrt(2.0))
    again = make_sounding_plan(seed, 5, 9, 4, 3, pilot_energy=2.0)
    np.testing.assert_array_equal(plan.ris_profiles, again.ris_profiles)
    np.testing.assert_array_equal(plan.combiners, again.combiners)


def test_sounding_plan_rejects_empty():
    with pytest.raises(ValueError):
        make_sounding_plan(0, 0, 4, 4)


def test_noise_and_power_levels():
    wf = Waveform()
    # -173.8 dBm/Hz + 10 dB over a 3.125 MHz subcarrier
    assert to_dbm(noise_variance(wf)) == pytest.approx(-163.8 + 10 * np.log10(3.125e6))
    assert pilot_energy(wf) == pytest.approx(1000.0 / 128)


def test_free_space_gains():
    wl = Waveform().wavelength
    g = path_gains([0, 0, 0], [0, 4, 0], [3, 0, 0], wl, seed=1)
    assert abs(g.bu) == pytest.approx(wl / (4 * np.pi * 3))
    assert abs(g.ris) == pytest.approx(wl**2 / ((4 * np.pi) ** 2 * 4 * 5))
    assert path_gains([0, 0, 0], [0, 4, 0], [3, 0, 0], wl, seed=1) == g


def test_delay_phase_and_bu_channel():
    k = np.arange(4)
    e = delay_phase(1e-9, 1e6, k)
    np.testing.assert_allclose(e, np.exp(-2j * np.pi * 1e-3 * k))
    h = bu_channel(2.0, np.ones(3), 1e-9, 1e6, 2)
    np.testing.assert_allclose(h, 2.0 * e[2])
