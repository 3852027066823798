import numpy as np
import pytest

from models.dtn import RayleighSpectrum, default_truncation
from models.fem_core import assemble, solve
from models.geometry import Dirichlet, Impedance, IncidentWave, Transmission
from models.mesh import GAMMA_PROFILE
from models.oracles import flat_dirichlet_oracle, flat_transmission_oracle
from models.postprocess import (
    EfficiencyTable,
    boundary_l2_norm,
    efficiencies,
    norm_H1alpha_weighted,
    norm_XR,
    normal_flux_norm,
    parseval_energy,
    propagating_orders,
    rayleigh_coefficients,
    scattered_coefficients,
    trace_energy,
    trace_half_norm,
)
from models.verify import field_error, oracle_comparison


def total_spectrum(wave, amplitude, k=None):
    """Order-0 total trace on x₂ = 0: incident plus scattered amplitude"""
    return RayleighSpectrum(coeffs=np.array([wave.gamma + amplitude]), alpha=wave.alpha, height=0.0, k=k or wave.k)


@pytest.fixture(scope="module")
def dirichlet_field(flat_mesh):
    wave = IncidentWave.from_degrees(1.5, 20.0)
    return solve(assemble(Dirichlet(), flat_mesh, wave, default_truncation(wave.k)))


def test_flat_dirichlet_reflects_everything(wave):
    table = efficiencies(total_spectrum(wave, -wave.gamma), wave, Dirichlet())
    assert table.reflection == {0: pytest.approx(1.0)}
    assert table.balance_defect == pytest.approx(0.0, abs=1e-14)
    assert table.reliable


def test_matched_impedance_reflects_nothing(wave):
    table = efficiencies(total_spectrum(wave, 0.0), wave, Impedance(wave.beta))
    assert table.reflection[0] == pytest.approx(0.0)
    assert table.absorption == 0.0


def test_fresnel_efficiencies_at_normal_incidence():
    wave = IncidentWave.from_degrees(1.0, 0.0)
    oracle = flat_transmission_oracle(wave, k_minus=2.0, lam=1.0)
    assert oracle.reflection == pytest.approx(-1.0 / 3.0)
    assert oracle.transmission == pytest.approx(2.0 / 3.0)

    upper = total_spectrum(wave, oracle.reflection)
    lower = RayleighSpectrum(coeffs=np.array([oracle.transmission]), alpha=0.0, height=0.0, k=2.0)
    table = efficiencies([upper, lower], wave, Transmission(k_minus=2.0, lam=1.0))
    assert table.reflection[0] == pytest.approx(1.0 / 9.0)
    assert table.transmission[0] == pytest.approx(8.0 / 9.0)
    assert table.balance_defect < 1e-14


def test_efficiencies_input_errors(wave):
    with pytest.raises(ValueError, match="zero incident"):
        efficiencies(total_spectrum(wave, 0.0), IncidentWave(1.5, 0.3, gamma=0.0), Dirichlet())
    with pytest.raises(ValueError, match="lower spectrum"):
        efficiencies(total_spectrum(wave, 0.0), wave, Transmission(k_minus=2.0, lam=1.0))


def test_efficiency_table_frame():
    table = EfficiencyTable(reflection={1: 0.2, -1: 0.3}, transmission={0: 0.5})
    frame = table.to_frame()
    assert list(frame.columns) == ["side", "order", "efficiency"]
    assert list(frame["order"]) == [-1, 1, 0]
    assert table.total == pytest.approx(1.0)


def test_scattered_coefficients_remove_incident_wave(wave):
    height = 1.5
    r = 0.3 - 0.2j
    coeffs = np.zeros(3, dtype=complex)
    coeffs[1] = wave.gamma * np.exp(-1j * wave.beta * height) + r * np.exp(1j * wave.beta * height)
    spectrum = RayleighSpectrum(coeffs=coeffs, alpha=wave.alpha, height=height, k=wave.k)
    assert scattered_coefficients(spectrum, wave, "upper").coefficient(0) == pytest.approx(r)
    with pytest.raises(ValueError):
        scattered_coefficients(spectrum, wave, "sideways")


def test_trace_half_norm_weights():
    spectrum = RayleighSpectrum(coeffs=np.array([1.0, 0.0, 0.0]), alpha=0.0, height=0.0, k=1.5)
    assert trace_half_norm(spectrum, 1.5) == pytest.approx(np.sqrt(np.sqrt(1.5 ** 2 + 1.0)))


def test_propagating_orders():
    spectrum = RayleighSpectrum(coeffs=np.zeros(7), alpha=0.0, height=0.0, k=1.5)
    assert list(propagating_orders(spectrum)) == [-1, 0, 1]


def test_rayleigh_coefficients_of_solved_field(dirichlet_field):
    wave = dirichlet_field.metadata["wave"]
    spectrum = rayleigh_coefficients(dirichlet_field, 1.5, dirichlet_field.metadata["N"])
    assert spectrum.alpha == pytest.approx(wave.alpha)
    assert spectrum.N == dirichlet_field.metadata["N"]
    # flat profile: only order 0 is excited
    others = np.delete(np.abs(spectrum.coeffs), spectrum.N)
    assert others.max() < 1e-8
    assert parseval_energy(spectrum) == pytest.approx(trace_energy(dirichlet_field, 1.5), rel=1e-4)


def test_energy_norms_of_solved_field(dirichlet_field):
    wave = dirichlet_field.metadata["wave"]
    exact = field_error(dirichlet_field, flat_dirichlet_oracle(wave).upper)
    assert norm_XR(dirichlet_field) == pytest.approx(exact.energy_exact, rel=5e-2)
    assert norm_XR(dirichlet_field, wave) == pytest.approx(norm_XR(dirichlet_field))
    assert norm_H1alpha_weighted(dirichlet_field, Dirichlet()) == pytest.approx(norm_XR(dirichlet_field))
    assert boundary_l2_norm(dirichlet_field, GAMMA_PROFILE) == pytest.approx(0.0, abs=1e-12)


def test_normal_flux_on_flat_profile(dirichlet_field):
    beta = dirichlet_field.metadata["wave"].beta
    assert normal_flux_norm(dirichlet_field) == pytest.approx(2 * beta * np.sqrt(2 * np.pi), rel=5e-2)


def test_matched_impedance_absorbs_incident_power(flat_mesh, wave):
    bc = Impedance(wave.beta)
    field = solve(assemble(bc, flat_mesh, wave, default_truncation(wave.k)))
    table = efficiencies(rayleigh_coefficients(field, 1.5, field.metadata["N"]), wave, bc, field)
    assert table.absorption == pytest.approx(1.0, abs=2e-2)
    assert table.balance_defect < 2e-2


def test_transmission_solve_balances_power(two_sided_mesh, wave):
    bc = Transmission(k_minus=2.0, lam=1.0)
    N = default_truncation(2.0, wave.alpha)
    field = solve(assemble(bc, two_sided_mesh, wave, N))
    spectra = [rayleigh_coefficients(field, 2.0, N), rayleigh_coefficients(field, -2.0, N)]
    assert spectra[1].k == 2.0
    table = efficiencies(spectra, wave, bc, field)
    assert set(table.transmission) == set(propagating_orders(spectra[1]))
    assert table.balance_defect < 3e-2
    result = oracle_comparison(field, flat_transmission_oracle(wave, 2.0, 1.0))
    assert result["reflection_error"] < 2e-2
    assert result["transmission_error"] < 2e-2
