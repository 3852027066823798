import numpy as np
import pytest

from models.bounds import NO_CERTIFICATE
from models.dtn import RayleighSpectrum, default_truncation
from models.fem_core import assemble, solve
from models.geometry import Dirichlet, Impedance, IncidentWave
from models.mesh import GAMMA_PROFILE, GAMMA_R_PLUS, refine
from models.oracles import (
    ManufacturedField,
    ModeTerm,
    flat_dirichlet_oracle,
    flat_transmission_oracle,
    plane_wave,
    random_field,
)
from models.verify import (
    PASS,
    RANDOM_SUITES,
    RELLICH_TOL,
    Margin,
    auxiliary_bound_check,
    convergence_study,
    edge_quadrature,
    field_error,
    mode_amplitude_check,
    poincare_check,
    randomized_suite,
    rellich_residual,
    top_line_estimate_check,
    top_line_terms,
    trace_inequality_check,
    transmission_rellich_residual,
    vertical_derivative_check,
    volume_quadrature,
)

from conftest import make_domain, make_mesh


@pytest.fixture(scope="module")
def unit_flat_mesh():
    return make_mesh("flat(0)", R=1.0, h=0.3)


def test_margin_tolerance():
    assert Margin(-1e-12, 10.0).holds()
    assert not Margin(-1e-6, 10.0).holds()
    assert Margin(2.0, 4.0).relative == 0.5
    assert Margin(0.0, 0.0).relative == 0.0


def test_volume_quadrature_integrates_area(sine_mesh):
    quad = volume_quadrature(sine_mesh)
    assert quad.weights.sum() == pytest.approx(make_domain("sine(0.3)", R=1.5).area(), rel=1e-12)


def test_edge_quadrature_normals_point_up(sine_mesh):
    profile = edge_quadrature(sine_mesh, GAMMA_PROFILE)
    assert np.all(profile.normals[:, 1] > 0)
    assert np.allclose(np.linalg.norm(profile.normals, axis=1), 1.0)
    assert profile.weights.sum() == pytest.approx(sine_mesh.profile.arc_length())
    top = edge_quadrature(sine_mesh, GAMMA_R_PLUS)
    assert top.weights.sum() == pytest.approx(2 * np.pi)
    assert np.allclose(top.normals, [0.0, 1.0])


def test_rellich_identity_for_plane_wave(unit_flat_mesh, wave):
    v = plane_wave(1.0, wave.alpha, wave.beta)
    assert rellich_residual(v, 0.3, unit_flat_mesh, k=wave.k) <= RELLICH_TOL


def test_rellich_identity_without_helmholtz_equation(unit_flat_mesh, wave):
    v = ManufacturedField((ModeTerm(coeff=1.0, power=2), ModeTerm(coeff=0.5j, order=1, kappa=0.4)), wave.alpha)
    assert np.abs(v.helmholtz_defect(0.1, 0.5, wave.k)) > 0.1
    assert rellich_residual(v, 0.0, unit_flat_mesh, k=wave.k) <= RELLICH_TOL


def test_rellich_identity_on_sine_profile(sine_mesh, wave):
    v = plane_wave(1.0, wave.alpha, wave.beta) + plane_wave(0.5j, wave.alpha, 0.7, order=1)
    assert rellich_residual(v, -0.5, sine_mesh, k=wave.k) <= RELLICH_TOL


def test_rellich_corollary_for_vanishing_field(unit_flat_mesh, wave):
    v = flat_dirichlet_oracle(wave).upper
    assert rellich_residual(v, -0.5, unit_flat_mesh, k=wave.k, corollary=True) <= RELLICH_TOL


def test_rellich_corollary_fails_for_nonvanishing_field(unit_flat_mesh, wave):
    # the corollary drops Γ terms that only vanish when v = 0 there
    v = plane_wave(1.0, wave.alpha, wave.beta)
    assert rellich_residual(v, 0.3, unit_flat_mesh, k=wave.k, corollary=True) > 1e-3


def test_rellich_needs_one_sided_domain(two_sided_mesh, wave):
    with pytest.raises(ValueError):
        rellich_residual(plane_wave(1.0, wave.alpha, wave.beta), 0.0, two_sided_mesh)


def test_transmission_rellich_identity(two_sided_mesh, wave):
    oracle = flat_transmission_oracle(wave, 2.0, 1.0)
    residual = transmission_rellich_residual(oracle.upper, oracle.lower, two_sided_mesh, wave.k, 2.0, 1.0)
    assert residual < 1e-8


def test_trace_inequality_for_random_fields(unit_flat_mesh, rng):
    for _ in range(5):
        v = random_field(rng, "dirichlet", c=0.0)
        assert trace_inequality_check(v, unit_flat_mesh, k=float(rng.uniform(0.5, 3.0))).holds()


def test_trace_inequality_rejects_nonvanishing_field(unit_flat_mesh, wave):
    with pytest.raises(ValueError, match="vanish"):
        trace_inequality_check(plane_wave(1.0, wave.alpha, wave.beta), unit_flat_mesh, k=wave.k)
    with pytest.raises(ValueError):
        trace_inequality_check(plane_wave(1.0, wave.alpha, wave.beta))


def test_poincare_inequality_for_random_fields(sine_mesh, rng):
    for _ in range(5):
        margin = poincare_check(random_field(rng, "free"), sine_mesh)
        assert margin.holds()
        assert margin.name == "poincare"


def test_inequalities_on_solved_field(sine_mesh, wave):
    field = solve(assemble(Dirichlet(), sine_mesh, wave, default_truncation(wave.k)))
    assert trace_inequality_check(field).holds()
    assert poincare_check(field).holds()


def test_mode_amplitude_on_absorbed_field(flat_mesh, wave):
    # matched impedance leaves only the incident wave
    field = solve(assemble(Impedance(wave.beta), flat_mesh, wave, default_truncation(wave.k)))
    margin = mode_amplitude_check(field)
    assert margin.holds()
    assert margin.value == pytest.approx(np.sqrt(1.5) - 1.0, abs=2e-2)


def test_mode_amplitude_single_mode_is_sharp(wave):
    single = RayleighSpectrum(coeffs=np.array([1.0 + 0j]), alpha=wave.alpha, height=2.0, k=wave.k)
    margin = mode_amplitude_check(single, gamma_max=0.5)
    assert margin.value == pytest.approx(0.0, abs=1e-14)
    assert margin.holds()


def test_mode_amplitude_counts_evanescent_layer(wave):
    coeffs = np.zeros(5, dtype=complex)
    coeffs[4] = 1.0
    spectrum = RayleighSpectrum(coeffs=coeffs, alpha=wave.alpha, height=2.0, k=wave.k)
    assert mode_amplitude_check(spectrum).value > 1.0


def test_mode_amplitude_inputs(wave):
    spectrum = RayleighSpectrum(coeffs=np.ones(3), alpha=wave.alpha, height=1.2, k=wave.k)
    with pytest.raises(ValueError, match="R - 1 > gamma_max"):
        mode_amplitude_check(spectrum, gamma_max=0.5)
    with pytest.raises(ValueError, match="spectrum or a solved field"):
        mode_amplitude_check(plane_wave(1.0, wave.alpha, wave.beta))


def test_vertical_derivative_estimate_for_flat_oracle(unit_flat_mesh, wave):
    margin = vertical_derivative_check(flat_dirichlet_oracle(wave).upper, unit_flat_mesh, k=wave.k)
    assert margin.name == "vertical_derivative"
    assert margin.holds()
    assert margin.relative > 1e-3


def test_vertical_derivative_estimate_rejects_nonvanishing_field(unit_flat_mesh, wave):
    with pytest.raises(ValueError, match="vanish"):
        vertical_derivative_check(plane_wave(1.0, wave.alpha, wave.beta), unit_flat_mesh, k=wave.k)
    with pytest.raises(ValueError, match="mesh and a wavenumber"):
        vertical_derivative_check(flat_dirichlet_oracle(wave).upper)


def test_estimates_on_solved_sine_field(sine_mesh, wave):
    field = solve(assemble(Dirichlet(), sine_mesh, wave, default_truncation(wave.k)))
    assert vertical_derivative_check(field).holds()
    top = top_line_estimate_check(field)
    assert top.name == "top_line"
    assert top.holds()


def test_top_line_terms_of_flat_oracle(wave):
    # one propagating order carries the whole top-line integral: 2π·2β²|ũ₀|²
    R = 1.0
    spectrum = flat_dirichlet_oracle(wave).upper.trace_spectrum(R, wave.k, N=3)
    terms = top_line_terms(spectrum, wave)
    trace = 4.0 * np.sin(wave.beta * R) ** 2
    assert terms.rellich == pytest.approx(4.0 * np.pi * wave.beta ** 2 * trace, rel=1e-12)
    assert terms.reflection == pytest.approx(-1.0, abs=1e-12)
    margin = top_line_estimate_check(spectrum, wave)
    assert margin.value == pytest.approx(4.0 * np.pi * wave.beta * (wave.k - wave.beta) * trace, rel=1e-10)


def test_top_line_margin_of_single_oblique_order(wave):
    coeffs = np.zeros(5, dtype=complex)
    coeffs[1] = 0.5 - 0.2j
    spectrum = RayleighSpectrum(coeffs=coeffs, alpha=wave.alpha, height=2.0, k=wave.k)
    # order -1 is the only other propagating order; a zero order-0 trace adds nothing
    beta = np.sqrt(wave.k ** 2 - (wave.alpha - 1.0) ** 2)
    margin = top_line_estimate_check(spectrum, wave)
    assert margin.value == pytest.approx(4.0 * np.pi * beta * (wave.k - beta) * abs(coeffs[1]) ** 2, rel=1e-10)
    assert margin.holds()


def test_top_line_estimate_is_sharp_at_normal_incidence(rng):
    wave = IncidentWave.from_degrees(0.8, 0.0)
    spectrum = RayleighSpectrum(
        coeffs=rng.normal(size=7) + 1j * rng.normal(size=7), alpha=wave.alpha, height=1.5, k=wave.k
    )
    margin = top_line_estimate_check(spectrum, wave)
    assert margin.value == pytest.approx(0.0, abs=1e-10 * margin.scale)
    assert margin.holds()


def test_top_line_spectrum_must_match_wave(wave):
    spectrum = RayleighSpectrum(coeffs=np.ones(3), alpha=wave.alpha + 0.1, height=2.0, k=wave.k)
    with pytest.raises(ValueError, match="share k and alpha"):
        top_line_terms(spectrum, wave)
    with pytest.raises(ValueError, match="incident wave"):
        top_line_estimate_check(spectrum)


def test_field_error_detects_perturbed_oracle(flat_mesh, wave):
    field = solve(assemble(Dirichlet(), flat_mesh, wave, default_truncation(wave.k)))
    oracle = flat_dirichlet_oracle(wave)
    exact = field_error(field, oracle.upper).l2_relative
    shifted = field_error(field, oracle.perturbed(0.1).fields()).l2_relative
    assert exact < 5e-2
    assert shifted > exact


def test_auxiliary_bound_holds_on_flat_impedance(wave):
    mesh = make_mesh("flat(0)", R=1.5, h=0.3)
    meshes = [mesh, refine(mesh)]
    bc = Impedance(1.0)
    fields = [solve(assemble(bc, m, wave, default_truncation(wave.k))) for m in meshes]
    report = auxiliary_bound_check(fields)
    assert report.status == PASS
    assert 0 < report.ratio <= 1.0
    assert len(report.ratios) == 2
    assert report.C_tilde > 1.0


def test_auxiliary_bound_needs_gap_below_profile(wave):
    mesh = make_mesh("flat(0)", R=1.5, h=0.4, f_minus=-0.5)
    field = solve(assemble(Impedance(1.0), mesh, wave, default_truncation(wave.k)))
    report = auxiliary_bound_check(field)
    assert report.status == NO_CERTIFICATE
    assert np.isnan(report.ratio)


def test_convergence_study_needs_three_levels(wave):
    with pytest.raises(ValueError):
        convergence_study(make_domain(), wave, Dirichlet(), 0.4, levels=2)


@pytest.mark.slow
@pytest.mark.parametrize("order, low, high", [(1, 1.8, 2.2), (2, 2.7, 3.3)])
def test_convergence_rates_on_flat_grating(wave, order, low, high):
    report = convergence_study(make_domain("flat(0)", R=1.5, h=0.4), wave, Dirichlet(), 0.4, fe_order=order)
    assert report.reference == "oracle"
    assert report.monotone
    assert low <= report.l2_slope <= high


def test_convergence_study_uses_finest_level_without_closed_form(wave):
    report = convergence_study(make_domain("sine(0.3)", R=1.5, h=0.6), wave, Dirichlet(), 0.6, fe_order=1)
    assert report.reference == "finest"
    assert len(report.l2_errors) == 2
    assert report.l2_errors[1] < report.l2_errors[0]


@pytest.mark.parametrize("name", RANDOM_SUITES)
def test_randomized_suites_pass(name):
    result = randomized_suite(name, trials=20, seed=2718)
    assert result.passed
    assert result.trials == 20
    assert result.worst_relative >= -1e-9


def test_randomized_suite_is_reproducible():
    first = randomized_suite("mode_amplitude", trials=10, seed=7)
    second = randomized_suite("mode_amplitude", trials=10, seed=7)
    assert first.worst_relative == second.worst_relative
    with pytest.raises(ValueError):
        randomized_suite("hardy")
