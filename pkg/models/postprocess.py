"""Rayleigh spectra, efficiencies and energy norms of solved fields."""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from models.dtn import ModeExponents, RayleighSpectrum
from models.elements import tabulate, tabulate_gradients
from models.fem_core import (
    line_segments,
    boundary_mass,
    global_mass,
    shifted_energy_matrix,
    trace_mode_matrix,
)
from models.geometry import Dirichlet, Impedance, Transmission
from models.mesh import GAMMA_PROFILE, LOWER, UPPER
from utils.quadrature import line_rule

logger = logging.getLogger(__name__)


@dataclass
class EfficiencyTable:
    reflection: dict = field(default_factory=dict)
    transmission: dict = field(default_factory=dict)
    absorption: float = 0.0
    balance_defect: float = 0.0
    reliable: bool = True

    @property
    def total(self):
        return sum(self.reflection.values()) + sum(self.transmission.values()) + self.absorption

    def to_frame(self):
        rows = [{"side": "reflection", "order": n, "efficiency": e} for n, e in sorted(self.reflection.items())]
        rows += [{"side": "transmission", "order": n, "efficiency": e} for n, e in sorted(self.transmission.items())]
        return pd.DataFrame(rows, columns=["side", "order", "efficiency"])


def _region_below(field, height):
    mesh = field.mesh
    if not mesh.two_sided:
        return False
    floor = mesh.profile.gamma_min if mesh.profile is not None else 0.0
    return height < floor


def rayleigh_coefficients(field, height, N):
    """Total-field trace coefficients ũ_n = (1/2π)∫u(x₁, h)e^{−iα_n x₁}dx₁ by exact segment integration"""
    P = trace_mode_matrix(field.space, height, N)
    coeffs = P @ field.dofs
    region = LOWER if _region_below(field, height) else UPPER
    return RayleighSpectrum(
        coeffs=coeffs,
        alpha=field.quasimomentum,
        height=float(height),
        k=float(field.region_wavenumber(region)),
    )


def scattered_coefficients(spectrum, wave, side="upper"):
    """Rayleigh amplitudes u_n (or u_n⁻ below the grating) from total trace coefficients"""
    exponents = spectrum.exponents
    h = spectrum.height
    if side == "upper":
        coeffs = spectrum.coeffs.copy()
        coeffs[spectrum.N] -= wave.gamma * np.exp(-1j * wave.beta * h)
        coeffs = coeffs * np.exp(-1j * exponents.beta_n * h)
    elif side == "lower":
        coeffs = spectrum.coeffs * np.exp(1j * exponents.beta_n * h)
    else:
        raise ValueError(f"side must be 'upper' or 'lower', got {side!r}")
    return spectrum.with_coeffs(coeffs)


def _flux_efficiencies(amplitudes, exponents, wave, weight):
    result = {}
    norm = abs(wave.gamma) ** 2
    for n, a, beta, propagating in zip(exponents.orders, amplitudes.coeffs, exponents.beta_n, exponents.propagating):
        if propagating:
            result[int(n)] = float(weight * beta.real / wave.beta * abs(a) ** 2 / norm)
    return result


def efficiencies(spectra, wave, bc, field=None):
    """Flux-normalized efficiencies of the propagating orders.

    ``spectra`` holds the total-field spectrum on Γ_R and, for transmission,
    the one on Γ_R⁻. For impedance gratings the absorbed fraction is taken
    from ``field`` when given.
    """
    if abs(wave.gamma) == 0:
        raise ValueError("efficiencies are undefined for zero incident amplitude")
    if isinstance(spectra, RayleighSpectrum):
        spectra = (spectra,)

    upper = spectra[0]
    upper_exp = upper.exponents
    table = EfficiencyTable()
    table.reflection = _flux_efficiencies(scattered_coefficients(upper, wave, "upper"), upper_exp, wave, 1.0)
    reliable = not upper_exp.wood_anomaly

    if isinstance(bc, Transmission):
        if len(spectra) < 2:
            raise ValueError("transmission efficiencies need the lower spectrum")
        lower = spectra[1]
        lower_exp = lower.exponents
        table.transmission = _flux_efficiencies(scattered_coefficients(lower, wave, "lower"), lower_exp, wave, bc.lam)
        reliable = reliable and not lower_exp.wood_anomaly
    elif isinstance(bc, Impedance) and field is not None:
        table.absorption = absorbed_fraction(field, bc.lam, wave)
    elif not isinstance(bc, (Dirichlet, Impedance)):
        raise ValueError(f"unknown boundary model {bc!r}")

    table.balance_defect = float(abs(table.total - 1.0))
    table.reliable = reliable
    if not reliable:
        logger.warning("Wood anomaly: balance defect %.3g is unreliable", table.balance_defect)
    return table


def _triangle_weights(field, bc=None):
    """Per-triangle (k, a) for the energy norms"""
    regions = field.mesh.region_tags
    k_t = np.array([field.region_wavenumber(region) for region in regions], dtype=float)
    a_t = np.ones(len(regions))
    if isinstance(bc, Transmission):
        lower = regions == LOWER
        k_t[lower] = bc.k_minus
        a_t[lower] = bc.lam
    return k_t, a_t


def _quadratic_form(matrix, dofs):
    return float(max(np.vdot(dofs, matrix @ dofs).real, 0.0))


def norm_XR(field, wave=None):
    """(k²‖u‖² + ‖∇u‖²)^{1/2} of the physical field over Ω_R"""
    k_t, a_t = _triangle_weights(field)
    if wave is not None:
        k_t = np.full_like(k_t, wave.k)
    energy = shifted_energy_matrix(field.space, field.quasimomentum, k_t, a_t)
    return np.sqrt(_quadratic_form(energy, field.dofs))


def norm_H1alpha_weighted(field, bc):
    """(∫ a|∇u|² + a k²|u|²)^{1/2} over S_R with a = 1, k₊ above Γ and a = λ, k₋ below"""
    k_t, a_t = _triangle_weights(field, bc)
    energy = shifted_energy_matrix(field.space, field.quasimomentum, k_t, a_t)
    return np.sqrt(_quadratic_form(energy, field.dofs))


def region_energy(field, bc, region):
    """Weighted energy restricted to one region"""
    k_t, a_t = _triangle_weights(field, bc)
    a_t = np.where(field.mesh.region_tags == region, a_t, 0.0)
    energy = shifted_energy_matrix(field.space, field.quasimomentum, k_t, a_t)
    return _quadratic_form(energy, field.dofs)


def trace_half_norm(spectrum, k):
    """(Σ (k² + α_n²)^{1/2}|ũ_n|²)^{1/2}"""
    alpha_n = spectrum.orders + spectrum.alpha
    return float(np.sqrt(np.sum(np.sqrt(k * k + alpha_n * alpha_n) * np.abs(spectrum.coeffs) ** 2)))


def l2_norm(field, region=None):
    triangles = None if region is None else field.mesh.triangles_in(region)
    return np.sqrt(_quadratic_form(global_mass(field.space, triangles), field.dofs))


def boundary_l2_norm(field, tag=GAMMA_PROFILE):
    return np.sqrt(_quadratic_form(boundary_mass(field.space, tag), field.dofs))


def absorbed_fraction(field, lam, wave):
    """λ∫_Γ|u|²ds / (2πβ|γ|²), the power fraction absorbed by an impedance profile"""
    return float(lam * boundary_l2_norm(field, GAMMA_PROFILE) ** 2 / (2.0 * np.pi * wave.beta * abs(wave.gamma) ** 2))


def trace_energy(field, height):
    """∫₀^{2π}|u(x₁, height)|²dx₁ from the FE trace"""
    t, w = line_rule(2 * field.space.order)
    total = 0.0
    for cell, ref_p, ref_q, x0, x1 in line_segments(field.space, height):
        points = ref_p[None, :] + t[:, None] * (ref_q - ref_p)[None, :]
        values = tabulate(field.space.order, points) @ field.dofs[field.space.cell_dofs[cell]]
        total += (x1 - x0) * float(np.sum(w * np.abs(values) ** 2))
    return total


def parseval_energy(spectrum):
    """2πΣ|ũ_n|²"""
    return float(2.0 * np.pi * np.sum(np.abs(spectrum.coeffs) ** 2))


def _profile_edge_cells(space):
    owner = {}
    for t, tri in enumerate(space.mesh.triangles):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
            # Profile edges take the triangle above Γ
            if space.mesh.region_tags[t] == UPPER:
                owner[key] = t
    return owner


def normal_flux_norm(field, tag=GAMMA_PROFILE):
    """‖∂_ν u‖_{L²(Γ)} from the element gradient trace of the triangles above Γ"""
    space = field.space
    mesh = space.mesh
    owner = _profile_edge_cells(space)
    t, w = line_rule(2 * space.order)
    q = field.quasimomentum
    total = 0.0

    for v0, v1 in mesh.edges_with_tag(tag):
        cell = owner[(min(v0, v1), max(v0, v1))]
        p0, p1 = mesh.vertices[v0], mesh.vertices[v1]
        tangent = p1 - p0
        length = float(np.hypot(*tangent))
        if tangent[0] < 0:
            tangent = -tangent
        normal = np.array([-tangent[1], tangent[0]]) / length

        inverse = space.inverse_jacobians[cell]
        ref0 = inverse @ (p0 - space.origin[cell])
        ref1 = inverse @ (p1 - space.origin[cell])
        points = ref0[None, :] + t[:, None] * (ref1 - ref0)[None, :]

        local = field.dofs[space.cell_dofs[cell]]
        values = tabulate(space.order, points) @ local
        grads = np.einsum("kd,qik->qid", inverse, tabulate_gradients(space.order, points))
        gradient = np.einsum("qid,i->qd", grads, local)
        flux = gradient @ normal + 1j * q * normal[0] * values
        total += length * float(np.sum(w * np.abs(flux) ** 2))

    return np.sqrt(total)


def propagating_orders(spectrum):
    exponents = ModeExponents.build(spectrum.k, spectrum.alpha, spectrum.N)
    return exponents.orders[exponents.propagating]
