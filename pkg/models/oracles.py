"""Closed-form fields: manufactured solutions, flat-profile oracles and random test fields.

A manufactured field is a finite sum of separable terms

    coeff · e^{i(n + q)x₁} · (x₂ − shift)^power · e^{iκx₂}

so it is q-quasiperiodic by construction and its gradient, Laplacian and
trace coefficients are exact.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from models.dtn import RayleighSpectrum, beta_from_alpha
from models.geometry import TWO_PI, Dirichlet, Impedance, Transmission
from models.mesh import LOWER, UPPER

logger = logging.getLogger(__name__)

RANDOM_MODES = 10
MAX_ORDER = 5


@dataclass(frozen=True)
class ModeTerm:
    coeff: complex
    order: int = 0
    kappa: complex = 0.0
    power: int = 0
    shift: float = 0.0

    def __post_init__(self):
        if self.power < 0:
            raise ValueError(f"power must be nonnegative, got {self.power}")

    def profile(self, x2):
        """g, g′, g″ of the x₂ factor"""
        s = np.asarray(x2, dtype=float) - self.shift
        m = self.power
        kappa = complex(self.kappa)
        exp = np.exp(1j * kappa * np.asarray(x2, dtype=float))
        p = s ** m if m else np.ones_like(s)
        dp = m * s ** (m - 1) if m >= 1 else np.zeros_like(s)
        ddp = m * (m - 1) * s ** (m - 2) if m >= 2 else np.zeros_like(s)
        g = p * exp
        dg = (dp + 1j * kappa * p) * exp
        ddg = (ddp + 2j * kappa * dp - kappa * kappa * p) * exp
        return g, dg, ddg


@dataclass(frozen=True)
class ManufacturedField:
    terms: tuple
    quasimomentum: float = 0.0
    description: str = ""

    def _evaluate(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        value = np.zeros(x1.shape, dtype=complex)
        d1 = np.zeros_like(value)
        d2 = np.zeros_like(value)
        laplacian = np.zeros_like(value)
        for term in self.terms:
            a_n = term.order + self.quasimomentum
            e = complex(term.coeff) * np.exp(1j * a_n * x1)
            g, dg, ddg = term.profile(x2)
            value += e * g
            d1 += 1j * a_n * e * g
            d2 += e * dg
            laplacian += e * (ddg - a_n * a_n * g)
        return value, d1, d2, laplacian

    def value(self, x1, x2):
        return self._evaluate(x1, x2)[0]

    def gradient(self, x1, x2):
        """∇v with the components in the last axis"""
        _, d1, d2, _ = self._evaluate(x1, x2)
        return np.stack([d1, d2], axis=-1)

    def laplacian(self, x1, x2):
        return self._evaluate(x1, x2)[3]

    def helmholtz_defect(self, x1, x2, k):
        """Δv + k²v"""
        value, _, _, laplacian = self._evaluate(x1, x2)
        return laplacian + k * k * value

    def samples(self, points):
        """(value, gradient, laplacian) at an (n, 2) array of points"""
        points = np.asarray(points, dtype=float)
        value, d1, d2, laplacian = self._evaluate(points[..., 0], points[..., 1])
        return value, np.stack([d1, d2], axis=-1), laplacian

    def trace_spectrum(self, height, k, N=None):
        """Exact coefficients of the periodic factor on x₂ = height"""
        top = max((abs(term.order) for term in self.terms), default=0)
        N = top if N is None else int(N)
        if N < top:
            raise ValueError(f"N = {N} cannot hold order {top}")
        coeffs = np.zeros(2 * N + 1, dtype=complex)
        for term in self.terms:
            g, _, _ = term.profile(np.array([height]))
            coeffs[term.order + N] += complex(term.coeff) * g[0]
        return RayleighSpectrum(coeffs=coeffs, alpha=self.quasimomentum, height=float(height), k=float(k))

    def scaled(self, factor):
        terms = tuple(replace(term, coeff=factor * complex(term.coeff)) for term in self.terms)
        return replace(self, terms=terms)

    def __add__(self, other):
        if not np.isclose(self.quasimomentum, other.quasimomentum):
            raise ValueError("fields must share the quasimomentum")
        description = " + ".join(d for d in (self.description, other.description) if d)
        return ManufacturedField(self.terms + other.terms, self.quasimomentum, description)


def plane_wave(amplitude, alpha, kappa, order=0):
    return ManufacturedField((ModeTerm(coeff=amplitude, order=order, kappa=kappa),), alpha, "plane wave")


def sine_terms(amplitude, order, kappa, shift):
    """Terms of amplitude·e^{iα_n x₁}·sin(κ(x₂ − shift))"""
    half = amplitude / 2j
    return (
        ModeTerm(coeff=half * np.exp(-1j * kappa * shift), order=order, kappa=kappa),
        ModeTerm(coeff=-half * np.exp(1j * kappa * shift), order=order, kappa=-kappa),
    )


# ---------------------------------------------------------------------------
# Flat-profile oracles
# ---------------------------------------------------------------------------

@dataclass
class FlatOracle:
    """Exact total field(s) and order-0 Rayleigh amplitudes of a flat grating f ≡ c"""
    upper: ManufacturedField
    reflection: complex
    spectrum: RayleighSpectrum
    lower: Optional[ManufacturedField] = None
    transmission: Optional[complex] = None
    lower_spectrum: Optional[RayleighSpectrum] = None
    coefficients: dict = field(default_factory=dict)

    def fields(self):
        result = {UPPER: self.upper}
        if self.lower is not None:
            result[LOWER] = self.lower
        return result

    def perturbed(self, eps):
        """Every field and amplitude scaled by 1 + eps"""
        factor = 1.0 + eps
        return FlatOracle(
            upper=self.upper.scaled(factor),
            reflection=factor * self.reflection,
            spectrum=self.spectrum.with_coeffs(factor * self.spectrum.coeffs),
            lower=None if self.lower is None else self.lower.scaled(factor),
            transmission=None if self.transmission is None else factor * self.transmission,
            lower_spectrum=None if self.lower_spectrum is None else self.lower_spectrum.with_coeffs(factor * self.lower_spectrum.coeffs),
            coefficients=dict(self.coefficients),
        )


def _amplitude_spectrum(amplitude, wave, k=None):
    return RayleighSpectrum(coeffs=np.array([amplitude]), alpha=wave.alpha, height=0.0, k=float(k or wave.k))


def flat_dirichlet_oracle(wave, c=0.0):
    """u = γe^{iαx₁−iβx₂} − γe^{−2iβc}e^{iαx₁+iβx₂}; u₀ = −γe^{−2iβc}"""
    reflection = -wave.gamma * np.exp(-2j * wave.beta * c)
    upper = ManufacturedField(
        (ModeTerm(coeff=wave.gamma, kappa=-wave.beta), ModeTerm(coeff=reflection, kappa=wave.beta)),
        wave.alpha,
        f"flat dirichlet c={c:g}",
    )
    return FlatOracle(upper=upper, reflection=complex(reflection), spectrum=_amplitude_spectrum(reflection, wave))


def flat_impedance_oracle(wave, lam, c=0.0):
    """Reflection A = γe^{−2iβc}(β−λ)/(β+λ) off the absorbing line f ≡ c"""
    if not lam > 0:
        raise ValueError(f"surface impedance must be positive, got lambda = {lam}")
    beta = wave.beta
    reflection = wave.gamma * np.exp(-2j * beta * c) * (beta - lam) / (beta + lam)
    upper = ManufacturedField(
        (ModeTerm(coeff=wave.gamma, kappa=-beta), ModeTerm(coeff=reflection, kappa=beta)),
        wave.alpha,
        f"flat impedance lambda={lam:g} c={c:g}",
    )
    return FlatOracle(upper=upper, reflection=complex(reflection), spectrum=_amplitude_spectrum(reflection, wave))


def fresnel_coefficients(beta_plus, beta_minus, lam):
    denominator = beta_plus + lam * beta_minus
    if abs(denominator) == 0:
        raise ValueError("beta_plus + lambda*beta_minus vanishes")
    return (beta_plus - lam * beta_minus) / denominator, 2.0 * beta_plus / denominator


def fresnel_flux_defect(r, t, beta_plus, beta_minus, lam):
    """|r|²β⁺ + λ|t|²Re β⁻ − β⁺; zero for every lossless flat interface"""
    beta_plus = complex(beta_plus).real
    return float(abs(r) ** 2 * beta_plus + lam * abs(t) ** 2 * complex(beta_minus).real - beta_plus)


def flat_transmission_oracle(wave, k_minus, lam, c=0.0):
    """Fresnel pair r = (β⁺−λβ⁻)/(β⁺+λβ⁻), t = 2β⁺/(β⁺+λβ⁻) for the interface x₂ = c"""
    beta_plus = complex(wave.beta)
    beta_minus = complex(beta_from_alpha(k_minus, wave.alpha))
    r, t = fresnel_coefficients(beta_plus, beta_minus, lam)
    phase = np.exp(-1j * beta_plus * c)

    reflection = wave.gamma * r * phase * phase
    transmission = wave.gamma * t * phase * np.exp(1j * beta_minus * c)
    upper = ManufacturedField(
        (ModeTerm(coeff=wave.gamma, kappa=-beta_plus), ModeTerm(coeff=reflection, kappa=beta_plus)),
        wave.alpha,
        f"flat transmission upper k-={k_minus:g} lambda={lam:g}",
    )
    lower = ManufacturedField(
        (ModeTerm(coeff=transmission, kappa=-beta_minus),),
        wave.alpha,
        f"flat transmission lower k-={k_minus:g} lambda={lam:g}",
    )
    if abs(beta_minus.imag) > 0:
        logger.debug("evanescent transmitted wave: beta- = %s", beta_minus)
    return FlatOracle(
        upper=upper,
        reflection=complex(reflection),
        spectrum=_amplitude_spectrum(reflection, wave),
        lower=lower,
        transmission=complex(transmission),
        lower_spectrum=_amplitude_spectrum(transmission, wave, k=k_minus),
        coefficients={
            "r": complex(r),
            "t": complex(t),
            "beta_plus": beta_plus,
            "beta_minus": beta_minus,
            "flux_defect": fresnel_flux_defect(r, t, beta_plus, beta_minus, lam),
        },
    )


def flat_auxiliary_oracle(wave, down, up, c, R):
    """Solution of the auxiliary problem on a flat cell for a one-mode source.

    The source is u = e^{iαx₁}(down·e^{−iβx₂} + up·e^{iβx₂}). Then
    w = e^{−iαx₁}W(x₂) with W″ + β²W = conj(down)e^{iβx₂} + conj(up)e^{−iβx₂},
    W(c) = 0 and W′(R) = iβW(R). The forcing is resonant, so the particular
    part is x₂e^{±iβx₂}/(±2iβ).
    """
    beta = wave.beta
    if not beta > 0:
        raise ValueError("auxiliary oracle needs a propagating order 0")
    q = -wave.alpha
    particular = ManufacturedField(
        (
            ModeTerm(coeff=np.conj(down) / (2j * beta), kappa=beta, power=1),
            ModeTerm(coeff=np.conj(up) / (-2j * beta), kappa=-beta, power=1),
        ),
        q,
    )
    value_c = particular.value(0.0, c)
    value_R = particular.value(0.0, R)
    slope_R = particular.gradient(0.0, R)[1]

    # Only e^{−iβx₂} feels the radiation condition
    Q = (slope_R - 1j * beta * value_R) / (2j * beta * np.exp(-1j * beta * R))
    P = -(value_c + Q * np.exp(-1j * beta * c)) * np.exp(-1j * beta * c)
    homogeneous = ManufacturedField(
        (ModeTerm(coeff=complex(P), kappa=beta), ModeTerm(coeff=complex(Q), kappa=-beta)),
        q,
    )
    result = particular + homogeneous
    return replace(result, description=f"flat auxiliary c={c:g} R={R:g}")


def flat_oracle(bc, wave, c=0.0):
    """Closed-form solution for the boundary model on the flat profile f ≡ c"""
    if isinstance(bc, Dirichlet):
        return flat_dirichlet_oracle(wave, c)
    if isinstance(bc, Impedance):
        return flat_impedance_oracle(wave, bc.lam, c)
    if isinstance(bc, Transmission):
        return flat_transmission_oracle(wave, bc.k_minus, bc.lam, c)
    raise ValueError(f"unknown boundary model {bc!r}")


# ---------------------------------------------------------------------------
# Random fields for the inequality suites
# ---------------------------------------------------------------------------

def _random_coefficient(rng):
    return complex(rng.normal(), rng.normal())


def random_field(rng, kind="dirichlet", c=0.0, n_modes=RANDOM_MODES, alpha=None, max_order=MAX_ORDER):
    """Random trigonometric/polynomial field.

    ``dirichlet`` fields vanish on the line x₂ = c (sine and (x₂−c)^m
    factors); ``free`` fields do not (exponential and constant factors).
    """
    if alpha is None:
        alpha = float(rng.uniform(-0.5, 0.5))
    terms = []
    for _ in range(n_modes):
        order = int(rng.integers(-max_order, max_order + 1))
        coeff = _random_coefficient(rng)
        kappa = float(rng.uniform(0.2, 3.0))
        if kind == "dirichlet":
            if rng.random() < 0.7:
                terms.extend(sine_terms(coeff, order, kappa, c))
            else:
                terms.append(ModeTerm(coeff=coeff, order=order, power=int(rng.integers(1, 4)), shift=c))
        elif kind == "free":
            if rng.random() < 0.8:
                terms.append(ModeTerm(coeff=coeff, order=order, kappa=kappa * rng.choice([-1.0, 1.0])))
            else:
                terms.append(ModeTerm(coeff=coeff, order=order))
        else:
            raise ValueError(f"unknown random field kind {kind!r}")
    return ManufacturedField(tuple(terms), alpha, f"random {kind}")


def random_spectrum(rng, k, alpha, N=MAX_ORDER, height=0.0):
    """Random spectrum with geometrically decaying evanescent tail"""
    orders = np.arange(-N, N + 1)
    decay = np.exp(-0.3 * np.abs(orders) * rng.uniform(0.0, 2.0))
    coeffs = (rng.normal(size=len(orders)) + 1j * rng.normal(size=len(orders))) * decay
    return RayleighSpectrum(coeffs=coeffs, alpha=alpha, height=height, k=k)


def quasiperiodicity_defect(v, x1, x2):
    """max |v(x₁+2π, x₂) − e^{2iπq}v(x₁, x₂)|"""
    shifted = v.value(np.asarray(x1) + TWO_PI, x2)
    return float(np.max(np.abs(shifted - np.exp(2j * np.pi * v.quasimomentum) * v.value(x1, x2))))
