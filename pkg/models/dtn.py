"""Rayleigh-expansion arithmetic: exponents, DtN maps and the incident functional."""
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

WOOD_TOL = 1e-8
EXTRA_MODES = 10
DTN_VARIANTS = ("T", "T_hat", "T_plus", "T_minus")


def beta_from_alpha(k, alpha_n):
    """Vectorized two-case exponent: √(k²−α²) if |α| ≤ k, else i√(α²−k²)"""
    alpha_n = np.asarray(alpha_n, dtype=float)
    gap = k * k - alpha_n * alpha_n
    propagating = np.abs(alpha_n) <= k
    return np.where(
        propagating,
        np.sqrt(np.where(propagating, np.maximum(gap, 0.0), 0.0)) + 0.0j,
        1j * np.sqrt(np.where(propagating, 0.0, -gap)),
    )


def beta_n(k, alpha, n):
    """Propagation exponent β_n for the α-quasiperiodic family"""
    if not k > 0:
        raise ValueError(f"wavenumber must be positive, got k = {k}")
    value = complex(beta_from_alpha(k, n + alpha))
    if abs(value) < WOOD_TOL * k:
        logger.warning("Wood anomaly: |beta_%d| = %.3g at k = %g, alpha = %g", n, abs(value), k, alpha)
    return value


def beta_hat_n(k, alpha, n):
    """Exponent of the hatted (−α) family"""
    return beta_n(k, -alpha, n)


def is_wood_anomaly(k, beta):
    return bool(np.any(np.abs(beta) < WOOD_TOL * k))


@dataclass(frozen=True)
class ModeExponents:
    k: float
    alpha: float
    orders: np.ndarray
    alpha_n: np.ndarray
    beta_n: np.ndarray

    @classmethod
    def build(cls, k, alpha, N):
        if not k > 0:
            raise ValueError(f"wavenumber must be positive, got k = {k}")
        if N < 0:
            raise ValueError(f"truncation order must be nonnegative, got N = {N}")
        orders = np.arange(-N, N + 1)
        alpha_n = orders + alpha
        return cls(k=float(k), alpha=float(alpha), orders=orders, alpha_n=alpha_n, beta_n=beta_from_alpha(k, alpha_n))

    @property
    def N(self):
        return (len(self.orders) - 1) // 2

    @property
    def propagating(self):
        return np.abs(self.alpha_n) <= self.k

    @property
    def wood_anomaly(self):
        return is_wood_anomaly(self.k, self.beta_n)

    def index(self, n):
        return int(n) + self.N


def mode_exponents(k, alpha, N):
    exponents = ModeExponents.build(k, alpha, N)
    if exponents.wood_anomaly:
        logger.warning("Wood anomaly in truncated mode set (k = %g, alpha = %g)", k, alpha)
    return exponents


def default_truncation(k, alpha=0.0):
    """Default DtN order ceil(k) + 10, checked to contain every propagating order"""
    N = int(np.ceil(k)) + EXTRA_MODES
    check_truncation(k, alpha, N)
    return N


def check_truncation(k, alpha, N):
    lowest = int(np.ceil(-k - alpha - 1e-12))
    highest = int(np.floor(k - alpha + 1e-12))
    if lowest < -N or highest > N:
        raise ValueError(
            f"truncation N = {N} misses propagating orders {lowest}..{highest} (k = {k}, alpha = {alpha})"
        )


@dataclass(frozen=True)
class RayleighSpectrum:
    """Coefficients g_n of Σ g_n e^{i(n+alpha)x₁}, n = −N…N, at a given height"""
    coeffs: np.ndarray
    alpha: float
    height: float
    k: float

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.ndim != 1 or len(coeffs) % 2 != 1:
            raise ValueError("spectrum needs an odd number of coefficients (orders -N..N)")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("spectrum contains non-finite coefficients")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def N(self):
        return (len(self.coeffs) - 1) // 2

    @property
    def orders(self):
        return np.arange(-self.N, self.N + 1)

    @property
    def exponents(self):
        return ModeExponents.build(self.k, self.alpha, self.N)

    def coefficient(self, n):
        return complex(self.coeffs[int(n) + self.N])

    def with_coeffs(self, coeffs):
        return RayleighSpectrum(coeffs=coeffs, alpha=self.alpha, height=self.height, k=self.k)

    def __add__(self, other):
        if other.N != self.N or not np.isclose(other.alpha, self.alpha):
            raise ValueError("spectra must share truncation and quasimomentum")
        return self.with_coeffs(self.coeffs + other.coeffs)

    def evaluate(self, x1):
        """Trace Σ g_n e^{i(n+α)x₁} at the spectrum height"""
        x1 = np.asarray(x1, dtype=float)
        phases = np.exp(1j * np.multiply.outer(x1, self.orders + self.alpha))
        return phases @ self.coeffs


def _dtn_sign(variant):
    if variant not in DTN_VARIANTS:
        raise ValueError(f"unknown DtN variant {variant!r}; expected one of {DTN_VARIANTS}")
    return -1.0 if variant == "T_minus" else 1.0


def apply_dtn(spectrum, variant="T"):
    """Apply a DtN map coefficient-wise.

    T and T_plus multiply by iβ_n, T_minus by −iβ_n, with β_n built from
    the spectrum's own wavenumber and quasimomentum. T_hat acts on spectra of
    −α-quasiperiodic fields (whose ``alpha`` is already −α), which gives
    the hatted exponents β̂_n.
    """
    sign = _dtn_sign(variant)
    beta = beta_from_alpha(spectrum.k, spectrum.orders + spectrum.alpha)
    if is_wood_anomaly(spectrum.k, beta):
        logger.warning("Wood anomaly while applying %s (k = %g, alpha = %g)", variant, spectrum.k, spectrum.alpha)
    return spectrum.with_coeffs(sign * 1j * beta * spectrum.coeffs)


def dtn_pairing(spectrum, variant="T"):
    """⟨Tg, g⟩ = 2π Σ (±iβ_n)|g_n|²"""
    image = apply_dtn(spectrum, variant)
    return complex(2.0 * np.pi * np.sum(image.coeffs * np.conj(spectrum.coeffs)))


def dtn_bilinear_entries(N, k, alpha, variant="T"):
    """Diagonal modal couplings 2π·(±iβ_n), to be composed with the trace-to-mode transform"""
    if N < 0:
        raise ValueError(f"truncation order must be nonnegative, got N = {N}")
    sign = _dtn_sign(variant)
    exponents = ModeExponents.build(k, alpha, N)
    return np.diag(sign * 2.0j * np.pi * exponents.beta_n)


def incident_functional_coefficient(wave, R):
    """2iβ·e^{−iβR}·γ, the order-0 coefficient of T(u^i) − ∂₂u^i on Γ_R"""
    return 2.0j * wave.beta * np.exp(-1j * wave.beta * R) * wave.gamma
