"""Explicit stability constants and certification of solved instances."""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from models.geometry import transmission_case

logger = logging.getLogger(__name__)

CONVERGENCE_TOL = 0.01

CERTIFIED = "certified"
VIOLATED = "violated"
INDETERMINATE = "indeterminate"
NO_CERTIFICATE = "no_certificate"


@dataclass(frozen=True)
class BoundResult:
    bound: Optional[float]
    case: str
    constants: dict = field(default_factory=dict)

    @property
    def available(self):
        return self.bound is not None


@dataclass
class StabilityReport:
    kind: str
    inputs: dict
    computed_norm: float
    bound: Optional[float]
    ratio: float
    status: str
    hypotheses: object = None
    constants: dict = field(default_factory=dict)
    reason: str = ""

    @property
    def certified(self):
        return self.status == CERTIFIED


def _depth(R, f_minus):
    depth = R - f_minus
    if not depth > 0:
        raise ValueError(f"R - f_minus must be positive, got {depth}")
    return depth


def dirichlet_bound(k, theta, gamma, R, f_minus):
    """‖u‖_{X_R} ≤ 2√(2π)·cosθ·|γ|·C for the sound-soft grating"""
    D = _depth(R, f_minus)
    M = 4 * k ** 3 * D ** 3 + 2 * k ** 2 * D ** 2 + 4 * k ** 2 * D ** 3 * k * np.cos(theta) + 1
    C = np.sqrt(k * M ** 2 + 4 * k ** 4 * D ** 3)
    bound = 2 * np.sqrt(2 * np.pi) * np.cos(theta) * abs(gamma) * C
    return BoundResult(bound=float(bound), case="dirichlet", constants={"M": float(M), "C": float(C)})


def auxiliary_constant(k, R, f_minus, L):
    """C̃ of the auxiliary-problem estimate ‖w‖ + ‖∂_νw‖_Γ ≤ C̃‖u‖"""
    D = _depth(R, f_minus)
    if D <= 1:
        raise ValueError(f"R - f_minus must exceed 1, got {D}")
    numerator = 4 * D ** 2 + (2 * k + 1) * D ** 3 * (2 * k * D + 1)
    denominator = 2 * min((D - 1) / ((2 * k + 1) * D ** 3), 1 / np.sqrt(1 + L ** 2))
    return float(np.sqrt(numerator / denominator))


def impedance_bound(k, theta, gamma, lam, R, f_minus, L):
    """‖u‖_{H¹_α(Ω_R)} ≤ 2√(2π)·cosθ·|γ|·C* for the impedance grating"""
    if not lam > 0:
        raise ValueError(f"surface impedance must be positive, got lambda = {lam}")
    C_tilde = auxiliary_constant(k, R, f_minus, L)
    C_tilde_sq = C_tilde ** 2
    C_star = np.sqrt(k * (1 + 4 * k ** 2 * C_tilde_sq / lam) ** 2 + 8 * k ** 4 * C_tilde_sq)
    bound = 2 * np.sqrt(2 * np.pi) * np.cos(theta) * abs(gamma) * C_star
    return BoundResult(
        bound=float(bound),
        case="impedance",
        constants={"C_tilde": C_tilde, "C_tilde_sq": float(C_tilde_sq), "C_star": float(C_star)},
    )


def transmission_bound(k_plus, k_minus, lam, theta, gamma, R, f_minus, f_plus, L):
    """Weighted-norm bound 2√(2πk₊)·cosθ·|γ|·C₁₂ (case i) or C₁₃ (case ii)"""
    D = _depth(R, f_minus)
    case = transmission_case(k_plus, k_minus, lam)
    if case is None:
        logger.info("no certified transmission bound for k+ = %g, k- = %g, lambda = %g", k_plus, k_minus, lam)
        return BoundResult(bound=None, case="none")

    slope = np.sqrt(1 + L ** 2)
    kmax = max(k_plus, lam * k_minus)
    prefactor = 2 * np.sqrt(2 * np.pi * k_plus) * np.cos(theta) * abs(gamma)
    if case == "i":
        C_T = min(2 / D ** 2, (k_plus ** 2 - lam * k_minus ** 2) / (2 * D * slope))
        C12 = 2 * kmax * (2 * k_plus * D + 1) / C_T + 1
        return BoundResult(bound=float(prefactor * C12), case="i", constants={"C_T": float(C_T), "C12": float(C12)})

    upper_gap = R - f_plus
    if not upper_gap > 0:
        raise ValueError(f"R - f_plus must be positive, got {upper_gap}")
    C_S = min(2 / D ** 2, (lam * k_minus ** 2 - k_plus ** 2) / (2 * D * slope))
    C13 = 2 * kmax * (2 * k_plus * upper_gap + 1) / C_S + 1
    return BoundResult(bound=float(prefactor * C13), case="ii", constants={"C_S": float(C_S), "C13": float(C13)})


def certify(norm_fine, norm_coarse, bound_result, hypotheses, wood_anomaly=False, kind="", inputs=None):
    """Compare a mesh-converged norm with its stability bound"""
    inputs = dict(inputs or {})
    bound = bound_result.bound if bound_result is not None else None
    constants = dict(bound_result.constants) if bound_result is not None else {}
    ratio = float(norm_fine / bound) if bound else float("nan")

    def report(status, reason=""):
        if status != CERTIFIED:
            logger.warning("%s certificate %s: %s", kind or "stability", status, reason)
        return StabilityReport(
            kind=kind, inputs=inputs, computed_norm=float(norm_fine), bound=bound, ratio=ratio,
            status=status, hypotheses=hypotheses, constants=constants, reason=reason,
        )

    if hypotheses is not None and not hypotheses.passed:
        return report(NO_CERTIFICATE, f"hypotheses fail: {hypotheses.summary()}")
    if wood_anomaly:
        return report(NO_CERTIFICATE, "Wood anomaly")
    if bound is None or not bound > 0:
        return report(NO_CERTIFICATE, "no bound available")
    if norm_coarse is None or not np.isfinite(norm_coarse):
        return report(INDETERMINATE, "single mesh level, convergence unchecked")
    change = abs(norm_fine - norm_coarse) / max(abs(norm_fine), np.finfo(float).tiny)
    if change >= CONVERGENCE_TOL:
        return report(INDETERMINATE, f"norm not converged (relative change {change:.3g})")
    if ratio <= 1.0:
        return report(CERTIFIED)
    return report(VIOLATED, f"ratio {ratio:.6g} exceeds 1")
