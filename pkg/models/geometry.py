"""Grating profiles, incident waves, boundary models and truncated domains."""
import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from utils.data_loader import load_profile_knots

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
PERIODICITY_TOL = 1e-12
DEFAULT_REFERENCE_GAP = 1.5

LIPSCHITZ_RTOL = 1e-12

_PROFILE_PATTERN = re.compile(r"^\s*(flat|sine|saw|file)\s*\((.*)\)\s*$")


def chord_slope(knots):
    """Largest |Δf/Δx₁| over the polyline segments of positive width"""
    dx = np.diff(knots[:, 0])
    nonzero = dx > 0
    if not nonzero.any():
        return 0.0
    return float(np.max(np.abs(np.diff(knots[:, 1])[nonzero] / dx[nonzero])))


@dataclass(frozen=True)
class GratingProfile:
    """Piecewise-linear 2π-periodic profile x₂ = f(x₁)"""
    knots: np.ndarray
    f_minus: float
    f_plus: float
    gamma_max: float
    gamma_min: float
    lipschitz_L: float
    label: str = "custom"

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 2 or knots.shape[1] != 2 or len(knots) < 2:
            raise ValueError("profile knots must be an (n, 2) array with n >= 2")
        if abs(knots[0, 0]) > PERIODICITY_TOL or abs(knots[-1, 0] - TWO_PI) > 1e-9:
            raise ValueError("profile knots must start at x1 = 0 and end at x1 = 2*pi")
        if abs(knots[0, 1] - knots[-1, 1]) > PERIODICITY_TOL:
            raise ValueError(
                f"profile is not 2*pi-periodic: f(0) = {knots[0, 1]!r}, f(2*pi) = {knots[-1, 1]!r}"
            )
        if self.f_minus >= self.gamma_min:
            raise ValueError(f"f_minus = {self.f_minus} must lie below gamma_min = {self.gamma_min}")
        if self.lipschitz_L < 0:
            raise ValueError("lipschitz_L must be nonnegative")
        chord = chord_slope(knots)
        if chord > self.lipschitz_L * (1.0 + LIPSCHITZ_RTOL):
            raise ValueError(f"lipschitz_L = {self.lipschitz_L} is below the chord slope {chord} of the knots")
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def x(self):
        return self.knots[:, 0]

    @property
    def values(self):
        return self.knots[:, 1]

    def __call__(self, x1):
        """Evaluate f at arbitrary x₁ (periodic extension)"""
        x1 = np.mod(np.asarray(x1, dtype=float), TWO_PI)
        return np.interp(x1, self.x, self.values)

    def slopes(self):
        return np.diff(self.values) / np.diff(self.x)

    def arc_length(self):
        return float(np.sum(np.hypot(np.diff(self.x), np.diff(self.values))))

    def area_below(self, height):
        """Area of {f(x₁) < x₂ < height} over one period (exact for the polyline)"""
        return float(np.trapezoid(height - self.values, self.x))

    def area_above(self, depth):
        """Area of {depth < x₂ < f(x₁)} over one period"""
        return float(np.trapezoid(self.values - depth, self.x))


@dataclass(frozen=True)
class IncidentWave:
    """Plane wave γ·exp(iαx₁ − iβx₂) incident from above"""
    k: float
    theta: float
    gamma: complex = 1.0 + 0.0j

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"wavenumber must be positive, got k = {self.k}")
        if not -np.pi / 2 < self.theta < np.pi / 2:
            raise ValueError(f"incident angle must lie in (-pi/2, pi/2), got theta = {self.theta}")
        object.__setattr__(self, "gamma", complex(self.gamma))

    @property
    def alpha(self):
        return self.k * np.sin(self.theta)

    @property
    def beta(self):
        return self.k * np.cos(self.theta)

    @classmethod
    def from_degrees(cls, k, theta_deg, gamma=1.0):
        return cls(k=float(k), theta=float(np.deg2rad(theta_deg)), gamma=complex(gamma))

    def field(self, x1, x2):
        return self.gamma * np.exp(1j * self.alpha * x1 - 1j * self.beta * x2)


@dataclass(frozen=True)
class Dirichlet:
    name: str = field(default="dirichlet", init=False)


@dataclass(frozen=True)
class Impedance:
    lam: float
    name: str = field(default="impedance", init=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"surface impedance must be positive, got lambda = {self.lam}")


@dataclass(frozen=True)
class Transmission:
    k_minus: float
    lam: float
    name: str = field(default="transmission", init=False)

    def __post_init__(self):
        if not self.k_minus > 0:
            raise ValueError(f"lower wavenumber must be positive, got k_minus = {self.k_minus}")
        if not self.lam > 0:
            raise ValueError(f"transmission ratio must be positive, got lambda = {self.lam}")

    def check_contrast(self, k_plus):
        if np.isclose(self.k_minus, k_plus, rtol=0.0, atol=1e-14):
            raise ValueError("transmission requires k_minus != k (no interface otherwise)")


BoundaryModel = Union[Dirichlet, Impedance, Transmission]


@dataclass(frozen=True)
class TruncatedDomain:
    """Ω_R (one-sided) or S_R (two-sided) truncated at height R"""
    profile: GratingProfile
    R: float
    kind: str = "one-sided"

    def __post_init__(self):
        if self.kind not in ("one-sided", "two-sided"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if not self.R > self.profile.gamma_max:
            raise ValueError(f"R = {self.R} must exceed gamma_max = {self.profile.gamma_max}")
        if self.two_sided:
            if not -self.R < self.profile.f_minus <= self.profile.gamma_min:
                raise ValueError("two-sided domain requires -R < f_minus <= gamma_min")
            if not self.profile.gamma_max <= self.profile.f_plus < self.R:
                raise ValueError("two-sided domain requires gamma_max <= f_plus < R")

    @property
    def two_sided(self):
        return self.kind == "two-sided"

    def area(self):
        area = self.profile.area_below(self.R)
        if self.two_sided:
            area += self.profile.area_above(-self.R)
        return area


def _sample_closed_form(name, params, n_samples):
    """Sample a named closed-form profile on a uniform grid"""
    x = np.linspace(0.0, TWO_PI, n_samples + 1)
    if name == "flat":
        c = params[0] if params else 0.0
        values = np.full_like(x, c)
        exact = (c, c)
    elif name == "sine":
        a = params[0] if params else 1.0
        values = a * np.sin(x)
        exact = (a * np.sin(0.0), a * np.sin(TWO_PI))
    elif name == "saw":
        a = params[0] if params else 1.0
        values = a * (np.abs(x - np.pi) - np.pi / 2)
        exact = (values[0], values[-1])
    else:
        raise ValueError(f"unknown profile family {name!r}")

    if abs(exact[0] - exact[1]) > PERIODICITY_TOL:
        raise ValueError(f"profile {name}{tuple(params)} is not 2*pi-periodic")
    values[-1] = values[0]
    return np.column_stack([x, values])


def samples_for_spacing(h):
    """Knot count matched to a mesh spacing h: ⌈2π/h⌉, at least 8, rounded up to a multiple of 4"""
    if not h > 0:
        raise ValueError(f"mesh spacing must be positive, got {h}")
    n = max(8, int(np.ceil(TWO_PI / h - 1e-9)))
    return 4 * int(np.ceil(n / 4))


def _parse_profile_spec(spec):
    match = _PROFILE_PATTERN.match(spec)
    if not match:
        raise ValueError(f"cannot parse profile spec {spec!r}; expected flat(c), sine(a), saw(a) or file(path)")
    name, inner = match.group(1), match.group(2).strip()
    if name == "file":
        return name, inner
    params = [float(token) for token in inner.split(",") if token.strip()]
    return name, params


def build_profile(spec, n_samples=256, f_minus=None, f_plus=None, lipschitz_L=None):
    """Build a GratingProfile from a closed-form spec, a profile file or explicit knots.

    ``spec`` is ``flat(c)``, ``sine(a)``, ``saw(a)``, ``file(path)`` or an
    array-like of (x₁, f) knots covering [0, 2π]. The Lipschitz constant is
    the maximum chord slope of the polyline, a lower bound of the true
    constant of the sampled function; ``lipschitz_L`` overrides it upward.
    """
    if n_samples < 4:
        raise ValueError(f"n_samples must be at least 4, got {n_samples}")

    if isinstance(spec, str):
        name, params = _parse_profile_spec(spec)
        if name == "file":
            knots = load_profile_knots(params)
        else:
            knots = _sample_closed_form(name, params, n_samples)
        label = spec.strip()
    else:
        knots = np.asarray(spec, dtype=float)
        label = "custom"

    if knots.ndim != 2 or knots.shape[1] != 2:
        raise ValueError("explicit knots must be an (n, 2) array")
    if np.any(np.diff(knots[:, 0]) < 0):
        raise ValueError("profile knots must be ordered by x1")
    if abs(knots[0, 1] - knots[-1, 1]) > PERIODICITY_TOL:
        raise ValueError(
            f"profile is not 2*pi-periodic: f(0) = {knots[0, 1]!r}, f(2*pi) = {knots[-1, 1]!r}"
        )

    values = knots[:, 1]
    gamma_max = float(values.max())
    gamma_min = float(values.min())

    chord = chord_slope(knots)
    if lipschitz_L is None:
        L = chord
    else:
        L = float(lipschitz_L)
        if L < chord:
            logger.warning("lipschitz_L override %.6g is below the chord slope %.6g; using the chord slope", L, chord)
            L = chord

    profile = GratingProfile(
        knots=knots,
        f_minus=gamma_min - DEFAULT_REFERENCE_GAP if f_minus is None else float(f_minus),
        f_plus=gamma_max + DEFAULT_REFERENCE_GAP if f_plus is None else float(f_plus),
        gamma_max=gamma_max,
        gamma_min=gamma_min,
        lipschitz_L=L,
        label=label,
    )
    logger.debug("built profile %s: gamma in [%.4g, %.4g], L = %.4g", label, gamma_min, gamma_max, L)
    return profile


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple
    case: Optional[str] = None

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    def failures(self):
        return [check for check in self.checks if not check.passed]

    def summary(self):
        if self.passed:
            return "pass"
        return ";".join(f"{check.name}({check.margin:+.3g})" for check in self.failures())


def transmission_case(k_plus, k_minus, lam):
    """Return 'i', 'ii' or None according to which stability case applies"""
    contrast = k_plus ** 2 - lam * k_minus ** 2
    if lam >= 1 and contrast > 0:
        return "i"
    if lam <= 1 and contrast < 0:
        return "ii"
    return None


def validate_hypotheses(domain, bc, k=None):
    """Check the geometric (and, for transmission, contrast) hypotheses behind the stability bounds.

    Report-only: failing hypotheses never block a solve, they only void the
    certificate.
    """
    profile = domain.profile
    checks = []
    case = None

    def add(name, margin, detail=""):
        checks.append(HypothesisCheck(name=name, passed=bool(margin > 0), margin=float(margin), detail=detail))

    if isinstance(bc, Dirichlet):
        add("f_minus+1<gamma_min", profile.gamma_min - (profile.f_minus + 1.0))
    elif isinstance(bc, Impedance):
        add("R-1>gamma_max", domain.R - 1.0 - profile.gamma_max)
        add("f_minus+1<gamma_min", profile.gamma_min - (profile.f_minus + 1.0))
    elif isinstance(bc, Transmission):
        add("min_f-f_minus>1", profile.gamma_min - profile.f_minus - 1.0)
        add("max_f-f_plus<-1", profile.f_plus - profile.gamma_max - 1.0)
        if k is not None:
            case = transmission_case(k, bc.k_minus, bc.lam)
            contrast = k ** 2 - bc.lam * bc.k_minus ** 2
            if case == "i":
                detail = "lambda>=1 and k_plus^2>lambda*k_minus^2"
            elif case == "ii":
                detail = "lambda<=1 and k_plus^2<lambda*k_minus^2"
            else:
                detail = "neither case (i) nor case (ii) applies"
            checks.append(
                HypothesisCheck(name="transmission_case", passed=case is not None, margin=float(abs(contrast) if case else -abs(contrast)), detail=detail)
            )
    else:
        raise ValueError(f"unknown boundary model {bc!r}")

    report = HypothesisReport(checks=tuple(checks), case=case)
    if not report.passed:
        logger.warning("stability hypotheses fail: %s", report.summary())
    return report
