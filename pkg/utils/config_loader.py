import itertools
import logging
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from models.dtn import default_truncation
from models.geometry import (
    Dirichlet,
    Impedance,
    IncidentWave,
    Transmission,
    TruncatedDomain,
    build_profile,
    samples_for_spacing,
)

logger = logging.getLogger(__name__)

BOUNDARY_MODELS = ("dirichlet", "impedance", "transmission")
SUITES = ("oracles", "identities", "inequalities", "all")
SWEEP_KEYS = ("k", "theta_deg", "lam", "k_minus")
AUTO = "auto"

# Heights above gamma_max (one-sided) or beyond the reference lines (two-sided)
UPPER_GAP = 1.5
OUTER_GAP = 0.5

# File keys that differ from the attribute names
KEY_ALIASES = {"lambda": "lam", "mesh-h": "mesh_h"}


class ConfigError(ValueError):
    """Invalid configuration, with the file line number when known"""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        if line is not None:
            message = f"{source or 'config'}:{line}: {message}"
        super().__init__(message)


@dataclass
class RunConfig:
    profile: str = "flat(0)"
    bc: str = "dirichlet"
    k: list = field(default_factory=lambda: [1.5])
    theta_deg: list = field(default_factory=lambda: [20.0])
    gamma: complex = 1.0 + 0.0j
    lam: list = field(default_factory=lambda: [1.0])
    k_minus: list = field(default_factory=lambda: [2.0])
    R: Optional[float] = None
    f_minus: Optional[float] = None
    f_plus: Optional[float] = None
    lipschitz_L: Optional[float] = None
    n_samples: Optional[int] = None
    mesh_h: float = 0.2
    fe_order: int = 2
    dtn_N: Optional[int] = None
    refinements: int = 1
    seed: int = 2718
    workers: int = 1
    output: str = "report.csv"
    suite: str = "all"
    oracle_perturbation: float = 0.0
    trials: int = 1000

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.bc not in BOUNDARY_MODELS:
            raise ConfigError(f"bc must be one of {', '.join(BOUNDARY_MODELS)}, got {self.bc!r}")
        if self.suite not in SUITES:
            raise ConfigError(f"suite must be one of {', '.join(SUITES)}, got {self.suite!r}")
        for key in SWEEP_KEYS:
            values = getattr(self, key)
            if not isinstance(values, (list, tuple)):
                values = [values]
                setattr(self, key, values)
            if len(values) == 0:
                raise ConfigError(f"sweep list {key} must not be empty")
        for theta in self.theta_deg:
            if not -90.0 < theta < 90.0:
                raise ConfigError(f"theta_deg must lie in (-90, 90), got {theta}")
        for k in self.k:
            if not k > 0:
                raise ConfigError(f"k must be positive, got {k}")
        if self.bc != "dirichlet":
            for lam in self.lam:
                if not lam > 0:
                    raise ConfigError(f"lambda must be positive, got {lam}")
        if self.bc == "transmission":
            for k_minus in self.k_minus:
                if not k_minus > 0:
                    raise ConfigError(f"k_minus must be positive, got {k_minus}")
        if self.fe_order not in (1, 2):
            raise ConfigError(f"fe_order must be 1 or 2, got {self.fe_order}")
        if not self.mesh_h > 0:
            raise ConfigError(f"mesh_h must be positive, got {self.mesh_h}")
        if self.refinements < 0:
            raise ConfigError(f"refinements must be nonnegative, got {self.refinements}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")
        if self.dtn_N is not None and self.dtn_N < 0:
            raise ConfigError(f"dtn_N must be nonnegative or auto, got {self.dtn_N}")

    @property
    def two_sided(self):
        return self.bc == "transmission"

    def samples(self):
        return self.n_samples if self.n_samples is not None else samples_for_spacing(self.mesh_h)

    def build_domain(self):
        """Profile and truncated domain, with R, f_minus and f_plus defaulted from the profile"""
        profile = build_profile(
            self.profile,
            n_samples=self.samples(),
            f_minus=self.f_minus,
            f_plus=self.f_plus,
            lipschitz_L=self.lipschitz_L,
        )
        R = self.R
        if R is None:
            if self.two_sided:
                R = max(abs(profile.f_minus), abs(profile.f_plus)) + OUTER_GAP
            else:
                R = profile.gamma_max + UPPER_GAP
        try:
            return TruncatedDomain(profile, float(R), "two-sided" if self.two_sided else "one-sided")
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def points(self):
        """Sweep points (cartesian product of the list-valued keys relevant to bc), in input order"""
        lams = self.lam if self.bc != "dirichlet" else [None]
        k_minuses = self.k_minus if self.bc == "transmission" else [None]
        return [
            {"k": k, "theta_deg": theta, "lam": lam, "k_minus": k_minus}
            for k, theta, lam, k_minus in itertools.product(self.k, self.theta_deg, lams, k_minuses)
        ]

    def boundary_condition(self, point):
        if self.bc == "dirichlet":
            return Dirichlet()
        if self.bc == "impedance":
            return Impedance(point["lam"])
        return Transmission(point["k_minus"], point["lam"])

    def wave(self, point):
        return IncidentWave.from_degrees(point["k"], point["theta_deg"], self.gamma)

    def truncation(self):
        """dtn_N, or ceil of the largest wavenumber over the sweep plus 10"""
        if self.dtn_N is not None:
            return self.dtn_N
        k_top = max(self.k)
        if self.two_sided:
            k_top = max(k_top, max(self.k_minus))
        return default_truncation(k_top)

    def with_overrides(self, overrides):
        values = {}
        for key, raw in overrides.items():
            if raw is None:
                continue
            name = _attribute(key)
            values[name] = _coerce(name, raw) if isinstance(raw, str) else raw
        return replace(self, **values)


def _attribute(key):
    name = KEY_ALIASES.get(key, key.replace("-", "_"))
    if name not in {f.name for f in fields(RunConfig)}:
        raise ConfigError(f"unknown config key {key!r}")
    return name


def _number_list(text):
    values = [float(token) for token in text.split(",") if token.strip()]
    if not values:
        raise ValueError("empty list")
    return values


def _optional(cast):
    def parse(text):
        return None if text.strip().lower() == AUTO else cast(text)
    return parse


PARSERS = {
    "k": _number_list,
    "theta_deg": _number_list,
    "lam": _number_list,
    "k_minus": _number_list,
    "gamma": lambda text: complex(text.replace(" ", "")),
    "R": _optional(float),
    "f_minus": _optional(float),
    "f_plus": _optional(float),
    "lipschitz_L": _optional(float),
    "n_samples": _optional(int),
    "dtn_N": _optional(int),
    "mesh_h": float,
    "fe_order": int,
    "refinements": int,
    "seed": int,
    "workers": int,
    "trials": int,
    "oracle_perturbation": float,
}


def _coerce(name, text, line=None, source=None):
    parse = PARSERS.get(name, str.strip)
    try:
        return parse(text.strip())
    except ValueError as e:
        raise ConfigError(f"invalid value {text.strip()!r} for {name}: {str(e)}", line, source) from e


def parse_config_text(text, source=None):
    """Parse `key = value` lines into {attribute: (value, line)}"""
    entries = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", number, source)
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            name = _attribute(key)
        except ConfigError as e:
            raise ConfigError(str(e), number, source) from e
        if name in entries:
            logger.warning("%s:%d: key %s repeated, last value wins", source or "config", number, key)
        entries[name] = (_coerce(name, value, number, source), number)
    return entries


def load_config(path=None, overrides=None):
    """RunConfig from an optional config file, then command-line overrides"""
    values = {}
    lines = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as handle:
            entries = parse_config_text(handle.read(), source=path)
        values = {name: value for name, (value, _) in entries.items()}
        lines = {name: number for name, (_, number) in entries.items()}

    try:
        config = RunConfig(**values)
    except ConfigError as e:
        # Point at the offending line when the message names a file key
        for name, number in lines.items():
            if name in str(e) or (name == "lam" and "lambda" in str(e)):
                raise ConfigError(str(e), number, path) from e
        raise

    if overrides:
        config = config.with_overrides(overrides)
    logger.info("configuration: bc=%s profile=%s, %d sweep points", config.bc, config.profile, len(config.points()))
    return config
