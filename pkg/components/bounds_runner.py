import logging

from components.solve_runner import stability_bound
from models.geometry import validate_hypotheses
from utils.data_loader import build_report_frame, split_complex_columns

logger = logging.getLogger(__name__)

BOUNDS_COLUMNS = (
    "profile", "bc", "k", "theta_deg", "gamma_re", "gamma_im", "lambda", "k_minus",
    "R", "f_minus", "f_plus", "lipschitz_L",
    "case", "bound", "M", "C", "C_tilde", "C_tilde_sq", "C_star", "C_T", "C12", "C_S", "C13",
    "hypotheses_ok", "hypothesis_failures",
)


def bounds_row(config, domain, point):
    """Constants breakdown for one parameter point, without solving"""
    profile = domain.profile
    bc = config.boundary_condition(point)
    wave = config.wave(point)
    hypotheses = validate_hypotheses(domain, bc, wave.k)
    result = stability_bound(bc, wave, domain)

    row = {
        "profile": config.profile,
        "bc": config.bc,
        "k": point["k"],
        "theta_deg": point["theta_deg"],
        "lambda": point["lam"],
        "k_minus": point["k_minus"],
        "R": domain.R,
        "f_minus": profile.f_minus,
        "f_plus": profile.f_plus,
        "lipschitz_L": profile.lipschitz_L,
        "case": result.case,
        "bound": result.bound,
        "hypotheses_ok": hypotheses.passed,
        "hypothesis_failures": "" if hypotheses.passed else hypotheses.summary(),
    }
    split_complex_columns(row, "gamma", config.gamma)
    row.update(result.constants)
    return row


def run_bounds(config):
    domain = config.build_domain()
    rows = [bounds_row(config, domain, point) for point in config.points()]
    logger.info("evaluated bounds at %d points", len(rows))
    return build_report_frame(rows, BOUNDS_COLUMNS)
