import logging
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from models.bounds import BoundResult, certify, dirichlet_bound, impedance_bound, transmission_bound
from models.dtn import check_truncation
from models.fem_core import SolverError, assemble, solve
from models.geometry import Impedance, Transmission, validate_hypotheses
from models.mesh import generate_mesh, refine
from models.postprocess import (
    efficiencies,
    norm_H1alpha_weighted,
    norm_XR,
    propagating_orders,
    rayleigh_coefficients,
    scattered_coefficients,
)
from utils.data_loader import build_report_frame, format_orders, split_complex_columns

logger = logging.getLogger(__name__)

SOLVER_ERROR = "solver_error"

SOLVE_COLUMNS = (
    "profile", "bc", "k", "theta_deg", "gamma_re", "gamma_im", "lambda", "k_minus",
    "R", "f_minus", "f_plus", "lipschitz_L", "mesh_h", "fe_order", "dtn_N", "refinements",
    "h", "n_dofs",
    "reflection_0_re", "reflection_0_im", "transmission_0_re", "transmission_0_im",
    "rayleigh", "efficiencies", "transmission_efficiencies", "absorption", "balance_defect", "reliable",
    "norm_coarse", "norm_fine", "bound", "ratio", "status", "reason",
    "hypotheses_ok", "case", "wood_anomaly", "residual", "wall_time", "error",
)


def build_meshes(config, domain):
    """Coarse mesh at mesh_h followed by `refinements` uniform refinements"""
    meshes = [generate_mesh(domain, config.mesh_h)]
    for _ in range(config.refinements):
        meshes.append(refine(meshes[-1]))
    return meshes


def stability_bound(bc, wave, domain):
    """Stability bound for one parameter point, or an empty result when it cannot be evaluated"""
    profile = domain.profile
    try:
        if isinstance(bc, Transmission):
            return transmission_bound(
                wave.k, bc.k_minus, bc.lam, wave.theta, wave.gamma,
                domain.R, profile.f_minus, profile.f_plus, profile.lipschitz_L,
            )
        if isinstance(bc, Impedance):
            return impedance_bound(wave.k, wave.theta, wave.gamma, bc.lam, domain.R, profile.f_minus, profile.lipschitz_L)
        return dirichlet_bound(wave.k, wave.theta, wave.gamma, domain.R, profile.f_minus)
    except ValueError as e:
        logger.warning("no stability bound: %s", str(e))
        return BoundResult(bound=None, case="none")


def _field_norm(field, bc):
    if isinstance(bc, Transmission):
        return norm_H1alpha_weighted(field, bc)
    return norm_XR(field)


def _input_echo(config, domain, point, N):
    profile = domain.profile
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
        "mesh_h": config.mesh_h,
        "fe_order": config.fe_order,
        "dtn_N": N,
        "refinements": config.refinements,
    }
    return split_complex_columns(row, "gamma", config.gamma)


def solve_point(config, domain, meshes, N, point):
    """Solve one sweep point on every mesh level and certify the finest norm"""
    start = time.perf_counter()
    row = _input_echo(config, domain, point, N)
    bc = config.boundary_condition(point)
    wave = config.wave(point)
    hypotheses = validate_hypotheses(domain, bc, wave.k)
    row["hypotheses_ok"] = hypotheses.passed
    row["case"] = hypotheses.case

    try:
        check_truncation(wave.k, wave.alpha, N)
        if isinstance(bc, Transmission):
            check_truncation(bc.k_minus, wave.alpha, N)
        fields = [solve(assemble(bc, mesh, wave, N, config.fe_order)) for mesh in meshes]
    except (SolverError, ValueError) as e:
        logger.error("solve failed at k = %g, theta = %g deg: %s", wave.k, point["theta_deg"], str(e))
        row.update(status=SOLVER_ERROR, error=str(e), wall_time=time.perf_counter() - start)
        split_complex_columns(row, "reflection_0", None)
        split_complex_columns(row, "transmission_0", None)
        return row

    fine = fields[-1]
    R = domain.R
    upper = rayleigh_coefficients(fine, R, N)
    spectra = [upper]
    if isinstance(bc, Transmission):
        spectra.append(rayleigh_coefficients(fine, -R, N))
    table = efficiencies(spectra, wave, bc, fine)

    amplitudes = scattered_coefficients(upper, wave, "upper")
    propagating = propagating_orders(upper)
    split_complex_columns(row, "reflection_0", amplitudes.coefficient(0))
    if isinstance(bc, Transmission):
        split_complex_columns(row, "transmission_0", scattered_coefficients(spectra[1], wave, "lower").coefficient(0))
    else:
        split_complex_columns(row, "transmission_0", None)

    norms = [_field_norm(field, bc) for field in fields]
    norm_coarse = norms[-2] if len(norms) > 1 else None
    wood = bool(fine.metadata.get("wood_anomaly")) or not table.reliable
    report = certify(
        norms[-1], norm_coarse, stability_bound(bc, wave, domain), hypotheses,
        wood_anomaly=wood, kind=config.bc, inputs=point,
    )

    row.update(
        h=fine.mesh.h,
        n_dofs=fine.space.n_dofs,
        rayleigh=format_orders({int(n): amplitudes.coefficient(int(n)) for n in propagating}),
        efficiencies=format_orders(table.reflection),
        transmission_efficiencies=format_orders(table.transmission),
        absorption=table.absorption,
        balance_defect=table.balance_defect,
        reliable=table.reliable,
        norm_coarse=norm_coarse,
        norm_fine=norms[-1],
        bound=report.bound,
        ratio=report.ratio,
        status=report.status,
        reason=report.reason,
        wood_anomaly=wood,
        residual=max(field.metadata["residual"] for field in fields),
        wall_time=time.perf_counter() - start,
        error="",
    )
    logger.info(
        "k = %g, theta = %g deg: status %s, ratio %.3g", wave.k, point["theta_deg"], report.status, report.ratio,
    )
    return row


def run_solve(config):
    """Solve every sweep point; rows come back in input order"""
    domain = config.build_domain()
    meshes = build_meshes(config, domain)
    N = config.truncation()
    points = config.points()
    logger.info("solving %d points on %d mesh levels (N = %d)", len(points), len(meshes), N)

    task = partial(solve_point, config, domain, meshes, N)
    if config.workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(task, points))
    else:
        rows = [task(point) for point in points]

    failures = sum(row["status"] == SOLVER_ERROR for row in rows)
    if failures:
        logger.error("%d of %d points failed to solve", failures, len(rows))
    return build_report_frame(rows, SOLVE_COLUMNS)


def count_failures(frame):
    return int(np.sum(frame["status"] == SOLVER_ERROR)) if len(frame) else 0
