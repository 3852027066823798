"""Galerkin assembly and direct solution of the grating problems in Bloch form.

The unknown is the 2π-periodic factor ũ of the physical field
u = e^{iqx₁}ũ, q the quasimomentum, so the gradient becomes ∇ + iq·e₁ and
periodicity is exact dof identification. Row i of every matrix is the test
function φ_i, column j the trial function φ_j.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as splinalg

from models.dtn import beta_from_alpha, check_truncation, incident_functional_coefficient, is_wood_anomaly
from models.elements import LagrangeSpace, edge_basis, tabulate
from models.geometry import Dirichlet, Impedance, Transmission
from models.mesh import GAMMA_PROFILE, GAMMA_R_MINUS, GAMMA_R_PLUS, LOWER, UPPER
from utils.quadrature import line_rule, triangle_rule

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
SERIES_CUTOFF = 1.0
SERIES_TERMS = 24
SPACE_CACHE_SIZE = 16


class SolverError(RuntimeError):
    """Raised when a Galerkin system cannot be solved to tolerance"""


@dataclass
class DiscreteField:
    """Dof vector of the periodic factor ũ; the physical field is e^{i·quasimomentum·x₁}ũ"""
    space: Optional[LagrangeSpace]
    dofs: np.ndarray
    quasimomentum: float = 0.0
    wavenumbers: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dofs = np.asarray(self.dofs, dtype=complex)
        if self.space is not None and len(self.dofs) != self.space.n_dofs:
            raise ValueError(f"field has {len(self.dofs)} dofs, space has {self.space.n_dofs}")
        if not np.all(np.isfinite(self.dofs)):
            raise ValueError("field contains non-finite dofs")

    @property
    def mesh(self):
        return self.space.mesh

    @property
    def fe_order(self):
        return self.space.order

    def region_wavenumber(self, region):
        return self.wavenumbers.get(region, self.wavenumbers.get(UPPER))

    def region_weight(self, region):
        return self.weights.get(region, 1.0)

    def evaluate(self, points, physical=True):
        """Field values at arbitrary points inside the mesh"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells, reference = self.space.locate(points)
        if np.any(cells < 0):
            raise ValueError("evaluation point outside the mesh")
        values = np.empty(len(points), dtype=complex)
        for i, (cell, ref) in enumerate(zip(cells, reference)):
            phi = tabulate(self.space.order, ref[None, :])[0]
            values[i] = phi @ self.dofs[self.space.cell_dofs[cell]]
        if physical:
            values *= np.exp(1j * self.quasimomentum * points[:, 0])
        return values

    def scaled(self, factor):
        return DiscreteField(self.space, factor * self.dofs, self.quasimomentum, dict(self.wavenumbers), dict(self.weights), dict(self.metadata))


@dataclass
class AssembledSystem:
    """Reduced Galerkin system over the free dofs plus the full-size pieces for diagnostics"""
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    n_dofs: int
    space: Optional[LagrangeSpace] = None
    constrained: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    full_matrix: Optional[sp.csr_matrix] = None
    full_rhs: Optional[np.ndarray] = None
    parts: dict = field(default_factory=dict)
    quasimomentum: float = 0.0
    wavenumbers: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix.shape != (len(self.free), len(self.free)):
            raise ValueError("matrix dimension must equal the free dof count")
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("right-hand side contains non-finite entries")

    @property
    def wood_anomaly(self):
        return bool(self.metadata.get("wood_anomaly", False))


# ---------------------------------------------------------------------------
# Trace-to-mode transform
# ---------------------------------------------------------------------------

def exponential_moments(c):
    """μ_m(c) = ∫₀¹ tᵐ e^{ct} dt for m = 0, 1, 2, shape (len(c), 3)"""
    c = np.asarray(c, dtype=complex)
    moments = np.empty(c.shape + (3,), dtype=complex)
    small = np.abs(c) < SERIES_CUTOFF

    if np.any(small):
        cs = c[small]
        term = np.ones_like(cs)
        sums = np.zeros(cs.shape + (3,), dtype=complex)
        for j in range(SERIES_TERMS):
            for m in range(3):
                sums[..., m] += term / (m + j + 1)
            term = term * cs / (j + 1)
        moments[small] = sums

    large = ~small
    if np.any(large):
        cl = c[large]
        ec = np.exp(cl)
        mu0 = (ec - 1.0) / cl
        mu1 = (ec - mu0) / cl
        mu2 = (ec - 2.0 * mu1) / cl
        moments[large] = np.stack([mu0, mu1, mu2], axis=-1)
    return moments


def line_segments(space, height):
    """Pieces of the line x₂ = height inside the mesh: (triangle, ref_start, ref_end, x_start, x_end)"""
    mesh = space.mesh
    y_all = mesh.vertices[:, 1]
    tol = 1e-12 * max(1.0, abs(height))
    if height > y_all.max() + tol or height < y_all.min() - tol:
        raise ValueError(f"height {height} lies outside the mesh [{y_all.min()}, {y_all.max()}]")

    corners = mesh.vertices[mesh.triangles]
    d = corners[:, :, 1] - height
    on = np.abs(d) <= tol
    below = d < -tol
    above = d > tol

    segments = []
    edge_owner = {}
    for t in np.flatnonzero(on.sum(axis=1) == 2):
        local = np.flatnonzero(on[t])
        third = 3 - local.sum()
        key = tuple(sorted(mesh.triangles[t, local]))
        # Lines through an interior edge use the triangle underneath
        if key not in edge_owner or below[t, third]:
            edge_owner[key] = (t, local)
    for t, local in edge_owner.values():
        segments.append((t, corners[t, local[0]], corners[t, local[1]]))

    for t in np.flatnonzero(below.any(axis=1) & above.any(axis=1)):
        points = [corners[t, i] for i in range(3) if on[t, i]]
        for i, j in ((0, 1), (1, 2), (2, 0)):
            if (below[t, i] and above[t, j]) or (above[t, i] and below[t, j]):
                s = d[t, i] / (d[t, i] - d[t, j])
                points.append(corners[t, i] + s * (corners[t, j] - corners[t, i]))
        if len(points) == 2:
            segments.append((t, points[0], points[1]))

    pieces = []
    for t, p, q in segments:
        if p[0] > q[0]:
            p, q = q, p
        if q[0] - p[0] <= tol:
            continue
        ref_p = space.inverse_jacobians[t] @ (p - space.origin[t])
        ref_q = space.inverse_jacobians[t] @ (q - space.origin[t])
        pieces.append((t, ref_p, ref_q, p[0], q[0]))

    covered = sum(x1 - x0 for _, _, _, x0, x1 in pieces)
    if abs(covered - 2.0 * np.pi) > 1e-9:
        raise ValueError(f"line x2 = {height} is not fully inside the mesh (covers {covered:.6g} of 2*pi)")
    return pieces


def trace_mode_matrix(space, height, N):
    """P[n, j] = (1/2π)∫ φ_j(x₁, height) e^{−inx₁} dx₁, exact per segment, as a sparse (2N+1)×n_dofs matrix"""
    orders = np.arange(-N, N + 1)
    rows, cols, data = [], [], []
    for t, ref_p, ref_q, x0, x1 in line_segments(space, height):
        length = x1 - x0
        samples = np.vstack([ref_p, 0.5 * (ref_p + ref_q), ref_q])
        v0, vh, v1 = tabulate(space.order, samples)
        coefficients = np.stack([v0, -3.0 * v0 + 4.0 * vh - v1, 2.0 * v0 - 4.0 * vh + 2.0 * v1], axis=1)

        moments = exponential_moments(-1j * orders * length)
        phase = length * np.exp(-1j * orders * x0) / (2.0 * np.pi)
        block = phase[:, None] * (moments @ coefficients.T)

        dofs = space.cell_dofs[t]
        rows.append(np.repeat(np.arange(len(orders)), len(dofs)))
        cols.append(np.tile(dofs, len(orders)))
        data.append(block.ravel())

    if not rows:
        raise ValueError(f"empty trace on x2 = {height}")
    return sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(orders), space.n_dofs),
    ).tocsr()


# ---------------------------------------------------------------------------
# Element kernels
# ---------------------------------------------------------------------------

def element_matrices(space):
    """Per-triangle stiffness K, mass M and first-derivative C[i, j] = ∫φ_i ∂₁φ_j"""
    cached = getattr(space, "_element_matrices", None)
    if cached is not None:
        return cached

    points, weights = triangle_rule(4)
    phi = tabulate(space.order, points)
    grads = space.physical_gradients(points)
    det = space.det_jacobians

    stiffness = np.einsum("q,tqid,tqjd->tij", weights, grads, grads) * det[:, None, None]
    mass = np.einsum("q,qi,qj->ij", weights, phi, phi)[None, :, :] * det[:, None, None]
    derivative = np.einsum("q,qi,tqj->tij", weights, phi, grads[..., 0]) * det[:, None, None]

    cached = {"stiffness": stiffness, "mass": mass, "derivative": derivative}
    space._element_matrices = cached
    return cached


def _scatter(space, local):
    """Sum per-triangle local matrices into a sparse global matrix"""
    dofs = space.cell_dofs
    n = dofs.shape[1]
    rows = np.repeat(dofs, n, axis=1).ravel()
    cols = np.tile(dofs, (1, n)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs)).tocsr()


def shifted_helmholtz_local(space, quasimomentum, k_t, a_t):
    """a_t·[K + iq(Cᵀ − C) + (q² − k_t²)M] per triangle"""
    em = element_matrices(space)
    q = quasimomentum
    derivative = em["derivative"]
    local = (
        em["stiffness"]
        + 1j * q * (derivative.transpose(0, 2, 1) - derivative)
        + (q * q - k_t[:, None, None] ** 2) * em["mass"]
    )
    return a_t[:, None, None] * local


def global_mass(space, triangles=None):
    em = element_matrices(space)
    mass = em["mass"] if triangles is None else em["mass"] * _indicator(space, triangles)[:, None, None]
    return _scatter(space, mass)


def shifted_energy_matrix(space, quasimomentum, k_t, a_t):
    """Hermitian form of a_t(|(∇ + iqe₁)ũ|² + k_t²|ũ|²)"""
    em = element_matrices(space)
    q = quasimomentum
    derivative = em["derivative"]
    local = (
        em["stiffness"]
        + 1j * q * (derivative.transpose(0, 2, 1) - derivative)
        + (q * q + k_t[:, None, None] ** 2) * em["mass"]
    )
    return _scatter(space, a_t[:, None, None] * local)


def _indicator(space, triangles):
    mask = np.zeros(space.mesh.n_triangles)
    mask[triangles] = 1.0
    return mask


def boundary_mass(space, tag):
    """∫ φ_i φ_j ds over the mesh edges carrying ``tag``"""
    edges, dofs = space.boundary_edge_dofs(tag)
    if len(edges) == 0:
        return sp.csr_matrix((space.n_dofs, space.n_dofs))
    t, w = line_rule(2 * space.order)
    psi = edge_basis(space.order, t)
    reference = np.einsum("q,qi,qj->ij", w, psi, psi)
    lengths = np.linalg.norm(space.mesh.vertices[edges[:, 1]] - space.mesh.vertices[edges[:, 0]], axis=1)
    local = lengths[:, None, None] * reference[None, :, :]
    n = dofs.shape[1]
    rows = np.repeat(dofs, n, axis=1).ravel()
    cols = np.tile(dofs, (1, n)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs)).tocsr()


def dtn_block(space, height, N, k, quasimomentum, sign=1.0):
    """Pᴴ·diag(2π·sign·iβ_n)·P together with the transform P and the exponents"""
    P = trace_mode_matrix(space, height, N)
    beta = beta_from_alpha(k, np.arange(-N, N + 1) + quasimomentum)
    diagonal = sign * 2.0j * np.pi * beta
    block = (P.conj().T @ sp.diags(diagonal) @ P).tocsr()
    return block, P, beta


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------

def _finish(space, matrix, rhs, constrained, parts, quasimomentum, wavenumbers, weights, metadata):
    constrained = np.asarray(constrained, dtype=np.int64)
    free = np.setdiff1d(np.arange(space.n_dofs), constrained)
    matrix = matrix.tocsr()
    reduced = matrix[free][:, free].tocsr()
    logger.info(
        "assembled %s system: %d dofs (%d free), N = %s",
        metadata.get("bc"), space.n_dofs, len(free), metadata.get("N"),
    )
    if metadata.get("wood_anomaly"):
        logger.warning("Wood anomaly in %s system; certification will be refused", metadata.get("bc"))
    return AssembledSystem(
        matrix=reduced,
        rhs=rhs[free],
        free=free,
        n_dofs=space.n_dofs,
        space=space,
        constrained=constrained,
        full_matrix=matrix,
        full_rhs=rhs,
        parts=parts,
        quasimomentum=quasimomentum,
        wavenumbers=wavenumbers,
        weights=weights,
        metadata=metadata,
    )


@lru_cache(maxsize=SPACE_CACHE_SIZE)
def _cached_space(mesh, fe_order):
    return LagrangeSpace(mesh, fe_order)


def _space_for(mesh, fe_order):
    """Lagrange space of a mesh, cached per (mesh, order)"""
    if isinstance(mesh, LagrangeSpace):
        return mesh
    return _cached_space(mesh, fe_order)


def _require_one_sided(space):
    if space.mesh.two_sided:
        raise ValueError("this problem needs a one-sided mesh of Omega_R")
    if len(space.mesh.edges_with_tag(GAMMA_R_PLUS)) == 0:
        raise ValueError("mesh has an empty Gamma_R trace")


def _incident_rhs(wave, R, P):
    """F(φ_j) = −2iβe^{−iβR}γ·∫_{Γ_R} φ_j dx₁, from the order-0 row of the transform"""
    g = incident_functional_coefficient(wave, R)
    N = (P.shape[0] - 1) // 2
    row0 = np.asarray(P[N].todense()).ravel()
    return -g * 2.0 * np.pi * np.conj(row0)


def _one_sided_system(space, wave, N, impedance=None):
    _require_one_sided(space)
    check_truncation(wave.k, wave.alpha, N)
    R = space.mesh.R
    n_tri = space.mesh.n_triangles
    k_t = np.full(n_tri, wave.k)
    a_t = np.ones(n_tri)

    volume = _scatter(space, shifted_helmholtz_local(space, wave.alpha, k_t, a_t))
    dtn, P, beta = dtn_block(space, R, N, wave.k, wave.alpha)
    parts = {"volume": volume, "dtn_plus": -dtn}
    matrix = volume - dtn
    if impedance is not None:
        parts["impedance"] = -1j * impedance * boundary_mass(space, GAMMA_PROFILE)
        matrix = matrix + parts["impedance"]

    rhs = _incident_rhs(wave, R, P)
    metadata = {
        "bc": "dirichlet" if impedance is None else "impedance",
        "wave": wave,
        "N": N,
        "R": R,
        "wood_anomaly": is_wood_anomaly(wave.k, beta),
    }
    if impedance is not None:
        metadata["lambda"] = impedance
    return matrix, rhs, parts, metadata


def assemble_dirichlet(mesh, wave, N, fe_order=2):
    """Sound-soft grating: a(u, v) = F(v) with u = 0 on Γ"""
    space = _space_for(mesh, fe_order)
    matrix, rhs, parts, metadata = _one_sided_system(space, wave, N)
    return _finish(
        space, matrix, rhs, space.dirichlet_dofs(), parts, wave.alpha,
        {UPPER: wave.k}, {UPPER: 1.0}, metadata,
    )


def assemble_impedance(mesh, wave, lam, N, fe_order=2):
    """Absorbing grating: ∂_νu + iλu = 0 on Γ, natural in the form"""
    if not lam > 0:
        raise ValueError(f"surface impedance must be positive, got lambda = {lam}")
    space = _space_for(mesh, fe_order)
    matrix, rhs, parts, metadata = _one_sided_system(space, wave, N, impedance=lam)
    return _finish(
        space, matrix, rhs, [], parts, wave.alpha,
        {UPPER: wave.k}, {UPPER: 1.0}, metadata,
    )


def assemble_transmission(mesh, wave, k_minus, lam, N, fe_order=2):
    """Penetrable grating: weighted form with a = 1, k₊ above Γ and a = λ, k₋ below"""
    Transmission(k_minus, lam).check_contrast(wave.k)
    space = _space_for(mesh, fe_order)
    if not space.mesh.two_sided:
        raise ValueError("transmission needs a two-sided mesh of S_R")
    check_truncation(wave.k, wave.alpha, N)
    check_truncation(k_minus, wave.alpha, N)

    R = space.mesh.R
    lower = space.mesh.region_tags == LOWER
    k_t = np.where(lower, k_minus, wave.k)
    a_t = np.where(lower, lam, 1.0)

    volume = _scatter(space, shifted_helmholtz_local(space, wave.alpha, k_t, a_t))
    dtn_plus, P_plus, beta_plus = dtn_block(space, R, N, wave.k, wave.alpha)
    dtn_minus, _, beta_minus = dtn_block(space, -R, N, k_minus, wave.alpha, sign=-1.0)
    parts = {"volume": volume, "dtn_plus": -dtn_plus, "dtn_minus": lam * dtn_minus}
    matrix = volume - dtn_plus + lam * dtn_minus

    rhs = _incident_rhs(wave, R, P_plus)
    metadata = {
        "bc": "transmission",
        "wave": wave,
        "N": N,
        "R": R,
        "k_minus": k_minus,
        "lambda": lam,
        "wood_anomaly": is_wood_anomaly(wave.k, beta_plus) or is_wood_anomaly(k_minus, beta_minus),
    }
    return _finish(
        space, matrix, rhs, [], parts, wave.alpha,
        {UPPER: wave.k, LOWER: k_minus}, {UPPER: 1.0, LOWER: lam}, metadata,
    )


def assemble_auxiliary(mesh, wave, source, N=None):
    """Adjoint-type auxiliary problem: Δw + k²w = ū, w = 0 on Γ, T̂w = ∂₂w on Γ_R.

    Solved for the −α-quasiperiodic w; the right-hand side −∫ū v̄ dx reduces
    to −M·conj(ũ) in Bloch form because the two phases cancel.
    """
    space = source.space
    if space is None or space.mesh is not mesh:
        raise ValueError("auxiliary source must live on the same mesh")
    _require_one_sided(space)
    if N is None:
        N = source.metadata.get("N")
    q = -wave.alpha
    check_truncation(wave.k, q, N)

    n_tri = space.mesh.n_triangles
    volume = _scatter(space, shifted_helmholtz_local(space, q, np.full(n_tri, wave.k), np.ones(n_tri)))
    dtn, _, beta = dtn_block(space, space.mesh.R, N, wave.k, q)
    matrix = volume - dtn
    rhs = -(global_mass(space) @ np.conj(source.dofs))

    metadata = {
        "bc": "auxiliary",
        "wave": wave,
        "N": N,
        "R": space.mesh.R,
        "wood_anomaly": is_wood_anomaly(wave.k, beta),
    }
    return _finish(
        space, matrix, rhs, space.dirichlet_dofs(), {"volume": volume, "dtn_plus": -dtn}, q,
        {UPPER: wave.k}, {UPPER: 1.0}, metadata,
    )


def assemble(bc, mesh, wave, N, fe_order=2):
    """Dispatch on the boundary model"""
    if isinstance(bc, Dirichlet):
        return assemble_dirichlet(mesh, wave, N, fe_order)
    if isinstance(bc, Impedance):
        return assemble_impedance(mesh, wave, bc.lam, N, fe_order)
    if isinstance(bc, Transmission):
        return assemble_transmission(mesh, wave, bc.k_minus, bc.lam, N, fe_order)
    raise ValueError(f"unknown boundary model {bc!r}")


# ---------------------------------------------------------------------------
# Solution and diagnostics
# ---------------------------------------------------------------------------

def solve(system):
    """Direct sparse LU solve of the reduced system"""
    rhs = system.rhs
    n_free = len(system.free)
    dofs = np.zeros(system.n_dofs, dtype=complex)
    residual = 0.0

    rhs_norm = np.linalg.norm(rhs)
    if n_free and rhs_norm > 0:
        try:
            lu = splinalg.splu(sp.csc_matrix(system.matrix, dtype=complex))
        except RuntimeError as e:
            raise SolverError(
                f"singular factorization ({str(e)}); suspect a Wood anomaly or a resonance"
            ) from e
        x = lu.solve(rhs.astype(complex))
        x = x + lu.solve(rhs - system.matrix @ x)
        if not np.all(np.isfinite(x)):
            raise SolverError("solution contains non-finite values; suspect a Wood anomaly or a resonance")
        residual = float(np.linalg.norm(system.matrix @ x - rhs) / rhs_norm)
        if not residual <= RESIDUAL_TOL:
            raise SolverError(f"relative residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}")
        dofs[system.free] = x

    metadata = dict(system.metadata)
    metadata["residual"] = residual
    logger.info("solved %s system: residual %.2e", metadata.get("bc", "linear"), residual)
    return DiscreteField(
        space=system.space,
        dofs=dofs,
        quasimomentum=system.quasimomentum,
        wavenumbers=dict(system.wavenumbers),
        weights=dict(system.weights),
        metadata=metadata,
    )


def basis_norms(space):
    """H¹ norms of the (periodic) basis functions"""
    em = element_matrices(space)
    local = em["stiffness"] + em["mass"]
    diagonal = np.einsum("tii->ti", local)
    norms = np.zeros(space.n_dofs)
    np.add.at(norms, space.cell_dofs.ravel(), diagonal.ravel())
    return np.sqrt(norms)


def galerkin_residual(system, field):
    """|a(u_h, φ_i) − F(φ_i)| / ‖φ_i‖ for every free basis function"""
    residual = system.full_matrix @ field.dofs - system.full_rhs
    return np.abs(residual[system.free]) / basis_norms(system.space)[system.free]


def energy_form(system, field):
    """a(u, u) split into its assembled parts, together with F(u)"""
    u = field.dofs
    terms = {name: complex(np.vdot(u, part @ u)) for name, part in system.parts.items()}
    terms["total"] = sum(terms.values())
    terms["load"] = complex(np.vdot(u, system.full_rhs))
    return terms
