"""Structured fiber meshes of the truncated grating cell with periodic identification."""
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from models.geometry import TWO_PI

logger = logging.getLogger(__name__)

GAMMA_PROFILE = "GammaProfile"
GAMMA_R_PLUS = "GammaR_plus"
GAMMA_R_MINUS = "GammaR_minus"
PERIODIC_LEFT = "PeriodicLeft"
PERIODIC_RIGHT = "PeriodicRight"
EDGE_TAGS = (GAMMA_PROFILE, GAMMA_R_PLUS, GAMMA_R_MINUS, PERIODIC_LEFT, PERIODIC_RIGHT)

UPPER = "Upper"
LOWER = "Lower"

MIN_ANGLE_DEG = 15.0


@dataclass(frozen=True, eq=False)
class PeriodicMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    periodic_pairs: dict
    edges: np.ndarray
    edge_tags: np.ndarray
    region_tags: np.ndarray
    R: float
    two_sided: bool = False
    profile: Optional[object] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("vertices", "triangles", "edges", "edge_tags", "region_tags"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def h(self):
        """Maximum edge length"""
        corners = self.vertices[self.triangles]
        lengths = np.linalg.norm(corners - np.roll(corners, -1, axis=1), axis=2)
        return float(lengths.max())

    def signed_areas(self):
        p0, p1, p2 = (self.vertices[self.triangles[:, i]] for i in range(3))
        d1 = p1 - p0
        d2 = p2 - p0
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angle_deg(self):
        corners = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            u = corners[:, (i + 1) % 3] - corners[:, i]
            v = corners[:, (i + 2) % 3] - corners[:, i]
            cosine = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0))))
        return float(np.min(angles))

    def edges_with_tag(self, tag):
        return self.edges[self.edge_tags == tag]

    def triangles_in(self, region):
        return np.flatnonzero(self.region_tags == region)

    def vertices_on(self, tag):
        return np.unique(self.edges_with_tag(tag).ravel())


def _column_positions(profile, h_target):
    """Profile knots plus uniform subdivisions with spacing ≤ h_target"""
    x = profile.x
    dx = np.diff(x)
    if np.any(dx <= 1e-14):
        raise ValueError("degenerate profile: consecutive duplicate knots")

    columns = [np.array([0.0])]
    for x0, x1 in zip(x[:-1], x[1:]):
        pieces = max(1, int(np.ceil((x1 - x0) / h_target - 1e-12)))
        columns.append(np.linspace(x0, x1, pieces + 1)[1:])
    xs = np.concatenate(columns)
    xs[-1] = TWO_PI
    return xs


def generate_mesh(domain, h_target):
    """Generate the structured fiber mesh of Ω_R (one-sided) or S_R (two-sided).

    Every profile knot is a mesh column; fibers run vertically from the
    profile to ±R with a uniform number of layers per fiber, and each quad
    is split along its shorter diagonal.
    """
    if not h_target > 0:
        raise ValueError(f"h_target must be positive, got {h_target}")

    profile = domain.profile
    R = float(domain.R)
    xs = _column_positions(profile, h_target)
    fs = profile(xs)
    fs[-1] = fs[0]
    n_columns = len(xs)
    if n_columns < 4:
        raise ValueError("mesh needs at least three column intervals")

    n_up = max(1, int(np.ceil(np.max(R - fs) / h_target - 1e-12)))
    n_low = max(1, int(np.ceil(np.max(fs + R) / h_target - 1e-12))) if domain.two_sided else 0
    per_column = n_low + n_up + 1

    # Vertex (j, r): column j, row r; row n_low lies on the profile
    rows_up = np.arange(n_up + 1) / n_up
    upper = fs[:, None] + (R - fs)[:, None] * rows_up[None, :]
    if n_low:
        rows_low = np.arange(n_low) / n_low
        lower = -R + (fs + R)[:, None] * rows_low[None, :]
        heights = np.hstack([lower, upper])
    else:
        heights = upper
    vertices = np.column_stack([np.repeat(xs, per_column), heights.ravel()])

    def vid(j, r):
        return j * per_column + r

    triangles = []
    regions = []
    for j in range(n_columns - 1):
        for r in range(per_column - 1):
            a, b, c, d = vid(j, r), vid(j + 1, r), vid(j + 1, r + 1), vid(j, r + 1)
            diag_ac = np.linalg.norm(vertices[c] - vertices[a])
            diag_bd = np.linalg.norm(vertices[d] - vertices[b])
            if diag_ac <= diag_bd:
                triangles.extend([(a, b, c), (a, c, d)])
            else:
                triangles.extend([(a, b, d), (b, c, d)])
            region = LOWER if r < n_low else UPPER
            regions.extend([region, region])
    triangles = np.array(triangles, dtype=np.int64)

    edges = []
    tags = []
    last = n_columns - 1
    for j in range(last):
        edges.append((vid(j, n_low), vid(j + 1, n_low)))
        tags.append(GAMMA_PROFILE)
        edges.append((vid(j, per_column - 1), vid(j + 1, per_column - 1)))
        tags.append(GAMMA_R_PLUS)
        if n_low:
            edges.append((vid(j, 0), vid(j + 1, 0)))
            tags.append(GAMMA_R_MINUS)
    for r in range(per_column - 1):
        edges.append((vid(0, r), vid(0, r + 1)))
        tags.append(PERIODIC_LEFT)
        edges.append((vid(last, r), vid(last, r + 1)))
        tags.append(PERIODIC_RIGHT)

    pairs = {vid(last, r): vid(0, r) for r in range(per_column)}

    mesh = PeriodicMesh(
        vertices=vertices,
        triangles=triangles,
        periodic_pairs=pairs,
        edges=np.array(edges, dtype=np.int64),
        edge_tags=np.array(tags),
        region_tags=np.array(regions),
        R=R,
        two_sided=domain.two_sided,
        profile=profile,
    )
    _check_mesh(mesh)
    logger.info(
        "generated %s mesh: %d vertices, %d triangles, h = %.4g",
        domain.kind, mesh.n_vertices, mesh.n_triangles, mesh.h,
    )
    return mesh


def _check_mesh(mesh):
    if np.any(mesh.signed_areas() <= 0):
        raise ValueError("mesh contains triangles with nonpositive area")
    min_angle = mesh.min_angle_deg()
    if min_angle < MIN_ANGLE_DEG:
        logger.warning("minimum mesh angle %.2f deg is below %.0f deg", min_angle, MIN_ANGLE_DEG)


def refine(mesh):
    """Uniform red refinement: every triangle split into four through its edge midpoints"""
    triangles = mesh.triangles
    n_vertices = mesh.n_vertices

    local = triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    keys = np.sort(local.reshape(-1, 2), axis=1)
    unique_edges, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1, 3)
    midpoints = 0.5 * (mesh.vertices[unique_edges[:, 0]] + mesh.vertices[unique_edges[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])
    midpoint_of = {tuple(edge): n_vertices + i for i, edge in enumerate(unique_edges)}

    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    m_ab = n_vertices + inverse[:, 0]
    m_bc = n_vertices + inverse[:, 1]
    m_ca = n_vertices + inverse[:, 2]
    children = np.stack(
        [
            np.column_stack([a, m_ab, m_ca]),
            np.column_stack([m_ab, b, m_bc]),
            np.column_stack([m_ca, m_bc, c]),
            np.column_stack([m_ab, m_bc, m_ca]),
        ],
        axis=1,
    ).reshape(-1, 3)
    regions = np.repeat(mesh.region_tags, 4)

    edges = []
    tags = []
    for (v0, v1), tag in zip(mesh.edges, mesh.edge_tags):
        m = midpoint_of[(min(v0, v1), max(v0, v1))]
        edges.extend([(v0, m), (m, v1)])
        tags.extend([tag, tag])

    pairs = dict(mesh.periodic_pairs)
    for v0, v1 in mesh.edges_with_tag(PERIODIC_RIGHT):
        p0, p1 = mesh.periodic_pairs[v0], mesh.periodic_pairs[v1]
        m = midpoint_of[(min(v0, v1), max(v0, v1))]
        pairs[m] = midpoint_of[(min(p0, p1), max(p0, p1))]

    refined = PeriodicMesh(
        vertices=vertices,
        triangles=children,
        periodic_pairs=pairs,
        edges=np.array(edges, dtype=np.int64),
        edge_tags=np.array(tags),
        region_tags=regions,
        R=mesh.R,
        two_sided=mesh.two_sided,
        profile=mesh.profile,
    )
    logger.info("refined mesh: %d vertices, %d triangles", refined.n_vertices, refined.n_triangles)
    return refined


def dump_mesh(mesh, path):
    """Write the mesh as plain text with $Vertices, $Triangles, $Pairs and $Tags sections"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(path, "w") as handle:
        handle.write("$Vertices\n")
        handle.write(f"{mesh.n_vertices}\n")
        for i, (x1, x2) in enumerate(mesh.vertices):
            handle.write(f"{i} {x1:.17g} {x2:.17g}\n")
        handle.write("$EndVertices\n")

        handle.write("$Triangles\n")
        handle.write(f"{mesh.n_triangles}\n")
        for i, (v0, v1, v2) in enumerate(mesh.triangles):
            handle.write(f"{i} {v0} {v1} {v2}\n")
        handle.write("$EndTriangles\n")

        handle.write("$Pairs\n")
        handle.write(f"{len(mesh.periodic_pairs)}\n")
        for right, left in sorted(mesh.periodic_pairs.items()):
            handle.write(f"{right} {left}\n")
        handle.write("$EndPairs\n")

        handle.write("$Tags\n")
        handle.write(f"{len(mesh.edges) + mesh.n_triangles}\n")
        for (v0, v1), tag in zip(mesh.edges, mesh.edge_tags):
            handle.write(f"edge {v0} {v1} {tag}\n")
        for i, tag in enumerate(mesh.region_tags):
            handle.write(f"region {i} {tag}\n")
        handle.write("$EndTags\n")

    logger.info("dumped mesh to %s", path)
    return path
