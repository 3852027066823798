import logging

from components.solve_runner import build_meshes
from models.mesh import dump_mesh

logger = logging.getLogger(__name__)


def run_mesh_dump(config, path=None):
    """Write the finest mesh of the configured geometry; returns the mesh"""
    domain = config.build_domain()
    mesh = build_meshes(config, domain)[-1]
    path = path or config.output
    dump_mesh(mesh, path)
    logger.info(
        "mesh for %s (R = %g): %d vertices, %d triangles, h = %.4g, min angle %.1f deg",
        config.profile, domain.R, mesh.n_vertices, mesh.n_triangles, mesh.h, mesh.min_angle_deg(),
    )
    return mesh
