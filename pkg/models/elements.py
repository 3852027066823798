"""Lagrange P1/P2 elements on periodic meshes."""
import logging

import numpy as np

from models.mesh import GAMMA_PROFILE

logger = logging.getLogger(__name__)

# Reference edges, in the order of the P2 midpoint nodes
REFERENCE_EDGES = ((0, 1), (1, 2), (2, 0))


def _barycentric(points):
    points = np.atleast_2d(points)
    xi, eta = points[:, 0], points[:, 1]
    return np.column_stack([1.0 - xi - eta, xi, eta])


def tabulate(order, points):
    """Basis values on the reference triangle, shape (q, n_local)"""
    lam = _barycentric(points)
    if order == 1:
        return lam
    if order == 2:
        vertex = lam * (2.0 * lam - 1.0)
        edge = np.column_stack([4.0 * lam[:, a] * lam[:, b] for a, b in REFERENCE_EDGES])
        return np.hstack([vertex, edge])
    raise ValueError(f"unsupported element order {order}")


def tabulate_gradients(order, points):
    """Reference gradients, shape (q, n_local, 2)"""
    lam = _barycentric(points)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if order == 1:
        return np.broadcast_to(dlam, (len(lam), 3, 2)).copy()
    if order == 2:
        vertex = (4.0 * lam - 1.0)[:, :, None] * dlam[None, :, :]
        edge = np.stack(
            [4.0 * (lam[:, a, None] * dlam[None, b] + lam[:, b, None] * dlam[None, a]) for a, b in REFERENCE_EDGES],
            axis=1,
        )
        return np.concatenate([vertex, edge], axis=1)
    raise ValueError(f"unsupported element order {order}")


def edge_basis(order, t):
    """1-D trace basis on an edge parametrized by t ∈ [0, 1]: (start, end[, midpoint])"""
    t = np.asarray(t, dtype=float)
    if order == 1:
        return np.column_stack([1.0 - t, t])
    if order == 2:
        return np.column_stack([(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)])
    raise ValueError(f"unsupported element order {order}")


class LagrangeSpace:
    """Continuous Lagrange space of order 1 or 2 with periodic dof identification.

    Nodes are the mesh vertices followed (order 2) by one node per unique
    edge. Nodes on x₁ = 2π share the dof of their partner on x₁ = 0, so a
    dof vector represents a 2π-periodic function: the Bloch factor ũ.
    """

    def __init__(self, mesh, order=2):
        if order not in (1, 2):
            raise ValueError(f"fe_order must be 1 or 2, got {order}")
        self.mesh = mesh
        self.order = order
        self.n_local = 3 if order == 1 else 6
        self._element_matrices = None
        self._build_nodes()
        self._build_dofs()
        self._build_geometry()
        logger.debug("P%d space: %d nodes, %d dofs", order, self.n_nodes, self.n_dofs)

    def _build_nodes(self):
        mesh = self.mesh
        triangles = mesh.triangles
        self.edge_node = {}
        if self.order == 1:
            self.node_coords = mesh.vertices.copy()
            self.cell_nodes = triangles.copy()
            return

        local = np.stack([triangles[:, [a, b]] for a, b in REFERENCE_EDGES], axis=1)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        unique_edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1, 3)

        n_vertices = mesh.n_vertices
        midpoints = 0.5 * (mesh.vertices[unique_edges[:, 0]] + mesh.vertices[unique_edges[:, 1]])
        self.node_coords = np.vstack([mesh.vertices, midpoints])
        self.cell_nodes = np.hstack([triangles, n_vertices + inverse])
        self.edge_node = {(int(a), int(b)): n_vertices + i for i, (a, b) in enumerate(unique_edges)}

    def _representative(self, vertex):
        return self.mesh.periodic_pairs.get(vertex, vertex)

    def _build_dofs(self):
        mesh = self.mesh
        n_vertices = mesh.n_vertices
        keys = [("v", self._representative(v)) for v in range(n_vertices)]
        if self.order == 2:
            by_node = sorted((node, edge) for edge, node in self.edge_node.items())
            for node, (a, b) in by_node:
                ra, rb = self._representative(a), self._representative(b)
                keys.append(("e", min(ra, rb), max(ra, rb)))

        dof_of_key = {}
        node_dof = np.empty(len(keys), dtype=np.int64)
        for node, key in enumerate(keys):
            node_dof[node] = dof_of_key.setdefault(key, len(dof_of_key))
        self.node_dof = node_dof
        self.n_nodes = len(keys)
        self.n_dofs = len(dof_of_key)
        self.cell_dofs = node_dof[self.cell_nodes]

    def _build_geometry(self):
        corners = self.mesh.vertices[self.mesh.triangles]
        # J[t] maps reference coordinates to physical coordinates
        J = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
        self.origin = corners[:, 0]
        self.jacobians = J
        self.det_jacobians = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        self.inverse_jacobians = np.linalg.inv(J)

    def edge_nodes(self, v0, v1):
        """Nodes of a mesh edge in trace-basis order: start, end[, midpoint]"""
        nodes = [int(v0), int(v1)]
        if self.order == 2:
            nodes.append(self.edge_node[(min(int(v0), int(v1)), max(int(v0), int(v1)))])
        return nodes

    def boundary_edge_dofs(self, tag):
        """(edges, dofs) for all mesh edges carrying ``tag``"""
        edges = self.mesh.edges_with_tag(tag)
        nodes = np.array([self.edge_nodes(v0, v1) for v0, v1 in edges], dtype=np.int64).reshape(len(edges), -1)
        return edges, self.node_dof[nodes]

    def boundary_dofs(self, tag):
        _, dofs = self.boundary_edge_dofs(tag)
        return np.unique(dofs)

    def dirichlet_dofs(self):
        return self.boundary_dofs(GAMMA_PROFILE)

    def physical_points(self, reference_points):
        """Map reference points into every triangle, shape (n_triangles, q, 2)"""
        return self.origin[:, None, :] + np.einsum("tdk,qk->tqd", self.jacobians, reference_points)

    def physical_gradients(self, reference_points):
        """Physical basis gradients, shape (n_triangles, q, n_local, 2)"""
        dphi = tabulate_gradients(self.order, reference_points)
        return np.einsum("tkd,qik->tqid", self.inverse_jacobians, dphi)

    def node_values(self, dofs):
        return np.asarray(dofs)[self.node_dof]

    def locate(self, points):
        """Triangle index and reference coordinates of each point (−1 if outside)"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells = np.full(len(points), -1, dtype=np.int64)
        reference = np.zeros_like(points)
        for i, point in enumerate(points):
            local = np.einsum("tkd,td->tk", self.inverse_jacobians, point[None, :] - self.origin)
            lam = np.column_stack([1.0 - local.sum(axis=1), local])
            inside = np.flatnonzero(np.all(lam >= -1e-12, axis=1))
            if len(inside):
                cells[i] = inside[0]
                reference[i] = local[inside[0]]
        return cells, reference
