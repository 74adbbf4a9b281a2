"""Triangulated rectangles, P1 nodal fields, gradients and quadrature.

The mesh is a uniform criss-cross triangulation of an axis-aligned
rectangle: each grid cell is split along a diagonal whose direction
alternates with the cell parity, so every element is a right triangle
and axis reflections of the rectangle map triangles onto triangles.
Meshes and fields are immutable after construction; derived operators
(gradient scatter matrices, quadrature tables, the Dirichlet Laplacian
factorization) are built once and cached on the mesh.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, NumericDomainError

QUAD_RULES = ("vertex", "midpoint")


class Mesh:
    """Uniform criss-cross triangulation of ``[x0,x1] x [y0,y1]``.

    Attributes:
        rect: (x0, x1, y0, y1) of the domain rectangle.
        nx, ny: subdivision counts per axis (>= 2).
        vertices: (V, 2) vertex coordinates.
        triangles: (T, 3) vertex indices, counter-clockwise.
        interior_mask: (V,) True for non-Dirichlet vertices.
        areas: (T,) triangle areas.
        grads: (T, 3, 2) gradients of the three nodal basis functions.
    """

    def __init__(self, rect, nx: int, ny: int):
        x0, x1, y0, y1 = (float(v) for v in rect)
        if not (x1 > x0 and y1 > y0):
            raise InvalidArgument(f"degenerate rectangle {rect!r}")
        if nx < 2 or ny < 2:
            raise InvalidArgument(f"subdivision counts must be >= 2, got {nx}x{ny}")
        self.rect = (x0, x1, y0, y1)
        self.nx = int(nx)
        self.ny = int(ny)

        xs = np.linspace(x0, x1, nx + 1)
        ys = np.linspace(y0, y1, ny + 1)
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        self.vertices = np.column_stack([X.ravel(), Y.ravel()])

        def vid(i, j):
            return j * (nx + 1) + i

        tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
        t = 0
        for j in range(ny):
            for i in range(nx):
                v00, v10 = vid(i, j), vid(i + 1, j)
                v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
                if (i + j) % 2 == 0:
                    tris[t] = (v00, v10, v11)
                    tris[t + 1] = (v00, v11, v01)
                else:
                    tris[t] = (v00, v10, v01)
                    tris[t + 1] = (v10, v11, v01)
                t += 2
        self.triangles = tris

        I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
        on_edge = (I.ravel() == 0) | (I.ravel() == nx) | (J.ravel() == 0) | (J.ravel() == ny)
        self.interior_mask = ~on_edge
        self.interior_idx = np.flatnonzero(self.interior_mask)

        p = self.vertices[self.triangles]  # (T, 3, 2)
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self.areas = 0.5 * det
        if np.any(self.areas <= 0):
            raise InvalidArgument("triangulation produced a non-positive area")

        # grad of basis i: rotate the opposite edge by 90 degrees / (2A)
        grads = np.empty((len(tris), 3, 2))
        for i in range(3):
            a = p[:, (i + 1) % 3]
            b = p[:, (i + 2) % 3]
            grads[:, i, 0] = (a[:, 1] - b[:, 1]) / det
            grads[:, i, 1] = (b[:, 0] - a[:, 0]) / det
        self.grads = grads

        T = len(tris)
        rows = np.repeat(np.arange(T), 3)
        cols = tris.ravel()
        self._gx = sp.csr_matrix((grads[:, :, 0].ravel(), (rows, cols)), shape=(T, self.n_vertices))
        self._gy = sp.csr_matrix((grads[:, :, 1].ravel(), (rows, cols)), shape=(T, self.n_vertices))

        self._quad_cache: dict[str, Quadrature] = {}
        self._cache: dict = {}

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_interior(self) -> int:
        return len(self.interior_idx)

    @property
    def domain_area(self) -> float:
        x0, x1, y0, y1 = self.rect
        return (x1 - x0) * (y1 - y0)

    def quadrature(self, rule: str) -> "Quadrature":
        if rule not in QUAD_RULES:
            raise InvalidArgument(f"unknown quadrature rule {rule!r}; choose from {QUAD_RULES}")
        if rule not in self._quad_cache:
            self._quad_cache[rule] = _build_quadrature(self, rule)
        return self._quad_cache[rule]

    def dirichlet_laplacian_solver(self) -> Callable[[np.ndarray], np.ndarray]:
        """LU-backed solve of the interior P1 stiffness matrix of ``-laplace``."""
        key = "laplacian_solver"
        if key not in self._cache:
            local = self.areas[:, None, None] * np.einsum("tik,tjk->tij", self.grads, self.grads)
            rows = np.repeat(self.triangles, 3, axis=1).ravel()
            cols = np.tile(self.triangles, (1, 3)).ravel()
            K = sp.coo_matrix((local.ravel(), (rows, cols)),
                              shape=(self.n_vertices, self.n_vertices)).tocsc()
            Kii = K[self.interior_idx][:, self.interior_idx]
            self._cache[key] = spla.splu(Kii.tocsc()).solve
        return self._cache[key]

    def to_text(self) -> str:
        """Serialize vertices, triangles and boundary flags for external plotting."""
        x0, x1, y0, y1 = self.rect
        lines = [
            "# dphase mesh",
            f"# rect {x0!r} {x1!r} {y0!r} {y1!r}",
            f"# nx ny {self.nx} {self.ny}",
            f"# vertices {self.n_vertices}  (index x y interior)",
        ]
        for i, (x, y) in enumerate(self.vertices):
            lines.append(f"{i} {x!r} {y!r} {int(self.interior_mask[i])}")
        lines.append(f"# triangles {self.n_triangles}  (index v0 v1 v2)")
        for t, (a, b, c) in enumerate(self.triangles):
            lines.append(f"{t} {a} {b} {c}")
        return "\n".join(lines) + "\n"


@dataclass
class Quadrature:
    """Point table of a per-triangle rule with P1 interpolation weights.

    ``points[3*t + k]`` lies in triangle ``t``; ``interp`` maps nodal values
    to point values; ``weights`` already carry the triangle areas.
    """

    rule: str
    points: np.ndarray        # (P, 2)
    weights: np.ndarray       # (P,)
    interp: sp.csr_matrix     # (P, V)
    tri_of_point: np.ndarray  # (P,)


def _build_quadrature(mesh: Mesh, rule: str) -> Quadrature:
    T = mesh.n_triangles
    V = mesh.n_vertices
    p = mesh.vertices[mesh.triangles]  # (T, 3, 2)
    w = np.repeat(mesh.areas / 3.0, 3)
    tri_of_point = np.repeat(np.arange(T), 3)
    rows = np.repeat(np.arange(3 * T), 2)
    if rule == "vertex":
        pts = p.reshape(-1, 2)
        cols = mesh.triangles.ravel()
        data = np.ones(3 * T)
        interp = sp.csr_matrix((data, (np.arange(3 * T), cols)), shape=(3 * T, V))
    else:  # midpoint: one point per edge, exact on quadratics
        mids = np.empty((T, 3, 2))
        cols = np.empty((T, 3, 2), dtype=np.int64)
        for k, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
            mids[:, k] = 0.5 * (p[:, a] + p[:, b])
            cols[:, k, 0] = mesh.triangles[:, a]
            cols[:, k, 1] = mesh.triangles[:, b]
        pts = mids.reshape(-1, 2)
        data = np.full(2 * 3 * T, 0.5)
        interp = sp.csr_matrix((data, (rows, cols.ravel())), shape=(3 * T, V))
    return Quadrature(rule, pts, w, interp, tri_of_point)


@dataclass
class MeshFunction:
    """P1 nodal field on a mesh, zero on the Dirichlet boundary by default."""

    mesh: Mesh
    values: np.ndarray
    dirichlet: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise InvalidArgument(
                f"expected {self.mesh.n_vertices} nodal values, got shape {self.values.shape}")
        if self.dirichlet and np.any(self.values[~self.mesh.interior_mask] != 0.0):
            raise InvalidArgument("Dirichlet field has nonzero boundary values")

    @classmethod
    def zeros(cls, mesh: Mesh) -> "MeshFunction":
        return cls(mesh, np.zeros(mesh.n_vertices))

    @classmethod
    def interpolate(cls, mesh: Mesh, fn, dirichlet: bool = True) -> "MeshFunction":
        """Nodal interpolant of ``fn(x, y)``; boundary values forced to 0 if Dirichlet."""
        vals = np.asarray(fn(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float)
        if dirichlet:
            vals = np.where(mesh.interior_mask, vals, 0.0)
        return cls(mesh, vals, dirichlet=dirichlet)

    def copy_with(self, values: np.ndarray) -> "MeshFunction":
        return MeshFunction(self.mesh, values, dirichlet=self.dirichlet)

    def __add__(self, other):
        return MeshFunction(self.mesh, self.values + other.values,
                            dirichlet=self.dirichlet and other.dirichlet)

    def __sub__(self, other):
        return MeshFunction(self.mesh, self.values - other.values,
                            dirichlet=self.dirichlet and other.dirichlet)

    def __mul__(self, c: float):
        return MeshFunction(self.mesh, self.values * float(c), dirichlet=self.dirichlet)

    __rmul__ = __mul__

    def __neg__(self):
        return MeshFunction(self.mesh, -self.values, dirichlet=self.dirichlet)


@dataclass
class CellField:
    """One 2-vector per triangle; holds piecewise-constant gradients."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_triangles, 2):
            raise InvalidArgument(
                f"expected shape ({self.mesh.n_triangles}, 2), got {self.values.shape}")

    @property
    def magnitudes(self) -> np.ndarray:
        return np.hypot(self.values[:, 0], self.values[:, 1])

    def __mul__(self, c: float):
        return CellField(self.mesh, self.values * float(c))

    __rmul__ = __mul__


def build_mesh(rect, nx: int, ny: int) -> Mesh:
    """Triangulate ``rect = (x0, x1, y0, y1)`` into ``2*nx*ny`` right triangles."""
    return Mesh(rect, nx, ny)


def gradient(u: MeshFunction) -> CellField:
    """Per-triangle constant gradient of the P1 interpolant."""
    m = u.mesh
    return CellField(m, np.column_stack([m._gx @ u.values, m._gy @ u.values]))


def integrate_cells(mesh: Mesh, w: np.ndarray) -> float:
    """Integral of a piecewise-constant integrand: sum of w_t * area_t."""
    w = np.asarray(w, dtype=float)
    if w.shape != (mesh.n_triangles,):
        raise InvalidArgument(
            f"expected {mesh.n_triangles} per-triangle values, got shape {w.shape}")
    return float(mesh.areas @ w)


def integrate_nodal(u: MeshFunction, g, rule: str = "midpoint") -> float:
    """Quadrature of ``g(x, u(x))`` over the domain.

    ``g`` receives the quadrature points (P, 2) and the interpolated field
    values (P,) and must return (P,) finite values. The vertex rule is exact
    on P1 integrands, the midpoint rule on quadratics.
    """
    quad = u.mesh.quadrature(rule)
    vals = quad.interp @ u.values
    gv = np.asarray(g(quad.points, vals), dtype=float)
    bad = ~np.isfinite(gv)
    if np.any(bad):
        t = int(quad.tri_of_point[int(np.argmax(bad))])
        raise NumericDomainError(f"non-finite integrand value in triangle {t}")
    return float(quad.weights @ gv)


def split_parts(u: MeshFunction) -> tuple[MeshFunction, MeshFunction]:
    """Nodal positive/negative parts: u = u_plus - u_minus, both admissible."""
    up = np.maximum(u.values, 0.0)
    um = np.maximum(-u.values, 0.0)
    return u.copy_with(up), u.copy_with(um)


def cell_average_weight(mesh: Mesh, weight, rule: str = "midpoint") -> np.ndarray:
    """Per-triangle average of a spatial weight sampled at quadrature points.

    Raises if the weight is negative at any sampled point.
    """
    key = ("muavg", rule, weight)
    if key not in mesh._cache:
        quad = mesh.quadrature(rule)
        muq = np.asarray(weight.eval(quad.points), dtype=float)
        if np.any(muq < 0):
            i = int(np.argmax(muq < 0))
            raise InvalidArgument(
                f"weight is negative at quadrature point {quad.points[i]}")
        mesh._cache[key] = muq.reshape(-1, 3).mean(axis=1)
    return mesh._cache[key]
