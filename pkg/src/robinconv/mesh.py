"""Structured simplicial meshes of intervals and rectangles.

Nodes are ordered lexicographically by coordinate (x first, then y).
Elements are segments in 1D and counter-clockwise triangles in 2D. Boundary
facets carry their surface measure; an endpoint of an interval counts with
measure 1.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable P1 mesh.

    Attributes:
        nodes: ``(n_nodes, dim)`` coordinates.
        elements: ``(n_elements, dim + 1)`` node indices.
        facets: ``(n_facets, dim)`` boundary node indices.
        facet_measures: ``(n_facets,)`` surface measure of each facet.
    """

    nodes: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    facet_measures: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        object.__setattr__(self, "nodes", _frozen(nodes, float))
        object.__setattr__(self, "elements", _frozen(self.elements, np.int64))
        object.__setattr__(self, "facets", _frozen(self.facets, np.int64))
        object.__setattr__(self, "facet_measures", _frozen(self.facet_measures, float))
        self._validate()

    def _validate(self):
        dim = self.dim
        if dim not in (1, 2):
            raise InvalidArgumentError(f"unsupported dimension {dim}")
        if self.elements.ndim != 2 or self.elements.shape[1] != dim + 1:
            raise InvalidArgumentError("elements must have dim + 1 nodes each")
        if self.facets.ndim != 2 or self.facets.shape[1] != dim:
            raise InvalidArgumentError("facets must have dim nodes each")
        n = self.n_nodes
        for name, idx in (("elements", self.elements), ("facets", self.facets)):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise InvalidArgumentError(f"{name} reference nodes out of range")
        if len(self.facet_measures) != len(self.facets):
            raise InvalidArgumentError("one measure per facet required")
        if not np.all(self.element_measures > 0):
            raise InvalidArgumentError("every element must have positive measure")

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def _affine(self):
        # B = [x1 - x0, ..., xd - x0]; signed det gives orientation.
        verts = self.nodes[self.elements]
        B = np.swapaxes(verts[:, 1:, :] - verts[:, :1, :], 1, 2)
        det = np.linalg.det(B) if self.dim > 1 else B[:, 0, 0]
        return B, det

    @cached_property
    def element_measures(self) -> np.ndarray:
        _, det = self._affine
        out = np.abs(det) / math.factorial(self.dim)
        out.setflags(write=False)
        return out

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """``(n_elements, dim + 1, dim)`` gradients of the barycentric basis."""
        B, _ = self._affine
        inv = np.linalg.inv(B)  # rows are gradients of lambda_1..lambda_d
        grads = np.empty((self.n_elements, self.dim + 1, self.dim))
        grads[:, 1:, :] = inv
        grads[:, 0, :] = -inv.sum(axis=1)
        grads.setflags(write=False)
        return grads

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        """Vertex-rule quadrature weight of each node."""
        share = np.repeat(self.element_measures / (self.dim + 1), self.dim + 1)
        w = np.bincount(self.elements.ravel(), weights=share, minlength=self.n_nodes)
        w.setflags(write=False)
        return w

    @cached_property
    def boundary_weights(self) -> np.ndarray:
        """Trapezoid weights of the surface measure at nodes (0 inside)."""
        share = np.repeat(self.facet_measures / self.dim, self.dim)
        w = np.bincount(self.facets.ravel(), weights=share, minlength=self.n_nodes)
        w.setflags(write=False)
        return w

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        out = np.unique(self.facets.ravel())
        out.setflags(write=False)
        return out

    @cached_property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def element_centers(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    @property
    def volume(self) -> float:
        return float(self.element_measures.sum())

    @cached_property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.nodes.max(axis=0) - self.nodes.min(axis=0)))

    @cached_property
    def h(self) -> float:
        """Largest element edge length."""
        verts = self.nodes[self.elements]
        k = self.dim + 1
        longest = 0.0
        for a in range(k):
            for b in range(a + 1, k):
                longest = max(longest, float(np.linalg.norm(verts[:, a] - verts[:, b], axis=1).max()))
        return longest

    def adjacency(self):
        """Sorted set of ``(i, j)`` node pairs sharing an element (incl. i == j)."""
        pairs = set()
        for el in self.elements.tolist():
            for a in el:
                for b in el:
                    pairs.add((a, b))
        return pairs


def boundary_measure(mesh: Mesh) -> float:
    return float(mesh.facet_measures.sum())


def build_interval_mesh(a: float, b: float, n: int) -> Mesh:
    """Uniform mesh of ``[a, b]`` with ``n`` segments."""
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InvalidArgumentError("interval endpoints must be finite")
    if not a < b:
        raise InvalidArgumentError(f"need a < b, got a={a}, b={b}")
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"cell count must be >= 1, got {n}")
    n = int(n)
    x = np.linspace(a, b, n + 1)
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    facets = np.array([[0], [n]])
    return Mesh(x[:, None], elements, facets, np.ones(2))


def build_rectangle_mesh(lx: float, ly: float, nx: int, ny: int) -> Mesh:
    """Mesh of ``[0, lx] x [0, ly]`` with every grid cell cut along its
    lower-left to upper-right diagonal."""
    if not (math.isfinite(lx) and math.isfinite(ly)) or lx <= 0 or ly <= 0:
        raise InvalidArgumentError(f"side lengths must be positive, got {lx}, {ly}")
    for c in (nx, ny):
        if int(c) != c or c < 1:
            raise InvalidArgumentError(f"cell counts must be >= 1, got {nx}, {ny}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            n00, n10, n01, n11 = nid(i, j), nid(i + 1, j), nid(i, j + 1), nid(i + 1, j + 1)
            tris.append((n00, n10, n11))
            tris.append((n00, n11, n01))

    facets, measures = [], []
    dx, dy = lx / nx, ly / ny
    for i in range(nx):
        facets.append((nid(i, 0), nid(i + 1, 0)))
        facets.append((nid(i + 1, ny), nid(i, ny)))
        measures += [dx, dx]
    for j in range(ny):
        facets.append((nid(nx, j), nid(nx, j + 1)))
        facets.append((nid(0, j + 1), nid(0, j)))
        measures += [dy, dy]
    return Mesh(nodes, np.array(tris), np.array(facets), np.array(measures))


def write_mesh_csv(mesh: Mesh, node_path, element_path) -> None:
    """Dump nodes as ``node_id,x[,y]`` and elements as ``element_id,n0,n1[,n2]``."""
    coords = ["x", "y"][: mesh.dim]
    with open(Path(node_path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", *coords])
        for i, row in enumerate(mesh.nodes):
            w.writerow([i, *(repr(float(c)) for c in row)])
    with open(Path(element_path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element_id", *(f"n{k}" for k in range(mesh.dim + 1))])
        for i, el in enumerate(mesh.elements):
            w.writerow([i, *el.tolist()])
