"""Tensor-product grids on intervals and rectangles with a Dirichlet/Neumann split.

Nodes sit at ``x_i = i*h`` along every axis. Nodes on a Dirichlet face are
eliminated (their value is zero), so a field is a flat array holding one value
per remaining node, in C order over the per-axis kept index ranges. Where a
Dirichlet and a Neumann face meet, the corner node is Dirichlet.

The discrete operator is the ghost-point Laplacian scaled row-wise by the
trapezoid weights ``m`` (1 inside, 1/2 per Neumann face the node lies on). The
scaled matrix ``A = M (-D Lap_gp)`` is symmetric positive definite and the
semi-discrete diffusion problem reads::

    M dl/dt = -A l + b

with ``b`` from :func:`neumann_source`. With ``|cell| = prod(h)`` the quadrature
of ``f`` is ``|cell| * sum(m * f)`` and ``|cell| * f @ A @ f / D`` is exactly the
forward-difference gradient energy computed by :func:`gradient_norm_sq`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

FACES_1D = ("left", "right")
FACES_2D = ("west", "east", "south", "north")

def face_names(dimension: int) -> tuple[str, ...]:
    if dimension == 1:
        return FACES_1D
    if dimension == 2:
        return FACES_2D
    raise ValueError(f"dimension must be 1 or 2, got {dimension}")


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product grid with a boundary condition on every face.

    Use :func:`build_grid` to construct one; it validates the inputs.
    """

    dimension: int
    extents: tuple[float, ...]
    nodes: tuple[int, ...]
    faces: Mapping[str, str] = field(hash=False)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n - 1) for L, n in zip(self.extents, self.nodes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def face_condition(self, axis: int, side: int) -> str:
        name = face_names(self.dimension)[2 * axis + side]
        return self.faces[name]

    def axis_range(self, axis: int) -> range:
        """Full-grid node indices kept as unknowns along ``axis``."""
        n = self.nodes[axis]
        lo = 1 if self.face_condition(axis, 0) == DIRICHLET else 0
        hi = n - 1 if self.face_condition(axis, 1) == DIRICHLET else n
        return range(lo, hi)

    @cached_property
    def dof_shape(self) -> tuple[int, ...]:
        return tuple(len(self.axis_range(a)) for a in range(self.dimension))

    @property
    def ndof(self) -> int:
        return int(np.prod(self.dof_shape))

    @cached_property
    def axis_mass(self) -> tuple[np.ndarray, ...]:
        """Per-axis trapezoid factors on kept nodes (1/2 at a Neumann end)."""
        out = []
        for a in range(self.dimension):
            m = np.ones(self.dof_shape[a])
            if self.face_condition(a, 0) == NEUMANN:
                m[0] *= 0.5
            if self.face_condition(a, 1) == NEUMANN:
                m[-1] *= 0.5
            out.append(m)
        return tuple(out)

    @cached_property
    def mass(self) -> np.ndarray:
        """Diagonal of the lumped mass matrix ``M`` (dimensionless factors)."""
        m = self.axis_mass[0]
        for ma in self.axis_mass[1:]:
            m = np.multiply.outer(m, ma)
        return m.ravel()

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights ``|cell| * m`` per unknown."""
        return self.cell_volume * self.mass

    @cached_property
    def coordinates(self) -> np.ndarray:
        """``(ndof, dimension)`` node coordinates in unknown order."""
        axes = [np.asarray(self.axis_range(a), dtype=float) * self.spacing[a]
                for a in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=1)

    @cached_property
    def neumann_faces(self) -> tuple[tuple[int, int], ...]:
        return tuple((a, s) for a in range(self.dimension) for s in (0, 1)
                     if self.face_condition(a, s) == NEUMANN)

    def _face_mask(self, axis: int, side: int) -> np.ndarray:
        idx = np.zeros(self.dof_shape, dtype=bool)
        sl = [slice(None)] * self.dimension
        sl[axis] = 0 if side == 0 else -1
        idx[tuple(sl)] = True
        return idx.ravel()

    @cached_property
    def neumann_nodes(self) -> np.ndarray:
        """Indices of unknowns lying on at least one Neumann face (sorted)."""
        mask = np.zeros(self.ndof, dtype=bool)
        for a, s in self.neumann_faces:
            mask |= self._face_mask(a, s)
        return np.flatnonzero(mask)

    def check_field(self, f, name: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.ndof,):
            raise ValueError(f"{name} has shape {f.shape}, grid has {self.ndof} unknowns")
        if not np.all(np.isfinite(f)):
            raise ValueError(f"{name} contains non-finite values")
        return f

    def check_boundary(self, nu, name: str = "nu") -> np.ndarray:
        nu = np.asarray(nu, dtype=float)
        if nu.ndim == 0:
            nu = np.full(self.neumann_nodes.size, float(nu))
        if nu.shape != (self.neumann_nodes.size,):
            raise ValueError(
                f"{name} has shape {nu.shape}, grid has {self.neumann_nodes.size} Neumann nodes")
        if not np.all(np.isfinite(nu)):
            raise ValueError(f"{name} contains non-finite values")
        if np.any(nu < 0):
            raise ValueError(f"{name} must be nonnegative (influx), min is {nu.min():g}")
        return nu

    def to_full(self, f) -> np.ndarray:
        """Scatter a field onto the full node array, Dirichlet nodes set to zero."""
        full = np.zeros(self.nodes)
        sl = tuple(slice(r.start, r.stop) for r in map(self.axis_range, range(self.dimension)))
        full[sl] = np.reshape(f, self.dof_shape)
        return full


def build_grid(
    dimension: int,
    extents: Sequence[float] | float,
    nodes: Sequence[int] | int,
    faces: Mapping[str, str],
) -> Grid:
    """Validate a domain description and return a :class:`Grid`.

    ``faces`` maps every face name (``left``/``right`` in 1D,
    ``west``/``east``/``south``/``north`` in 2D) to ``"dirichlet"`` or
    ``"neumann"``. At least one face of each kind is required.
    """
    names = face_names(dimension)
    extents = tuple(float(e) for e in np.atleast_1d(extents))
    nodes = tuple(int(n) for n in np.atleast_1d(nodes))
    if len(extents) != dimension or len(nodes) != dimension:
        raise ValueError(f"need {dimension} extents and node counts, "
                         f"got {len(extents)} and {len(nodes)}")
    if any(not np.isfinite(e) or e <= 0 for e in extents):
        raise ValueError(f"extents must be positive, got {extents}")
    if any(n < 3 for n in nodes):
        raise ValueError(f"need at least 3 nodes per axis, got {nodes}")

    faces = {str(k).lower(): str(v).lower() for k, v in faces.items()}
    unknown = set(faces) - set(names)
    if unknown:
        raise ValueError(f"unknown face(s) {sorted(unknown)} for dimension {dimension}")
    missing = [n for n in names if n not in faces]
    if missing:
        raise ValueError(f"no boundary condition for face(s) {missing}")
    bad = {k: v for k, v in faces.items() if v not in (DIRICHLET, NEUMANN)}
    if bad:
        raise ValueError(f"face conditions must be dirichlet or neumann, got {bad}")
    kinds = set(faces.values())
    if DIRICHLET not in kinds:
        raise ValueError("at least one face must be Dirichlet")
    if NEUMANN not in kinds:
        raise ValueError("at least one face must be Neumann")
    ordered = {n: faces[n] for n in names}
    return Grid(dimension, extents, nodes, ordered)


def _axis_stiffness(grid: Grid, axis: int) -> sp.csr_matrix:
    """1D ``m_a * (-d2/dx2)`` on the kept nodes of one axis (symmetric)."""
    n = grid.dof_shape[axis]
    h = grid.spacing[axis]
    diag = np.full(n, 2.0)
    if grid.face_condition(axis, 0) == NEUMANN:
        diag[0] = 1.0
    if grid.face_condition(axis, 1) == NEUMANN:
        diag[-1] = 1.0
    off = -np.ones(n - 1)
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr") / h**2


def laplacian_operator(grid: Grid, D: float = 1.0) -> sp.csr_matrix:
    """Symmetric positive definite matrix ``A = M (-D Lap)`` on the unknowns."""
    if not D > 0:
        raise ValueError(f"diffusivity must be positive, got {D}")
    if grid.dimension == 1:
        A = _axis_stiffness(grid, 0)
    else:
        Kx, Ky = _axis_stiffness(grid, 0), _axis_stiffness(grid, 1)
        mx, my = (sp.diags(m) for m in grid.axis_mass)
        A = sp.kron(Kx, my) + sp.kron(mx, Ky)
    return (D * A).tocsr()


def neumann_source(grid: Grid, nu, D: float = 1.0) -> np.ndarray:
    """Load vector ``b`` injecting the influx ``nu`` through the Neumann faces.

    Ghost-point elimination of ``-D dl/dn = -nu`` adds ``2 nu / h`` to the row
    of a Neumann node; after scaling by ``m`` this becomes ``m * 2 nu / h``
    (``nu / h`` for a 1D end node). ``D`` cancels but is kept for the signature.
    """
    if not D > 0:
        raise ValueError(f"diffusivity must be positive, got {D}")
    nu = grid.check_boundary(nu)
    full_nu = np.zeros(grid.ndof)
    full_nu[grid.neumann_nodes] = nu
    b = np.zeros(grid.ndof)
    for a, s in grid.neumann_faces:
        mask = grid._face_mask(a, s)
        b[mask] += 2.0 * grid.mass[mask] * full_nu[mask] / grid.spacing[a]
    return b


def integrate_volume(grid: Grid, f) -> float:
    """Trapezoid rule over the domain; eliminated Dirichlet nodes count as zero."""
    return float(grid.weights @ np.asarray(f, dtype=float))


def integrate_boundary(grid: Grid, nu) -> float:
    """Trapezoid rule of ``nu`` over the Neumann part of the boundary.

    In 1D this is the point value at the Neumann end(s).
    """
    nu = grid.check_boundary(nu)
    full_nu = np.zeros(grid.ndof)
    full_nu[grid.neumann_nodes] = nu
    total = 0.0
    for a, s in grid.neumann_faces:
        mask = grid._face_mask(a, s)
        # face measure weight = weights / (h_a * m_a at that end)
        total += float(np.sum(grid.weights[mask] * full_nu[mask]) / (0.5 * grid.spacing[a]))
    return total


def dirichlet_outflow(grid: Grid, l, D: float, A=None) -> float:
    """Discrete diffusive flux leaving through the Dirichlet faces.

    Equals ``|cell| * 1^T A l``: interior rows of ``A`` sum to zero, so only
    nodes next to an eliminated Dirichlet node contribute ``D l / h`` per
    unit face measure.
    """
    if A is None:
        A = laplacian_operator(grid, D)
    return float(grid.cell_volume * np.sum(A @ np.asarray(l, dtype=float)))


def forward_differences(grid: Grid, f) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-axis forward differences and their quadrature weights.

    Returns ``[(grad_a, w_a), ...]`` where ``grad_a`` holds ``(f[i+1]-f[i])/h_a``
    over all edges between consecutive nodes along axis ``a`` (Dirichlet
    neighbours contribute their zero value) and ``w_a`` the matching
    edge weights, so ``sum(w_a * grad_a**2)`` is the axis part of the
    gradient energy.
    """
    arr = np.reshape(np.asarray(f, dtype=float), grid.dof_shape)
    out = []
    for a in range(grid.dimension):
        pad = [(0, 0)] * grid.dimension
        pad[a] = (1 if grid.face_condition(a, 0) == DIRICHLET else 0,
                  1 if grid.face_condition(a, 1) == DIRICHLET else 0)
        padded = np.pad(arr, pad)
        grad = np.diff(padded, axis=a) / grid.spacing[a]
        w = np.full(grad.shape, grid.cell_volume)
        for b in range(grid.dimension):
            if b != a:
                shape = [1] * grid.dimension
                shape[b] = -1
                w = w * grid.axis_mass[b].reshape(shape)
        out.append((grad.ravel(), w.ravel()))
    return out


def gradient_norm_sq(grid: Grid, f) -> float:
    """Discrete ``int |grad f|^2`` from forward differences.

    Identical (to rounding) to ``|cell| * f @ laplacian_operator(grid, 1) @ f``,
    which is the form used in the dissipation.
    """
    return float(sum(np.sum(w * g * g) for g, w in forward_differences(grid, f)))
