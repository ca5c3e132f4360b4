"""Design domain model: voxel grid, material, loads and the design field.

The grid is a structured lattice of identical box elements.  A 2-entry
``dims`` builds a 2D plane-stress grid (2 DOF per node, explicit
thickness); a 3-entry ``dims`` builds a 3D hexahedral grid (3 DOF per
node).  Nodes and elements are numbered lexicographically with x fastest.

Everything here is immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

FACE_SELECTORS = ("x-min", "x-max", "y-min", "y-max", "z-min", "z-max")


class ModelError(ValueError):
    """Invalid domain, material, load or selector definition."""


@dataclass(frozen=True)
class Material:
    """Isotropic linear-elastic material with thermal expansion.

    E in Pa, ``nu`` dimensionless, ``alpha`` in 1/degC.
    """

    E: float
    nu: float
    alpha: float = 0.0

    def __post_init__(self):
        if self.E <= 0:
            raise ModelError(f"Young's modulus must be positive, got {self.E}")
        if not 0.0 <= self.nu < 0.5:
            raise ModelError(f"Poisson ratio must be in [0, 0.5), got {self.nu}")
        if self.alpha < 0:
            raise ModelError(f"thermal expansion must be >= 0, got {self.alpha}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class VoxelGrid:
    """Structured grid of identical box elements with fixed DOFs resolved."""

    dims: tuple[int, ...]
    element_size: tuple[float, ...]
    thickness: float
    fixed_dofs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.dims) not in (2, 3):
            raise ModelError("dims must have 2 (plane stress) or 3 entries")
        if any(d < 1 for d in self.dims):
            raise ModelError(f"element counts must be >= 1, got {self.dims}")
        if len(self.element_size) != len(self.dims):
            raise ModelError("element_size must match dims")
        if any(h <= 0 for h in self.element_size):
            raise ModelError("element edge lengths must be strictly positive")
        if self.ndim == 2 and self.thickness <= 0:
            raise ModelError("2D mode requires a positive thickness")
        fixed = np.unique(np.asarray(self.fixed_dofs, dtype=np.int64))
        if fixed.size and (fixed[0] < 0 or fixed[-1] >= self.n_dofs):
            raise ModelError("fixed DOF index out of range")
        object.__setattr__(self, "fixed_dofs", _freeze(fixed))

    # -- lattice counts ------------------------------------------------

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def node_dims(self) -> tuple[int, ...]:
        return tuple(d + 1 for d in self.dims)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_dims))

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_dofs(self) -> int:
        return self.ndim * self.n_nodes

    # -- numbering -----------------------------------------------------

    def node_index(self, ijk) -> int:
        """Flat node index from lattice coordinates (x fastest)."""
        ijk = tuple(int(c) for c in np.atleast_1d(ijk))
        if len(ijk) != self.ndim:
            raise ModelError(f"expected {self.ndim} lattice coordinates, got {ijk}")
        nd = self.node_dims
        if any(not 0 <= c < n for c, n in zip(ijk, nd)):
            raise ModelError(f"node {ijk} outside lattice {nd}")
        idx = ijk[-1]
        for c, n in zip(reversed(ijk[:-1]), reversed(nd[:-1])):
            idx = idx * n + c
        return int(idx)

    def node_coords(self) -> np.ndarray:
        """(n_nodes, ndim) array of node positions."""
        axes = [np.arange(n) * h for n, h in zip(self.node_dims, self.element_size)]
        mesh = np.meshgrid(*axes, indexing="ij")
        # Fortran ravel makes the first lattice axis vary fastest.
        return np.stack([m.ravel(order="F") for m in mesh], axis=1)

    def element_centers(self) -> np.ndarray:
        """(n_elements, ndim) array of element centers."""
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.dims, self.element_size)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel(order="F") for m in mesh], axis=1)

    def element_lattice(self) -> np.ndarray:
        """(n_elements, ndim) integer lattice coordinates of each element."""
        axes = [np.arange(n) for n in self.dims]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel(order="F") for m in mesh], axis=1)

    def connectivity(self) -> np.ndarray:
        """(n_elements, 4 or 8) node indices per element, VTK corner order."""
        nx = self.dims[0]
        nnx = nx + 1
        lat = self.element_lattice()
        if self.ndim == 2:
            base = lat[:, 0] + nnx * lat[:, 1]
            quad = np.stack([base, base + 1, base + 1 + nnx, base + nnx], axis=1)
            return quad
        nny = self.dims[1] + 1
        layer = nnx * nny
        base = lat[:, 0] + nnx * lat[:, 1] + layer * lat[:, 2]
        bottom = np.stack([base, base + 1, base + 1 + nnx, base + nnx], axis=1)
        return np.concatenate([bottom, bottom + layer], axis=1)

    def element_dofs(self) -> np.ndarray:
        """(n_elements, ndof_e) global DOF indices per element."""
        conn = self.connectivity()
        nd = self.ndim
        dofs = nd * np.repeat(conn, nd, axis=1)
        dofs += np.tile(np.arange(nd), conn.shape[1])
        return dofs

    def face_nodes(self, selector: str) -> np.ndarray:
        """Flat node indices of an axis-aligned boundary face."""
        axis, side = _parse_selector(selector, self.ndim)
        grid_ids = np.arange(self.n_nodes).reshape(self.node_dims, order="F")
        index = [slice(None)] * self.ndim
        index[axis] = 0 if side == "min" else -1
        nodes = grid_ids[tuple(index)].ravel(order="F")
        if nodes.size == 0:
            raise ModelError(f"selector {selector!r} resolves to no nodes")
        return np.sort(nodes)

    def face_area(self, selector: str) -> float:
        axis, _ = _parse_selector(selector, self.ndim)
        sizes = [n * h for n, h in zip(self.dims, self.element_size)]
        del sizes[axis]
        area = float(np.prod(sizes))
        return area * self.thickness if self.ndim == 2 else area

    def dofs_of_nodes(self, nodes: np.ndarray, axes=None) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=np.int64)
        axes = range(self.ndim) if axes is None else axes
        out = [self.ndim * nodes + a for a in axes]
        return np.sort(np.concatenate(out))


def _parse_selector(selector: str, ndim: int) -> tuple[int, str]:
    if selector not in FACE_SELECTORS:
        raise ModelError(f"unknown face selector {selector!r}; expected one of {FACE_SELECTORS}")
    axis = "xyz".index(selector[0])
    if axis >= ndim:
        raise ModelError(f"selector {selector!r} invalid for a {ndim}D grid")
    return axis, selector.split("-")[1]


@dataclass(frozen=True)
class PointLoad:
    node: int
    axis: int
    magnitude: float


@dataclass(frozen=True)
class FacePressure:
    face: str
    magnitude: float
    direction: str  # "+x", "-x", ..., or "normal" (compressive onto the face)


@dataclass(frozen=True)
class LoadCase:
    """Structural loads resolved to a nodal force vector, plus uniform
    temperature rise ``delta_t`` above the reference temperature."""

    point_loads: tuple[PointLoad, ...]
    face_pressures: tuple[FacePressure, ...]
    delta_t: float
    force: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.delta_t < 0:
            raise ModelError(f"delta_t must be >= 0, got {self.delta_t}")
        object.__setattr__(self, "force", _freeze(np.asarray(self.force, dtype=float)))

    @property
    def has_structural_load(self) -> bool:
        return bool(np.any(self.force != 0.0))


@dataclass
class Design:
    """Per-element level-set values, presence flags and frozen elements.

    ``presence`` is the binary topology; ``values`` is the filtered
    sensitivity field that produced it (level-set function).  Elements in
    ``frozen`` are always present (support/load pads).
    """

    values: np.ndarray
    presence: np.ndarray
    frozen: np.ndarray

    @classmethod
    def full(cls, n_elements: int, frozen: np.ndarray | None = None) -> "Design":
        if frozen is None:
            frozen = np.zeros(n_elements, dtype=bool)
        return cls(
            values=np.zeros(n_elements),
            presence=np.ones(n_elements, dtype=bool),
            frozen=np.asarray(frozen, dtype=bool).copy(),
        )

    def copy(self) -> "Design":
        return Design(self.values.copy(), self.presence.copy(), self.frozen.copy())

    @property
    def n_elements(self) -> int:
        return self.presence.size

    def scales(self) -> np.ndarray:
        """Continuous presence scaling consumed by the FE operators."""
        return self.presence.astype(float)


def volume_fraction(design: Design) -> float:
    """Fraction of present elements; warns on an empty topology."""
    frac = float(np.count_nonzero(design.presence)) / design.n_elements
    if frac == 0.0:
        warnings.warn("degenerate topology: no elements present", stacklevel=2)
    return frac


def build_grid(
    dims,
    element_size,
    material: Material,
    point_loads=(),
    face_pressures=(),
    delta_t: float = 0.0,
    fixed_faces=(),
    fixed_dofs=(),
    thickness: float = 1.0,
) -> tuple[VoxelGrid, LoadCase]:
    """Construct the grid, resolve supports and lump loads onto nodes.

    ``point_loads`` entries are ``(node, axis, magnitude)`` where ``node``
    is a flat node index or a lattice coordinate tuple and ``axis`` is an
    integer or one of "xyz".  Face pressures are converted to consistent
    nodal forces by tributary area, so the lumped forces sum exactly to
    pressure times face area.
    """
    dims = tuple(int(d) for d in dims)
    probe = VoxelGrid(dims, tuple(float(h) for h in element_size), thickness,
                      np.empty(0, dtype=np.int64))
    ndim = probe.ndim

    fixed = list(np.asarray(fixed_dofs, dtype=np.int64).ravel())
    for sel in fixed_faces:
        fixed.extend(probe.dofs_of_nodes(probe.face_nodes(sel)))
    grid = VoxelGrid(dims, probe.element_size, thickness,
                     np.asarray(fixed, dtype=np.int64))

    force = np.zeros(grid.n_dofs)
    resolved_points = []
    for node, axis, mag in point_loads:
        ax = "xyz".index(axis) if isinstance(axis, str) else int(axis)
        if not 0 <= ax < ndim:
            raise ModelError(f"load axis {axis!r} invalid for a {ndim}D grid")
        n = node if np.isscalar(node) else grid.node_index(node)
        n = int(n)
        if not 0 <= n < grid.n_nodes:
            raise ModelError(f"load node {node!r} out of range")
        force[ndim * n + ax] += float(mag)
        resolved_points.append(PointLoad(n, ax, float(mag)))

    resolved_pressures = []
    for face, mag, direction in face_pressures:
        resolved_pressures.append(FacePressure(face, float(mag), direction))
        force += _pressure_forces(grid, face, float(mag), direction)

    loaded_fixed = np.intersect1d(np.nonzero(force)[0], grid.fixed_dofs)
    if loaded_fixed.size:
        warnings.warn(
            f"{loaded_fixed.size} loaded DOF(s) are fixed; those loads are "
            "absorbed by the supports",
            stacklevel=2,
        )

    loads = LoadCase(
        point_loads=tuple(resolved_points),
        face_pressures=tuple(resolved_pressures),
        delta_t=float(delta_t),
        force=force,
    )
    return grid, loads


def _pressure_forces(grid: VoxelGrid, face: str, magnitude: float,
                     direction: str) -> np.ndarray:
    """Tributary-area lumping of a uniform face pressure."""
    axis, side = _parse_selector(face, grid.ndim)
    unit = _direction_vector(grid.ndim, axis, side, direction)
    nodes = grid.face_nodes(face)

    # Tributary weights: accumulate 1/nodes-per-face for each boundary
    # element face touching the node, times the per-face area.
    in_plane = [d for d in range(grid.ndim) if d != axis]
    n_face_nodes = 2 ** (grid.ndim - 1)
    face_elem_area = float(np.prod([grid.element_size[d] for d in in_plane]))
    if grid.ndim == 2:
        face_elem_area *= grid.thickness
    weights = np.zeros(grid.n_nodes)
    node_dims = grid.node_dims
    lat = np.unravel_index(nodes, node_dims, order="F")
    w = np.ones(nodes.size)
    for d in in_plane:
        c = lat[d]
        interior = (c > 0) & (c < node_dims[d] - 1)
        w *= np.where(interior, 2.0, 1.0)
    weights[nodes] = w * face_elem_area / n_face_nodes

    force = np.zeros(grid.n_dofs)
    for a in range(grid.ndim):
        force[a::grid.ndim] = magnitude * unit[a] * weights
    return force


def _direction_vector(ndim: int, face_axis: int, side: str, direction: str) -> np.ndarray:
    unit = np.zeros(ndim)
    if direction == "normal":
        # positive pressure pushes onto the body
        unit[face_axis] = 1.0 if side == "min" else -1.0
        return unit
    if len(direction) == 2 and direction[0] in "+-" and direction[1] in "xyz":
        ax = "xyz".index(direction[1])
        if ax >= ndim:
            raise ModelError(f"direction {direction!r} invalid for a {ndim}D grid")
        unit[ax] = 1.0 if direction[0] == "+" else -1.0
        return unit
    raise ModelError(f"unknown pressure direction {direction!r}")


def default_frozen_mask(grid: VoxelGrid, loads: LoadCase) -> np.ndarray:
    """One layer of non-design elements around loads and supports.

    Elements touching a loaded node or a fixed node are frozen solid so the
    optimizer cannot delete load application regions or supports.
    """
    ndim = grid.ndim
    marked_nodes = np.zeros(grid.n_nodes, dtype=bool)
    marked_nodes[np.unique(grid.fixed_dofs // ndim)] = True
    marked_nodes[np.unique(np.nonzero(loads.force)[0] // ndim)] = True
    conn = grid.connectivity()
    return marked_nodes[conn].any(axis=1)
