"""Reference element kernels for the structured voxel grid.

All elements in a grid are geometrically identical axis-aligned boxes
(quadrilaterals in 2D plane stress, 8-node hexahedra in 3D), so a single
set of reference matrices serves every element:

* ``k_e``        elastic stiffness (ndof_e x ndof_e)
* ``b_center``   strain-displacement matrix at the element center
* ``kg_unit[k]`` geometric stiffness produced by a unit value of stress
                 component k; the geometric stiffness of an element with
                 stress ``sigma`` is ``sum_k sigma[k] * kg_unit[k]``

Stress/strain component order is ``[sx, sy, txy]`` in 2D and
``[sx, sy, sz, txy, txz, tyz]`` in 3D.  Element DOFs are node-major:
``[u0, v0, (w0), u1, v1, (w1), ...]`` with nodes in VTK corner order.

Full 2x2(x2) Gauss quadrature is used throughout; no reduced integration.
The stiffness is enhanced with quadratic incompatible displacement modes
(statically condensed), which removes the severe parasitic-shear
overstiffness of plain bilinear/trilinear boxes in bending: thin members
resolved by only a couple of elements through the thickness would
otherwise overestimate buckling loads by 10-15%.  On a rectangular
element the enhancement is invisible outside ``k_e``: incompatible-mode
strains integrate to zero (thermal load unchanged) and vanish at the
element center (stress recovery unchanged).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Material

# Corner coordinates in the reference element, VTK ordering.
_CORNERS_2D = np.array([(-1, -1), (1, -1), (1, 1), (-1, 1)], dtype=float)
_CORNERS_3D = np.array(
    [
        (-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
        (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1),
    ],
    dtype=float,
)

_GAUSS_1D = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def n_stress(ndim: int) -> int:
    """Number of independent stress components (3 in 2D, 6 in 3D)."""
    return 3 if ndim == 2 else 6


def elasticity_matrix(material: Material, ndim: int) -> np.ndarray:
    """Isotropic elasticity matrix: plane stress in 2D, full tensor in 3D."""
    e, nu = material.E, material.nu
    if ndim == 2:
        d = np.array(
            [
                [1.0, nu, 0.0],
                [nu, 1.0, 0.0],
                [0.0, 0.0, (1.0 - nu) / 2.0],
            ]
        )
        return e / (1.0 - nu**2) * d
    lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = e / (2.0 * (1.0 + nu))
    d = np.zeros((6, 6))
    d[:3, :3] = lam
    d[:3, :3] += 2.0 * mu * np.eye(3)
    d[3:, 3:] = mu * np.eye(3)
    return d


def thermal_strain(material: Material, delta_t: float, ndim: int) -> np.ndarray:
    """Isotropic thermal strain: ``alpha * delta_t`` on normal components."""
    eps = np.zeros(n_stress(ndim))
    eps[:ndim if ndim == 3 else 2] = material.alpha * delta_t
    return eps


def stress_block_gradient(k: int, ndim: int) -> np.ndarray:
    """Derivative of the block-diagonal stress matrix w.r.t. component ``k``.

    ``k`` is 1-based.  The returned matrix has the 0/1 pattern of the
    symmetric stress tensor: summing ``sigma[k] * stress_block_gradient(k)``
    over all components reconstructs the full block matrix.
    """
    ns = n_stress(ndim)
    if not 1 <= k <= ns:
        raise ValueError(f"stress component {k} out of range 1..{ns}")
    if ndim == 2:
        pairs = [(0, 0), (1, 1), (0, 1)]
    else:
        pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
    i, j = pairs[k - 1]
    s = np.zeros((ndim, ndim))
    s[i, j] = 1.0
    s[j, i] = 1.0
    return np.kron(np.eye(ndim), s)


def _shape_gradients(xi: np.ndarray, ndim: int) -> np.ndarray:
    """Gradients of the bilinear/trilinear shape functions at a point.

    Returns an (ndim, n_nodes) array of derivatives in reference
    coordinates.
    """
    corners = _CORNERS_2D if ndim == 2 else _CORNERS_3D
    n_nodes = len(corners)
    grads = np.empty((ndim, n_nodes))
    for a, ca in enumerate(corners):
        terms = 1.0 + ca * xi
        for axis in range(ndim):
            others = np.prod(np.delete(terms, axis))
            grads[axis, a] = ca[axis] * others / 2.0**ndim
    return grads


def _b_matrix(grads_xyz: np.ndarray, ndim: int) -> np.ndarray:
    """Strain-displacement matrix from physical shape gradients."""
    n_nodes = grads_xyz.shape[1]
    b = np.zeros((n_stress(ndim), ndim * n_nodes))
    for a in range(n_nodes):
        c = ndim * a
        if ndim == 2:
            dx, dy = grads_xyz[:, a]
            b[0, c] = dx
            b[1, c + 1] = dy
            b[2, c] = dy
            b[2, c + 1] = dx
        else:
            dx, dy, dz = grads_xyz[:, a]
            b[0, c] = dx
            b[1, c + 1] = dy
            b[2, c + 2] = dz
            b[3, c] = dy
            b[3, c + 1] = dx
            b[4, c] = dz
            b[4, c + 2] = dx
            b[5, c + 1] = dz
            b[5, c + 2] = dy
    return b


def _bubble_strains(xi: np.ndarray, jac_scale: np.ndarray, ndim: int) -> np.ndarray:
    """Strain matrix of the incompatible quadratic modes at a point.

    One internal amplitude per (displacement component, axis) pair drives
    the bubble ``1 - xi_axis^2``; columns are ordered component-major.
    """
    # gradient of bubble m is nonzero only along its own axis
    dbub = -2.0 * xi * jac_scale  # d(1 - xi_m^2)/dx_m
    n_modes = ndim * ndim
    cols = []
    for comp in range(ndim):
        for m in range(ndim):
            g = np.zeros(ndim)
            g[m] = dbub[m]
            cols.append((comp, g))
    b = np.zeros((n_stress(ndim), n_modes))
    for col, (comp, g) in enumerate(cols):
        if ndim == 2:
            dx, dy = g
            if comp == 0:
                b[0, col] = dx
                b[2, col] = dy
            else:
                b[1, col] = dy
                b[2, col] = dx
        else:
            dx, dy, dz = g
            if comp == 0:
                b[0, col] = dx
                b[3, col] = dy
                b[4, col] = dz
            elif comp == 1:
                b[1, col] = dy
                b[3, col] = dx
                b[5, col] = dz
            else:
                b[2, col] = dz
                b[4, col] = dx
                b[5, col] = dy
    return b


def _g_matrix(grads_xyz: np.ndarray, ndim: int) -> np.ndarray:
    """Displacement-gradient matrix: rows are the full gradient of each
    displacement component, one block of ``ndim`` rows per component."""
    n_nodes = grads_xyz.shape[1]
    g = np.zeros((ndim * ndim, ndim * n_nodes))
    for a in range(n_nodes):
        for comp in range(ndim):
            col = ndim * a + comp
            g[ndim * comp:ndim * (comp + 1), col] = grads_xyz[:, a]
    return g


@dataclass(frozen=True)
class ElementKernels:
    """Precomputed reference-element matrices shared by all elements."""

    ndim: int
    element_size: tuple[float, ...]
    thickness: float
    volume: float
    d_mat: np.ndarray              # elasticity matrix
    k_e: np.ndarray                # stiffness
    b_center: np.ndarray           # strain-displacement at center
    b_integrated: np.ndarray       # integral of B over the element
    kg_unit: np.ndarray            # (n_stress, ndof_e, ndof_e)
    eps_th_unit: np.ndarray        # thermal strain per unit temperature rise
    corner_offsets: np.ndarray = field(repr=False, default=None)

    @property
    def n_nodes(self) -> int:
        return 4 if self.ndim == 2 else 8

    @property
    def ndof_e(self) -> int:
        return self.ndim * self.n_nodes

    @property
    def n_stress(self) -> int:
        return n_stress(self.ndim)


def build_kernels(
    element_size: tuple[float, ...],
    material: Material,
    thickness: float = 1.0,
) -> ElementKernels:
    """Integrate the reference stiffness and unit geometric stiffnesses.

    ``element_size`` has 2 entries in 2D and 3 in 3D; ``thickness`` is the
    out-of-plane depth used only in 2D.
    """
    ndim = len(element_size)
    if ndim not in (2, 3):
        raise ValueError("element_size must have 2 or 3 entries")
    if any(h <= 0 for h in element_size):
        raise ValueError("element edge lengths must be strictly positive")
    size = np.asarray(element_size, dtype=float)
    # Axis-aligned box: the Jacobian is diagonal and constant.
    jac_scale = 2.0 / size
    det_j = np.prod(size / 2.0)
    depth = thickness if ndim == 2 else 1.0
    ns = n_stress(ndim)
    n_nodes = 4 if ndim == 2 else 8
    ndof_e = ndim * n_nodes

    d_mat = elasticity_matrix(material, ndim)
    ds_blocks = [stress_block_gradient(k, ndim) for k in range(1, ns + 1)]

    n_modes = ndim * ndim
    k_e = np.zeros((ndof_e, ndof_e))
    k_aa = np.zeros((n_modes, n_modes))
    k_ac = np.zeros((n_modes, ndof_e))
    b_int = np.zeros((ns, ndof_e))
    kg_unit = np.zeros((ns, ndof_e, ndof_e))
    for gp in _gauss_points(ndim):
        grads = _shape_gradients(gp, ndim) * jac_scale[:, None]
        b = _b_matrix(grads, ndim)
        ba = _bubble_strains(gp, jac_scale, ndim)
        g = _g_matrix(grads, ndim)
        w = det_j * depth
        k_e += w * b.T @ d_mat @ b
        k_aa += w * ba.T @ d_mat @ ba
        k_ac += w * ba.T @ d_mat @ b
        b_int += w * b
        for k in range(ns):
            kg_unit[k] += w * g.T @ ds_blocks[k] @ g
    # static condensation of the incompatible modes
    k_e -= k_ac.T @ np.linalg.solve(k_aa, k_ac)

    center = _shape_gradients(np.zeros(ndim), ndim) * jac_scale[:, None]
    b_center = _b_matrix(center, ndim)

    corners = (_CORNERS_2D if ndim == 2 else _CORNERS_3D) * size / 2.0
    return ElementKernels(
        ndim=ndim,
        element_size=tuple(size),
        thickness=thickness,
        volume=float(np.prod(size)) * depth,
        d_mat=d_mat,
        k_e=0.5 * (k_e + k_e.T),
        b_center=b_center,
        b_integrated=b_int,
        kg_unit=0.5 * (kg_unit + np.transpose(kg_unit, (0, 2, 1))),
        eps_th_unit=thermal_strain(material, 1.0, ndim),
        corner_offsets=corners,
    )


def _gauss_points(ndim: int):
    axes = [_GAUSS_1D] * ndim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def element_thermal_load(kernels: ElementKernels, eps_th: np.ndarray) -> np.ndarray:
    """Consistent nodal load of a uniform thermal strain on one element."""
    return kernels.b_integrated.T @ (kernels.d_mat @ np.asarray(eps_th))


def element_geometric_stiffness(
    kernels: ElementKernels, sigma_e: np.ndarray
) -> np.ndarray:
    """Geometric stiffness of one element for the given stress vector."""
    sigma_e = np.asarray(sigma_e, dtype=float)
    return np.einsum("k,kab->ab", sigma_e, kernels.kg_unit)
