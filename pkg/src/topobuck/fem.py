"""Matrix-free global operators and the static thermo-elastic solve.

The global stiffness is never assembled: products ``K @ x`` and
``K_sigma @ x`` are computed by element-wise gather/scatter against the
reference kernels (see :mod:`topobuck._kernels`).  Fixed DOFs use the
symmetric zero-row/column-with-unit-diagonal convention, which preserves
the symmetry required by the conjugate-gradient solver and the
eigensolver.

Void elements keep a small ersatz stiffness so the system stays positive
definite, but carry exactly zero stress, hence contribute nothing to the
geometric stiffness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .elements import ElementKernels, thermal_strain
from .model import Design, LoadCase, Material, VoxelGrid


class SolverError(RuntimeError):
    """Linear solve failed to reach the requested residual."""


@dataclass
class SolverOptions:
    """Tolerances and limits for the linear and eigenvalue solvers."""

    rel_tol: float = 1e-8
    max_iters: int = 50_000
    ersatz_eps: float = 1e-6
    eig_tol: float = 1e-8
    eig_max_steps: int = 120
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must be in (0, 1), got {self.rel_tol}")
        if not 0.0 < self.ersatz_eps <= 1e-3:
            raise ValueError(f"ersatz_eps must be in (0, 1e-3], got {self.ersatz_eps}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class SolveStats:
    """Counters for linear solves, shared by all operators of a problem."""

    solves: int = 0
    iterations: int = 0


class Operators:
    """Element-wise global operators for one design state.

    ``scales`` is the per-element presence in [0, 1]: 1.0 for material,
    0.0 for void, intermediate values only for finite-difference probes.
    The stiffness uses ``max(scales, ersatz_eps)``; stress recovery and the
    thermal load use ``scales`` directly.
    """

    def __init__(
        self,
        grid: VoxelGrid,
        kernels: ElementKernels,
        scales: np.ndarray,
        options: SolverOptions | None = None,
        stats: SolveStats | None = None,
    ):
        if kernels.ndim != grid.ndim:
            raise ValueError("kernel dimensionality does not match the grid")
        self.grid = grid
        self.kernels = kernels
        self.options = options or SolverOptions()
        self.stats = stats if stats is not None else SolveStats()
        self.edofs = np.ascontiguousarray(grid.element_dofs(), dtype=np.int64)
        self.scales = np.asarray(scales, dtype=float)
        if self.scales.shape != (grid.n_elements,):
            raise ValueError("scales must have one entry per element")
        self.k_scale = np.maximum(self.scales, self.options.ersatz_eps)
        self.fixed = grid.fixed_dofs
        self.free_mask = np.ones(grid.n_dofs, dtype=bool)
        self.free_mask[self.fixed] = False
        self._k_e = np.ascontiguousarray(kernels.k_e)
        self._kg_unit = np.ascontiguousarray(kernels.kg_unit)
        diag = _kernels.scaled_diagonal(
            self.edofs, np.ascontiguousarray(np.diag(kernels.k_e)),
            self.k_scale, grid.n_dofs,
        )
        diag[self.fixed] = 1.0
        self.diag = diag

    @classmethod
    def for_design(cls, grid, kernels, design: Design, options=None, stats=None):
        return cls(grid, kernels, design.scales(), options, stats)

    # -- global products -------------------------------------------------

    def stiffness_matvec(self, x: np.ndarray) -> np.ndarray:
        """K @ x with fixed DOFs mapped through a unit diagonal."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.grid.n_dofs,):
            raise ValueError(f"expected a vector of length {self.grid.n_dofs}")
        xm = np.where(self.free_mask, x, 0.0)
        y = _kernels.stiffness_matvec(self.edofs, self._k_e, self.k_scale, xm)
        y[self.fixed] = x[self.fixed]
        return y

    def geometric_matvec(self, sigma: np.ndarray, x: np.ndarray) -> np.ndarray:
        """K_sigma @ x; zero rows and columns on fixed DOFs."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.grid.n_dofs,):
            raise ValueError(f"expected a vector of length {self.grid.n_dofs}")
        sigma = np.ascontiguousarray(sigma, dtype=float)
        xm = np.where(self.free_mask, x, 0.0)
        y = _kernels.geometric_matvec(self.edofs, self._kg_unit, sigma, xm)
        y[self.fixed] = 0.0
        return y

    # -- loads and recovery -----------------------------------------------

    def thermal_force(self, delta_t: float) -> np.ndarray:
        """Global thermal load vector; scales with element presence."""
        eps = self.kernels.eps_th_unit * delta_t
        f_e = self.kernels.b_integrated.T @ (self.kernels.d_mat @ eps)
        f = np.zeros(self.grid.n_dofs)
        np.add.at(f, self.edofs.ravel(),
                  (self.scales[:, None] * f_e[None, :]).ravel())
        return f

    def apply_bc(self, f: np.ndarray) -> np.ndarray:
        out = np.array(f, dtype=float, copy=True)
        out[self.fixed] = 0.0
        return out

    def recover_stress(self, d: np.ndarray, delta_t: float) -> np.ndarray:
        """Element-center stress; void elements carry exactly zero."""
        eps_th = self.kernels.eps_th_unit * delta_t
        de = d[self.edofs]
        strain = de @ self.kernels.b_center.T
        sigma = (strain - eps_th) @ self.kernels.d_mat
        sigma *= self.scales[:, None]
        return sigma

    def gather(self, x: np.ndarray) -> np.ndarray:
        """(n_elements, ndof_e) element-local view of a DOF vector."""
        return x[self.edofs]

    def scatter(self, values: np.ndarray) -> np.ndarray:
        """Accumulate (n_elements, ndof_e) element values into a DOF vector."""
        out = np.zeros(self.grid.n_dofs)
        np.add.at(out, self.edofs.ravel(), np.asarray(values).ravel())
        return out

    # -- linear solve -------------------------------------------------------

    def solve(
        self,
        b: np.ndarray,
        x0: np.ndarray | None = None,
        rel_tol: float | None = None,
        max_iters: int | None = None,
    ) -> np.ndarray:
        """Jacobi-preconditioned CG solve of ``K x = b``.

        The returned solution always satisfies ``|K x - b| <= rel_tol |b|``
        (verified against the true residual); otherwise a
        :class:`SolverError` is raised.  Residual stagnation, the signature
        of an insufficiently constrained system, also raises.
        """
        tol = self.options.rel_tol if rel_tol is None else rel_tol
        iters = self.options.max_iters if max_iters is None else max_iters
        b = np.asarray(b, dtype=float)
        b_norm = float(np.linalg.norm(b))
        self.stats.solves += 1
        if b_norm == 0.0:
            return np.zeros_like(b)

        x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
        # the recurrence residual can drift from the true one near tight
        # tolerances; restarting re-anchors it, so converge on the true
        # residual without weakening the advertised contract
        for restart in range(4):
            x, ok = self._pcg(x, b, b_norm, tol, iters)
            true_res = float(np.linalg.norm(b - self.stiffness_matvec(x)))
            if true_res <= tol * b_norm:
                return x
            if not ok and restart == 0:
                raise SolverError(
                    f"CG did not converge in {iters} iterations "
                    f"(residual {true_res / b_norm:.3e}, target {tol:.3e})"
                )
        raise SolverError(
            f"CG restarts exhausted at residual {true_res / b_norm:.3e} "
            f"(target {tol:.3e}); tolerance may be below attainable precision"
        )

    def _pcg(self, x, b, b_norm, tol, iters):
        r = b - self.stiffness_matvec(x)
        z = r / self.diag
        p = z.copy()
        rz = float(r @ z)
        res = float(np.linalg.norm(r))
        best_res, best_iter = res, 0
        it = 0
        while res > tol * b_norm:
            if it >= iters:
                return x, False
            q = self.stiffness_matvec(p)
            pq = float(p @ q)
            if pq <= 0.0:
                raise SolverError(
                    "CG breakdown: operator is not positive definite on the "
                    "constrained space (insufficient supports?)"
                )
            alpha = rz / pq
            x += alpha * p
            r -= alpha * q
            res = float(np.linalg.norm(r))
            it += 1
            if res < best_res * 0.99:
                best_res, best_iter = res, it
            elif it - best_iter > 1000:
                # conditioning plateaus recover; a truly singular system
                # keeps the residual pinned at the inconsistent part forever
                raise SolverError(
                    f"CG stagnated for 1000 iterations at residual "
                    f"{res / b_norm:.3e}; the system is likely singular "
                    "(insufficient constraints)"
                )
            z = r / self.diag
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        self.stats.iterations += it
        return x, True


@dataclass
class Problem:
    """Inputs shared by all analyses of one optimization problem."""

    grid: VoxelGrid
    material: Material
    loads: LoadCase
    kernels: ElementKernels
    options: SolverOptions = field(default_factory=SolverOptions)
    stats: SolveStats = field(default_factory=SolveStats)

    def operators(self, design_or_scales) -> Operators:
        scales = (
            design_or_scales.scales()
            if isinstance(design_or_scales, Design)
            else np.asarray(design_or_scales, dtype=float)
        )
        return Operators(self.grid, self.kernels, scales, self.options, self.stats)

    def thermal_strain(self, delta_t: float | None = None) -> np.ndarray:
        dt = self.loads.delta_t if delta_t is None else delta_t
        return thermal_strain(self.material, dt, self.grid.ndim)


def solve_static(
    ops: Operators,
    loads: LoadCase,
    x0: np.ndarray | None = None,
    rel_tol: float | None = None,
) -> np.ndarray:
    """Displacements under the combined structural and thermal load."""
    f = loads.force + ops.thermal_force(loads.delta_t)
    return ops.solve(ops.apply_bc(f), x0=x0, rel_tol=rel_tol)


def total_force(ops: Operators, loads: LoadCase) -> np.ndarray:
    """Structural plus thermal load with supports applied."""
    return ops.apply_bc(loads.force + ops.thermal_force(loads.delta_t))


def compliance(d: np.ndarray, f: np.ndarray) -> float:
    """Work of the applied loads, ``f . d``."""
    return float(np.asarray(f) @ np.asarray(d))
