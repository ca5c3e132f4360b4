"""Linear buckling eigensolver.

Solves ``(K + lambda * K_sigma) v = 0`` for the smallest positive load
factor.  The problem is recast as ``B q = nu q`` with
``B = K^-1 (-K_sigma)`` and ``nu = 1 / lambda``; ``B`` is self-adjoint in
the K-inner product because ``K`` is positive definite on the constrained
space, so a Lanczos recurrence with a K-orthonormal basis applies.  The
largest positive Ritz value gives the smallest positive load factor; a few
inverse-iteration polish steps then push the explicit residual
``|K v + lambda K_sigma v| / |K v|`` below ``eig_tol``.

Compressive void regions cannot produce spurious modes here: void elements
carry exactly zero stress and therefore contribute nothing to K_sigma.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .fem import Operators, SolverError

# Relative gap below which two buckling modes are treated as near-coincident.
GAP_WARN_THRESHOLD = 0.02

# Lanczos steps between restarts; bounds the stored basis size.
_RESTART_BLOCK = 60


@dataclass
class BucklingResult:
    """Smallest positive load factor and its K-normalized mode.

    ``load_factor`` is ``inf`` (and ``mode`` is ``None``) when the stress
    state admits no positive factor, i.e. nothing is in compression.
    """

    load_factor: float
    mode: np.ndarray | None
    residual: float
    multiplicity_gap: float
    steps: int

    @property
    def buckled(self) -> bool:
        return np.isfinite(self.load_factor)


def rayleigh_residual(ops: Operators, sigma: np.ndarray, load_factor: float,
                      v: np.ndarray) -> float:
    """Relative eigen-residual ``|K v + lambda K_sigma v| / |K v|``."""
    kv = ops.stiffness_matvec(v)
    kv_norm = float(np.linalg.norm(kv))
    if kv_norm == 0.0:
        raise ValueError("mode vector is zero")
    r = kv + load_factor * ops.geometric_matvec(sigma, v)
    return float(np.linalg.norm(r)) / kv_norm


def solve_buckling(
    ops: Operators,
    sigma: np.ndarray,
    v0: np.ndarray | None = None,
    eig_tol: float | None = None,
    max_steps: int | None = None,
    inner_rel_tol: float | None = None,
) -> BucklingResult:
    """Smallest positive buckling load factor for the given stress state.

    ``v0`` warm-starts the Krylov iteration (e.g. the mode of the previous
    topology).  Inner linear solves reuse the operators' CG solver; their
    failures propagate.  A stress state without compression yields an
    explicit no-buckling result instead of an error.
    """
    opts = ops.options
    tol = opts.eig_tol if eig_tol is None else eig_tol
    budget = opts.eig_max_steps if max_steps is None else max_steps
    inner_tol = min(opts.rel_tol, tol * 0.1) if inner_rel_tol is None else inner_rel_tol

    sigma = np.ascontiguousarray(sigma, dtype=float)
    n_free = int(np.count_nonzero(ops.free_mask))
    if n_free == 0:
        raise SolverError("all DOFs are fixed")
    rng = np.random.default_rng(opts.seed)

    def random_start():
        return np.where(ops.free_mask, rng.standard_normal(ops.grid.n_dofs), 0.0)

    start = (np.where(ops.free_mask, np.asarray(v0, dtype=float), 0.0)
             if v0 is not None else random_start())
    if not np.any(start):
        start = random_start()

    # Subspace construction tolerates loose inner solves; the explicit
    # residual verification below is what guarantees the advertised
    # accuracy, via polish rounds with tight solves.
    lanczos_tol = max(1e-6, inner_tol)

    best_vec = None
    guard_nu = None
    lam = np.inf
    res = np.inf
    steps_done = 0
    fresh_starts = 1 if v0 is None else 0
    while steps_done < budget:
        block = min(_RESTART_BLOCK, n_free, budget - steps_done)
        nus, vecs, used = _lanczos_block(ops, sigma, start, block, lanczos_tol)
        steps_done += used
        scale = max(1.0, float(np.abs(nus).max())) if nus.size else 1.0
        pos = nus > 1e-12 * scale
        if not pos.any():
            if best_vec is not None:
                break
            if fresh_starts < 2 and steps_done < budget:
                # guard against a start vector deficient in the compressive
                # subspace before declaring an all-tension state
                fresh_starts += 1
                start = random_start()
                continue
            return BucklingResult(np.inf, None, 0.0, np.inf, steps_done)
        order = np.argsort(nus[pos])[::-1]
        pos_nus = nus[pos][order]
        best_vec = vecs[:, pos][:, order[0]]
        if pos_nus.size > 1:
            guard_nu = float(pos_nus[1])
        lam, best_vec, res, polish = _polish(ops, sigma, best_vec, tol, inner_tol)
        steps_done += polish
        if res <= tol or used < block:
            break
        start = best_vec
        lanczos_tol = max(lanczos_tol * 1e-2, inner_tol)

    if best_vec is None or not np.isfinite(lam):
        return BucklingResult(np.inf, None, 0.0, np.inf, steps_done)
    if res > tol:
        raise SolverError(
            f"buckling iteration stalled at residual {res:.3e} "
            f"(target {tol:.3e}) after {steps_done} steps"
        )
    v = best_vec

    v = _fix_sign(v)
    gap = np.inf
    if guard_nu is not None and guard_nu > 0.0:
        gap = abs(1.0 / guard_nu - lam) / lam
        if gap < GAP_WARN_THRESHOLD:
            warnings.warn(
                f"buckling modes nearly coincident (relative gap {gap:.3e}); "
                "sensitivities assume a unique mode",
                stacklevel=2,
            )
    return BucklingResult(
        load_factor=lam, mode=v, residual=res,
        multiplicity_gap=gap, steps=steps_done,
    )


def _lanczos_block(ops, sigma, start, m, inner_tol):
    """Up to ``m`` K-orthonormal Lanczos steps on ``K^-1 (-K_sigma)``.

    Returns Ritz values, Ritz vectors (full DOF length) and the number of
    steps performed.  One linear solve, one stiffness product and one
    geometric product per step; the basis is kept K-orthonormal by full
    reorthogonalization.  The block exits early once the top positive Ritz
    pair is resolved well enough for inverse-iteration polishing.
    """
    n = start.shape[0]
    q = np.empty((m, n))
    kq = np.empty((m, n))
    alphas = np.empty(m)
    betas = np.empty(max(m - 1, 0))

    t = ops.stiffness_matvec(start)
    nrm = np.sqrt(max(float(start @ t), 0.0))
    if nrm == 0.0:
        raise SolverError("buckling start vector is K-degenerate")
    q[0] = start / nrm
    kq[0] = t / nrm

    def ritz(size):
        if size == 1:
            return alphas[:1].copy(), np.ones((1, 1))
        return eigh_tridiagonal(alphas[:size], betas[: size - 1])

    used = 0
    for j in range(m):
        u = -ops.geometric_matvec(sigma, q[j])
        # alpha_j = <B q_j, q_j>_K = q_j . (-K_sigma q_j); exact even though
        # the solve below is iterative
        alphas[j] = float(q[j] @ u)
        used = j + 1
        if used == m:
            break
        w = ops.solve(u, rel_tol=inner_tol)
        w -= alphas[j] * q[j]
        if j > 0:
            w -= betas[j - 1] * q[j - 1]
        for _ in range(2):
            w -= (kq[: j + 1] @ w) @ q[: j + 1]
        t = ops.stiffness_matvec(w)
        beta = np.sqrt(max(float(w @ t), 0.0))
        if beta <= 1e-13 * max(1.0, abs(alphas[j])):
            break
        if used >= 3:
            nus, y = ritz(used)
            top = int(np.argmax(nus))
            # K-norm residual of the top Ritz pair is beta * |last row of y|
            if nus[top] > 0 and beta * abs(y[-1, top]) <= 0.02 * nus[top]:
                break
        betas[j] = beta
        q[j + 1] = w / beta
        kq[j + 1] = t / beta

    nus, y = ritz(used)
    vecs = q[:used].T @ y
    return nus, vecs, used


def _polish(ops, sigma, v, tol, inner_tol, max_rounds: int = 15):
    """Inverse iteration until the explicit residual meets ``tol``."""
    lam, res = _rayleigh_pair(ops, sigma, v)
    rounds = 0
    while res > tol and rounds < max_rounds and np.isfinite(lam):
        u = -ops.geometric_matvec(sigma, v)
        w = ops.solve(u, x0=v / lam if lam != 0 else None, rel_tol=inner_tol)
        t = ops.stiffness_matvec(w)
        nrm = np.sqrt(max(float(w @ t), 0.0))
        if nrm == 0.0:
            break
        v = w / nrm
        lam, res = _rayleigh_pair(ops, sigma, v)
        rounds += 1
    return lam, v, res, rounds


def _rayleigh_pair(ops, sigma, v):
    kv = ops.stiffness_matvec(v)
    gv = ops.geometric_matvec(sigma, v)
    den = -float(v @ gv)
    if den <= 0.0:
        return np.inf, np.inf
    lam = float(v @ kv) / den
    r = kv + lam * gv
    return lam, float(np.linalg.norm(r)) / float(np.linalg.norm(kv))


def _fix_sign(v: np.ndarray) -> np.ndarray:
    """First component above noise level made positive (stable sign)."""
    vmax = np.abs(v).max()
    idx = np.nonzero(np.abs(v) > 1e-8 * vmax)[0]
    if idx.size and v[idx[0]] < 0:
        return -v
    return v
