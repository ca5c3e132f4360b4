"""Assembly-free element loops, jit-compiled with numba.

These are the per-iteration hot paths of the solver: global matrix-vector
products composed of gather / reference-kernel multiply / scatter over all
elements, without ever forming a global matrix.  All loops are
single-threaded and accumulate in a fixed element order, so results are
bit-reproducible.
"""

import numba as nb
import numpy as np

_jit = nb.njit(cache=True, fastmath=False)


@_jit
def stiffness_matvec(edofs, k_e, scale, x):
    """y = sum_e scale[e] * scatter_e(k_e @ gather_e(x))."""
    n_el, nd = edofs.shape
    y = np.zeros(x.shape[0])
    xe = np.empty(nd)
    for e in range(n_el):
        s = scale[e]
        if s == 0.0:
            continue
        row = edofs[e]
        for a in range(nd):
            xe[a] = x[row[a]]
        for a in range(nd):
            acc = 0.0
            for b in range(nd):
                acc += k_e[a, b] * xe[b]
            y[row[a]] += s * acc
    return y


@_jit
def geometric_matvec(edofs, kg_unit, sigma, x):
    """y = sum_e scatter_e((sum_k sigma[e,k] * kg_unit[k]) @ gather_e(x)).

    Elements whose stress vector is all zero contribute nothing.
    """
    n_el, nd = edofs.shape
    ns = kg_unit.shape[0]
    y = np.zeros(x.shape[0])
    xe = np.empty(nd)
    ye = np.empty(nd)
    for e in range(n_el):
        row = edofs[e]
        nonzero = False
        for k in range(ns):
            if sigma[e, k] != 0.0:
                nonzero = True
                break
        if not nonzero:
            continue
        for a in range(nd):
            xe[a] = x[row[a]]
            ye[a] = 0.0
        for k in range(ns):
            sk = sigma[e, k]
            if sk == 0.0:
                continue
            for a in range(nd):
                acc = 0.0
                for b in range(nd):
                    acc += kg_unit[k, a, b] * xe[b]
                ye[a] += sk * acc
        for a in range(nd):
            y[row[a]] += ye[a]
    return y


@_jit
def scaled_diagonal(edofs, k_e_diag, scale, n_dofs):
    """Diagonal of the scaled stiffness, assembled element-wise."""
    n_el, nd = edofs.shape
    diag = np.zeros(n_dofs)
    for e in range(n_el):
        s = scale[e]
        if s == 0.0:
            continue
        row = edofs[e]
        for a in range(nd):
            diag[row[a]] += s * k_e_diag[a]
    return diag


@_jit
def mode_contractions(edofs, kg_unit, v):
    """c[e, k] = v_e^T kg_unit[k] v_e for every element."""
    n_el, nd = edofs.shape
    ns = kg_unit.shape[0]
    c = np.empty((n_el, ns))
    ve = np.empty(nd)
    for e in range(n_el):
        row = edofs[e]
        for a in range(nd):
            ve[a] = v[row[a]]
        for k in range(ns):
            acc = 0.0
            for a in range(nd):
                va = ve[a]
                if va == 0.0:
                    continue
                r = 0.0
                for b in range(nd):
                    r += kg_unit[k, a, b] * ve[b]
                acc += va * r
            c[e, k] = acc
    return c
