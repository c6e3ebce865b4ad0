"""Small linear-algebra helpers for the standard symplectic structure.

Phase vectors are ordered ``z = (y_1..y_n, eta_1..eta_n)`` and the flow of
``H`` is ``dz/dt = J grad H(z)`` with ``J = [[0, I], [-I, 0]]``.
"""

import numpy as np


def standard_j(n):
    """Return the ``2n x 2n`` standard symplectic matrix."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def omega(a, b, J=None):
    """Symplectic pairing ``a^T J b`` (so ``omega(e_q, e_p) = 1``)."""
    a = np.asarray(a)
    if J is None:
        J = standard_j(a.shape[0] // 2)
    return a @ J @ b


def symplectic_defect(A):
    """Max-norm of ``A^T J A - J``."""
    J = standard_j(A.shape[0] // 2)
    return float(np.max(np.abs(A.T @ J @ A - J)))


def symplectic_gram_schmidt(vectors, J, rank_tol=1e-10):
    """Symplectic Gram-Schmidt on an ordered list of candidate columns.

    Pairs are formed greedily: the first remaining candidate ``a`` is paired
    with the remaining candidate ``b`` of largest ``|omega(a, b)|``; both are
    normalised so ``omega(a, b) = 1`` and removed from the others.

    Parameters
    ----------
    vectors : ndarray, shape (m, k)
        Candidate columns spanning (at least) a symplectic subspace.
    J : ndarray, shape (m, m)
    rank_tol : float
        Candidates with norm below this (after reduction) are discarded.

    Returns
    -------
    ndarray, shape (m, 2p)
        Columns ``(a_1..a_p, b_1..b_p)`` with ``S^T J S = J_{2p}``.
    """
    cands = [np.array(v, dtype=float) for v in np.asarray(vectors).T]
    qs, ps = [], []
    while cands:
        norms = [np.linalg.norm(c) for c in cands]
        keep = [c for c, nrm in zip(cands, norms) if nrm > rank_tol]
        if len(keep) < 2:
            break
        a = keep[0]
        rest = keep[1:]
        pair = np.array([a @ J @ c for c in rest])
        j = int(np.argmax(np.abs(pair)))
        if abs(pair[j]) <= rank_tol:
            # a is in the radical of the remaining span; drop it
            cands = rest
            continue
        b = rest[j] / pair[j]
        # balance the pair so both columns have comparable size
        scale = np.sqrt(np.linalg.norm(b) / np.linalg.norm(a))
        a, b = a * scale, b / scale
        qs.append(a)
        ps.append(b)
        cands = []
        for i, c in enumerate(rest):
            if i == j:
                continue
            # remove the (a, b)-component: c - omega(c, b) a + omega(c, a) b
            c = c - (c @ J @ b) * a + (c @ J @ a) * b
            cands.append(c)
    if not qs:
        return np.zeros((J.shape[0], 0))
    return np.column_stack(qs + ps)
