"""Monodromy matrices, Floquet exponents, quadratic normal forms and index data.

The linearised return map is expressed in a symplectic frame of the section
slice ``V = {v : dH(v) = 0, omega(w, v) = 0}``, ``w = grad H / |grad H|^2``,
so ``A`` is a ``2d x 2d`` matrix with ``A^T J A = J``.

Elliptic multipliers are labelled by their Krein sign: the eigenvalue of the
*first kind* is the one whose eigenvector ``v`` has ``Im(v^H J v) > 0``.  For
the flow of ``omega/2 (x^2 + xi^2)`` with ``omega > 0`` it is the multiplier
whose argument increases with time.
"""

from __future__ import annotations

import cmath
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import FloquetError
from .symplectic import standard_j, symplectic_defect, symplectic_gram_schmidt

logger = logging.getLogger(__name__)

TOL_ELL = 1e-6
KIND_RANK = {"hr": 0, "hc": 1, "ee": 2}
CZ_CONVENTION = "floor-winding of first-kind multipliers (rho-function), g = (theta(T) - sum Theta_j) / 2pi"


# -- section frames ---------------------------------------------------------

def _slice_vectors(system, z):
    g = system.grad0(z)
    u = system.vector_field(z)
    w = g / (g @ g)
    return u, w


def slice_projector(system, z):
    """Symplectic projection of ``R^{2n}`` onto the section slice at ``z``."""
    J = standard_j(system.n)
    u, w = _slice_vectors(system, z)
    # v = z - omega(z, w) u + omega(z, u) w
    return np.eye(system.dim) - np.outer(u, J @ w) + np.outer(w, J @ u)


def section_frame(system, z):
    """Symplectic basis ``S`` (``2n x 2d``) of the section slice at ``z``."""
    J = standard_j(system.n)
    P = slice_projector(system, z)
    S = symplectic_gram_schmidt(P, J, rank_tol=1e-9)
    if S.shape[1] != system.dim - 2:
        raise FloquetError("could not build a symplectic section frame")
    return S


def _paired_symplectify(C, J):
    # Gram-Schmidt keeping the pairing (a_i, b_i) of the input columns
    d = C.shape[1] // 2
    a = [C[:, i].copy() for i in range(d)]
    b = [C[:, d + i].copy() for i in range(d)]
    for i in range(d):
        s = a[i] @ J @ b[i]
        if abs(s) < 1e-12:
            raise FloquetError("section frame degenerates along the orbit")
        b[i] = b[i] / s
        for j in range(i + 1, d):
            for lst in (a, b):
                c = lst[j]
                lst[j] = c - (c @ J @ b[i]) * a[i] + (c @ J @ a[i]) * b[i]
    return np.column_stack(a + b)


def frame_coordinates(S, v, J):
    """Coordinates of slice vectors ``v`` in the symplectic frame ``S``."""
    Jd = standard_j(S.shape[1] // 2)
    return -Jd @ S.T @ J @ v


# -- monodromy --------------------------------------------------------------

@dataclass(frozen=True)
class MonodromyData:
    A: np.ndarray
    E: float
    T: float
    basis: np.ndarray

    @property
    def d(self):
        return self.A.shape[0] // 2

    def symplectic_defect(self):
        return symplectic_defect(self.A)

    def eigenvalues(self):
        return np.linalg.eigvals(self.A)


def monodromy(orbit, max_defect=1e-7):
    """Co-restriction of ``Y(T)`` to the section slice through ``orbit.start``."""
    system = orbit.system
    z0 = orbit.start.as_array()
    J = standard_j(system.n)
    S = section_frame(system, z0)
    P = slice_projector(system, z0)
    A = frame_coordinates(S, P @ orbit.trajectory.Y[-1] @ S, J)
    md = MonodromyData(A=A, E=orbit.E, T=orbit.T, basis=S)
    defect = md.symplectic_defect()
    if defect > max_defect:
        raise FloquetError(f"monodromy symplecticity defect {defect:.3e}; "
                           "re-integrate at a tighter tolerance")
    return md


def from_matrix(A, E=0.0, T=1.0):
    """Wrap a bare symplectic matrix (already in a symplectic frame)."""
    A = np.asarray(A, dtype=float)
    return MonodromyData(A=A, E=E, T=T, basis=np.eye(A.shape[0]))


# -- classification ---------------------------------------------------------

@dataclass(frozen=True)
class FloquetExponent:
    M: complex
    kind: str
    pair_index: int
    multiplier: complex
    theta: Optional[float] = None

    @property
    def modes(self):
        """Exponents entering the quantisation sum (two for a loxodromic quadruple)."""
        if self.kind == "hc":
            return [self.M, self.M.conjugate()]
        return [self.M]


def krein_sign(v, J):
    v = v / np.linalg.norm(v)
    return float(np.imag(np.conj(v) @ J @ v))


def _sort_key(e):
    return (KIND_RANK[e.kind], -round(e.M.real, 9), round(e.M.imag, 9))


def canonical_order(exponents):
    """Deterministic ordering: hr, hc, ee; then by decreasing ``Re M``, increasing ``Im M``."""
    out = sorted(exponents, key=_sort_key)
    return [FloquetExponent(e.M, e.kind, i, e.multiplier, e.theta) for i, e in enumerate(out)]


def _eig_checked(A, collision_tol=1e-6):
    lam, vec = np.linalg.eig(A)
    for i, j in itertools.combinations(range(len(lam)), 2):
        if abs(lam[i] - lam[j]) < collision_tol * max(1.0, abs(lam[i])):
            raise FloquetError("repeated Floquet multipliers (r < d)")
    return lam, vec


def classify(md, tol_ell=TOL_ELL):
    """One representative exponent per multiplier quadruple.

    Raises
    ------
    FloquetError
        Multiplier on ``(-inf, 0]``, repeated multipliers, elliptic multiplier
        too close to ``+-1``, or an inconsistent quadruple count.
    """
    A = md.A
    d = A.shape[0] // 2
    J = standard_j(d)
    lam, vec = _eig_checked(A)
    out = []
    for i, l in enumerate(lam):
        mod = abs(l)
        branch_dist = mod if l.real >= 0 else abs(l.imag)
        if branch_dist < 1e-8:
            raise FloquetError(f"multiplier {l:.6g} on the non-positive real axis")
        if abs(mod - 1) <= tol_ell:
            if abs(l.imag) < 1e-8:
                raise FloquetError(f"elliptic multiplier {l:.6g} unresolvably close to +-1")
            if krein_sign(vec[:, i], J) > 0:
                theta = cmath.phase(l) % (2 * math.pi)
                out.append(FloquetExponent(1j * theta, "ee", -1, complex(l), theta))
        elif mod > 1:
            if abs(cmath.phase(l)) <= 1e-9:
                out.append(FloquetExponent(complex(math.log(mod), 0.0), "hr", -1, complex(l)))
            elif l.imag > 0:
                out.append(FloquetExponent(complex(cmath.log(l)), "hc", -1, complex(l)))
    count = sum(2 if e.kind == "hc" else 1 for e in out)
    if count != d:
        raise FloquetError(f"found {count} exponent modes for d={d}; quadruple structure broken")
    return canonical_order(out)


def modes(exponents):
    """Flatten exponents to the per-mode list used by the quantisation condition."""
    vals, kinds, pairs = [], [], []
    for e in exponents:
        for m in e.modes:
            vals.append(m)
            kinds.append(e.kind)
            pairs.append(e.pair_index)
    return np.array(vals, dtype=complex), kinds, pairs


# -- normal forms -----------------------------------------------------------

@dataclass(frozen=True)
class BlockNormalForm:
    """Real symplectic basis of one quadruple and its quadratic normal form.

    ``basis`` columns are ``(x, xi)`` for ee/hr blocks and
    ``(x1, x2, xi1, xi2)`` for hc blocks, in the monodromy's section frame.
    ``generator`` is the block of ``log A`` in that basis; ``form`` the
    matrix of the quadratic polynomial ``Q`` (``Q = zeta^T form zeta / 2``).
    """

    kind: str
    basis: np.ndarray
    coefficient: complex
    generator: np.ndarray
    form: np.ndarray

    @property
    def descriptor(self):
        if self.kind == "ee":
            return f"{self.coefficient.imag:.12g} * (x^2 + xi^2)/2"
        if self.kind == "hr":
            return f"{self.coefficient.real:.12g} * x*xi"
        c, dd = self.coefficient.real, self.coefficient.imag
        return f"{c:.12g} * (x1*xi1 + x2*xi2) - {dd:.12g} * (x1*xi2 - x2*xi1)"


def _block_generator(kind, M):
    if kind == "hr":
        return np.diag([M.real, -M.real])
    if kind == "ee":
        th = M.imag
        return np.array([[0.0, th], [-th, 0.0]])
    c, d = M.real, M.imag
    G = np.zeros((4, 4))
    G[:2, :2] = [[c, d], [-d, c]]
    G[2:, 2:] = [[-c, d], [-d, -c]]
    return G


def block_normal_form(md, tol_ell=TOL_ELL, max_defect=1e-7):
    """Real symplectic bases bringing ``b = sigma(rho, B rho)/2`` to normal form per quadruple."""
    A = md.A
    d = A.shape[0] // 2
    J = standard_j(d)
    exps = classify(md, tol_ell)
    lam, vec = np.linalg.eig(A)

    def eigvec(target):
        i = int(np.argmin(np.abs(lam - target)))
        return vec[:, i]

    blocks = []
    for e in exps:
        l = e.multiplier
        if e.kind == "hr":
            u = np.real(eigvec(l))
            s = np.real(eigvec(1 / l))
            basis = np.column_stack([u, s / (u @ J @ s)])
        elif e.kind == "ee":
            v = eigvec(l)
            a, b = np.real(v), np.imag(v)
            scale = a @ J @ b
            if scale <= 0:
                raise FloquetError("elliptic eigenvector has the wrong Krein sign")
            basis = np.column_stack([a, b]) / math.sqrt(scale)
        else:
            u = eigvec(l)
            s = eigvec(1 / np.conj(l))
            beta = np.conj(2 / (u @ J @ np.conj(s)))
            S = beta * s
            basis = np.column_stack([np.real(u), np.imag(u), np.real(S), np.imag(S)])
        G = _block_generator(e.kind, e.M)
        k = basis.shape[1] // 2
        Jk = standard_j(k)
        blocks.append(BlockNormalForm(e.kind, basis, e.M, G, -Jk @ G))

    for blk in blocks:
        k = blk.basis.shape[1] // 2
        err = np.max(np.abs(blk.basis.T @ J @ blk.basis - standard_j(k)))
        if err > max_defect:
            raise FloquetError(f"normal-form basis normalisation defect {err:.3e}")
    return blocks


def assemble_basis(blocks):
    """Stack block bases into one symplectic matrix (all ``x`` columns, then all ``xi``)."""
    qs, ps = [], []
    for blk in blocks:
        k = blk.basis.shape[1] // 2
        qs.append(blk.basis[:, :k])
        ps.append(blk.basis[:, k:])
    return np.column_stack(qs + ps)


def _assemble_generator(blocks):
    d = sum(blk.basis.shape[1] // 2 for blk in blocks)
    G = np.zeros((2 * d, 2 * d))
    off = 0
    for blk in blocks:
        k = blk.basis.shape[1] // 2
        g = blk.generator
        idx = list(range(off, off + k)) + list(range(d + off, d + off + k))
        G[np.ix_(idx, idx)] = g
        off += k
    return G


def log_monodromy(md, blocks=None):
    """Real logarithm ``B`` of ``A`` assembled from the block normal forms.

    Elliptic blocks use the rotation angle ``Theta`` of the first-kind
    multiplier in ``(0, 2 pi)``, so ``B`` is a real logarithm but not
    necessarily the principal one.
    """
    if blocks is None:
        blocks = block_normal_form(md)
    S = assemble_basis(blocks)
    G = _assemble_generator(blocks)
    return S @ G @ np.linalg.inv(S)


def exp_log_defect(md, blocks=None):
    B = log_monodromy(md, blocks)
    return float(np.max(np.abs(expm(B) - md.A)) / max(1.0, np.max(np.abs(md.A))))


def stable_unstable_split(md, tol_ell=TOL_ELL):
    """Orthonormal bases of the expanding and contracting subspaces."""
    blocks = [b for b in block_normal_form(md, tol_ell) if b.kind != "ee"]
    if not blocks:
        raise FloquetError("monodromy has no hyperbolic directions")
    plus, minus = [], []
    for blk in blocks:
        k = blk.basis.shape[1] // 2
        plus.append(blk.basis[:, :k])
        minus.append(blk.basis[:, k:])
    fp, _ = np.linalg.qr(np.column_stack(plus))
    fm, _ = np.linalg.qr(np.column_stack(minus))
    return fp, fm


def invariance_residual(A, F):
    """``|A F - F C|`` for the best ``C``; zero iff ``span F`` is ``A``-invariant."""
    AF = A @ F
    C, *_ = np.linalg.lstsq(F, AF, rcond=None)
    return float(np.max(np.abs(AF - F @ C)))


# -- hypotheses -------------------------------------------------------------

@dataclass
class ResonanceHit:
    k: tuple
    defect: float
    value: complex

    def to_dict(self):
        return {"k": list(self.k), "defect": self.defect,
                "sum": [self.value.real, self.value.imag]}


def _lattice_vectors(d, K):
    grids = np.meshgrid(*[np.arange(-K, K + 1)] * d, indexing="ij")
    ks = np.stack([g.ravel() for g in grids], axis=1)
    return ks[np.any(ks != 0, axis=1)]


def nonresonance_scan(exponents, K, tol_res=1e-8):
    """Scan ``0 < |k|_inf <= K`` for ``sum k_j M_j`` near ``2 pi i Z``.

    Returns ``(ok17, worst17, ok18, worst18, hits)`` where ``hits`` lists the
    resonant vectors (at most 50).  The defect threshold is
    ``tol_res * (1 + |k|_1)``.
    """
    if K > 20:
        raise ValueError("K > 20 rejected (combinatorial blow-up)")
    if K < 1:
        raise ValueError("K must be positive")
    M = np.asarray(exponents, dtype=complex)
    ks = _lattice_vectors(M.shape[0], K)
    sums = ks @ M
    nearest = 2j * math.pi * np.round(sums.imag / (2 * math.pi))
    defect = np.abs(sums - nearest)
    thresh = tol_res * (1 + np.abs(ks).sum(axis=1))
    resonant = defect < thresh
    nonzero = np.abs(sums) >= thresh

    def hit(mask):
        if not np.any(mask):
            return None
        idx = np.flatnonzero(mask)
        i = idx[np.argmin(defect[idx])]
        return ResonanceHit(tuple(int(v) for v in ks[i]), float(defect[i]), complex(sums[i]))

    worst18 = hit(np.ones_like(resonant))
    worst17 = hit(nonzero)
    hits = [ResonanceHit(tuple(int(v) for v in ks[i]), float(defect[i]), complex(sums[i]))
            for i in np.flatnonzero(resonant)[:50]]
    ok18 = not np.any(resonant)
    ok17 = not np.any(resonant & nonzero)
    return ok17, worst17, ok18, worst18, hits


@dataclass
class HypothesisReport:
    nondegenerate: bool
    nondegeneracy_margin: float
    no_nonpositive_real: bool
    branch_margin: float
    partially_hyperbolic: bool
    distinct_exponents: bool
    nonres17: bool
    nonres17_worst: Optional[ResonanceHit]
    nonres18: bool
    nonres18_worst: Optional[ResonanceHit]
    K: int
    tol_ell: float
    tol_res: float
    exponents: List[FloquetExponent] = field(default_factory=list)
    resonant_vectors: List[ResonanceHit] = field(default_factory=list)
    message: str = ""
    cz_convention: str = CZ_CONVENTION

    FLAGS = ("nondegenerate", "no_nonpositive_real", "partially_hyperbolic",
             "distinct_exponents", "nonres17", "nonres18")

    def failures(self, required=None):
        required = self.FLAGS if required is None else required
        return [f for f in required if not getattr(self, f)]

    def passed(self, required=None):
        return not self.failures(required)

    def to_dict(self):
        def hit(h):
            return None if h is None else h.to_dict()
        return {
            "flags": {f: bool(getattr(self, f)) for f in self.FLAGS},
            "nondegeneracy_margin": self.nondegeneracy_margin,
            "branch_margin": self.branch_margin,
            "nonres17_worst": hit(self.nonres17_worst),
            "nonres18_worst": hit(self.nonres18_worst),
            "resonant_vectors": [h.to_dict() for h in self.resonant_vectors],
            "K": self.K,
            "tol_ell": self.tol_ell,
            "tol_res": self.tol_res,
            "exponents": [exponent_dict(e) for e in self.exponents],
            "message": self.message,
            "cz_convention": self.cz_convention,
        }


def exponent_dict(e):
    out = {"kind": e.kind, "pair_index": e.pair_index, "M": [e.M.real, e.M.imag],
           "multiplier": [e.multiplier.real, e.multiplier.imag]}
    if e.theta is not None:
        out["theta"] = e.theta
    return out


def check_hypotheses(md, K=10, tol_res=1e-8, tol_ell=TOL_ELL, margin=1e-6):
    """Evaluate non-degeneracy, branch, hyperbolicity and non-resonance hypotheses."""
    if K > 20:
        raise ValueError("K > 20 rejected (combinatorial blow-up)")
    lam = md.eigenvalues()
    nd_margin = float(np.min(np.abs(lam - 1)))
    branch = float(np.min(np.where(lam.real >= 0, np.abs(lam), np.abs(lam.imag))))
    try:
        exps = classify(md, tol_ell)
    except FloquetError as exc:
        return HypothesisReport(
            nondegenerate=nd_margin > margin, nondegeneracy_margin=nd_margin,
            no_nonpositive_real=branch > 1e-8, branch_margin=branch,
            partially_hyperbolic=bool(np.any(np.abs(np.abs(lam) - 1) > tol_ell)),
            distinct_exponents=False, nonres17=False, nonres17_worst=None,
            nonres18=False, nonres18_worst=None, K=K, tol_ell=tol_ell, tol_res=tol_res,
            message=str(exc))
    vals, _, _ = modes(exps)
    ok17, w17, ok18, w18, hits = nonresonance_scan(vals, K, tol_res)
    return HypothesisReport(
        nondegenerate=nd_margin > margin, nondegeneracy_margin=nd_margin,
        no_nonpositive_real=branch > 1e-8, branch_margin=branch,
        partially_hyperbolic=any(e.M.real > tol_ell for e in exps),
        distinct_exponents=True, nonres17=ok17, nonres17_worst=w17,
        nonres18=ok18, nonres18_worst=w18, K=K, tol_ell=tol_ell, tol_res=tol_res,
        exponents=exps, resonant_vectors=hits)


# -- Conley-Zehnder ---------------------------------------------------------

def rho_phase(Psi, tol_ell=TOL_ELL, krein_min=1e-3):
    """Unit complex number ``rho(Psi)``: product of first-kind elliptic multipliers,
    times ``-1`` per pair of negative real multipliers."""
    d = Psi.shape[0] // 2
    J = standard_j(d)
    lam, vec = np.linalg.eig(Psi)
    rho = 1.0 + 0j
    n_neg = 0
    for i, l in enumerate(lam):
        k = krein_sign(vec[:, i], J)
        if abs(abs(l) - 1) <= max(tol_ell, 1e-6) and abs(k) > krein_min:
            if k > 0:
                rho *= l / abs(l)
        elif abs(l.imag) <= 1e-9 * abs(l) and l.real < 0:
            n_neg += 1
    if n_neg % 2:
        raise FloquetError("odd number of negative real multipliers along the path")
    return rho * (-1) ** (n_neg // 2)


def path_winding(psi, T, grid=64, max_depth=30):
    """Continuous argument of ``rho(psi(t))`` from ``t = 0`` to ``T``.

    The grid is refined locally until every step changes the argument by less
    than ``pi/4``.
    """
    def angle(t):
        return cmath.phase(rho_phase(psi(t)))

    ts = np.linspace(0.0, T, grid + 1)
    total = 0.0
    prev_t, prev_a = ts[0], angle(ts[0])
    min_step = T * 2.0 ** -max_depth
    stack = list(ts[1:][::-1])
    while stack:
        t = stack.pop()
        a = angle(t)
        step = (a - prev_a + math.pi) % (2 * math.pi) - math.pi
        if abs(step) >= math.pi / 4:
            if t - prev_t < min_step:
                raise FloquetError("eigenvalue collision prevents continuous labelling")
            stack.append(t)
            stack.append(0.5 * (prev_t + t))
            continue
        total += step
        prev_t, prev_a = t, a
    return total


def winding_index(psi, T, exponents, grid=64):
    """Integer index ``(theta(T) - sum Theta_j) / 2 pi`` of a symplectic path."""
    total = path_winding(psi, T, grid)
    base = sum(e.theta for e in exponents if e.kind == "ee")
    g = (total - base) / (2 * math.pi)
    if abs(g - round(g)) > 1e-6:
        raise FloquetError(f"non-integer winding {g:.9f}; index convention violated")
    return int(round(g))


def linearized_path(orbit):
    """``Psi(t)``: co-restriction of ``Y(t)`` to section frames transported along the orbit."""
    system = orbit.system
    J = standard_j(system.n)
    z0 = orbit.start.as_array()
    S0 = section_frame(system, z0)
    traj = orbit.trajectory

    def psi(t):
        z = traj.state(t)
        Y = traj.tangent_at(t)
        P = slice_projector(system, z)
        St = _paired_symplectify(P @ S0, J)
        return frame_coordinates(St, P @ Y @ S0, J)

    return psi


def conley_zehnder(orbit, grid=64, tol_ell=TOL_ELL, md=None):
    """Winding index ``g`` of the first-kind multipliers along the orbit."""
    if md is None:
        md = monodromy(orbit)
    exps = classify(md, tol_ell)
    return winding_index(linearized_path(orbit), orbit.T, exps, grid)
