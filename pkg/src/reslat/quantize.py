"""Generalised Bohr-Sommerfeld condition: residual, Newton solver, lattice
enumeration and the exact lattice of the model Hamiltonian."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .action import eval_action
from .dynamics import model_blocks
from .errors import LatticeMismatch, QuantizationError
from .floquet import KIND_RANK

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
DECAY_TOL = 1e-12


@dataclass(frozen=True)
class QuantizationInput:
    """Semiclassical parameter and windows ``|m - m_c| h <= eps0``, ``k_j h <= h^delta``."""

    h: float
    eps0: float
    delta: float
    newton_tol: float = 1e-11
    max_iter: int = 40

    def __post_init__(self):
        if not 0 < self.h < 1:
            raise ValueError("h must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.eps0 < 0:
            raise ValueError("eps0 must be non-negative")
        if not self.newton_tol > 0 or self.max_iter < 1:
            raise ValueError("newton_tol and max_iter must be positive")

    @property
    def m_radius(self):
        return int(math.floor(self.eps0 / self.h + 1e-9))

    @property
    def k_max(self):
        return int(math.floor(self.h ** (self.delta - 1) + 1e-9))

    def to_dict(self):
        return {"h": self.h, "eps0": self.eps0, "delta": self.delta,
                "newton_tol": self.newton_tol, "max_iter": self.max_iter}


@dataclass(frozen=True)
class Resonance:
    m: int
    k: Tuple[int, ...]
    E: complex
    residual: float
    iters: int

    @property
    def key(self):
        return (self.m,) + tuple(self.k)


@dataclass
class ResonanceLattice:
    resonances: List[Resonance]
    input: Optional[QuantizationInput] = None
    meta: dict = field(default_factory=dict)
    failures: List[tuple] = field(default_factory=list)

    def __post_init__(self):
        keys = [r.key for r in self.resonances]
        if len(set(keys)) != len(keys):
            raise QuantizationError("duplicate (m, k) keys in lattice")
        self.resonances.sort(key=lambda r: (r.E.real, r.key))

    def __len__(self):
        return len(self.resonances)

    def by_key(self):
        return {r.key: r for r in self.resonances}

    @property
    def energies(self):
        return np.array([r.E for r in self.resonances], dtype=complex)

    @property
    def d(self):
        if self.resonances:
            return len(self.resonances[0].k)
        return int(self.meta.get("d", 0))


# -- residual ---------------------------------------------------------------

def _exponent_sum(k, M):
    # k: (..., d) integers, M: (d, ...) per-mode values
    kk = np.asarray(k, dtype=float) + 0.5
    return np.einsum("...j,j...->...", kk, M)


def bs_residual(model, E, m, k, h, check=True):
    """``F(E) = S0/(2 pi h) + S1 - (1/2 pi i) sum (k_j + 1/2) M_j - m`` and ``dF/dE``.

    ``E``, ``m`` and ``k`` broadcast (``k`` has a trailing axis of length
    ``d``).  Raises :class:`ValidityError` outside the action model's region.
    """
    v = eval_action(model, E, check=check)
    k = np.asarray(k)
    if k.shape[-1] != v.M.shape[0]:
        raise ValueError(f"k must have {v.M.shape[0]} entries")
    F = v.S0 / (TWO_PI * h) + v.S1 - _exponent_sum(k, v.M) / (TWO_PI * 1j) - m
    dF = v.dS0 / (TWO_PI * h) + v.dS1 - _exponent_sum(k, v.dM) / (TWO_PI * 1j)
    return F, dF


# -- seeds and windows ------------------------------------------------------

def _real_level(model, target, guess):
    """Solve ``S0(E) = target`` on the real axis by Newton from ``guess``."""
    S0, T = model.series("S0"), model.series("T")
    lo, hi = model.window
    span = hi - lo
    E = np.asarray(guess, dtype=float)
    for _ in range(60):
        step = (S0(E) - target) / T(E)
        E = np.clip(E - step, lo - span, hi + span)
        if np.all(np.abs(step) <= 1e-15 * (1 + np.abs(E))):
            break
    return E


def center_index(model, h):
    """Longitudinal index closest to the window centre (``m`` counts from here)."""
    return int(np.rint(model.series("S0")(model.center) / (TWO_PI * h)))


def seed_energies(model, m, k, h):
    """First-order seeds: real level from ``S0`` and ``S1`` at the centre, plus the
    transverse shift ``-i h sum (k_j + 1/2) M_j / T``."""
    c = eval_action(model, model.center, check=False)
    target = TWO_PI * h * (np.asarray(m, dtype=float) - c.S1.real)
    Em = _real_level(model, target, np.full(np.shape(target), model.center))
    Ec = eval_action(model, model.center, check=False)
    shift = -1j * h * _exponent_sum(k, Ec.M) / Ec.T
    return Em + shift


def _index_grid(model, inp):
    mc = center_index(model, inp.h)
    ms = np.arange(mc - inp.m_radius, mc + inp.m_radius + 1)
    ks = np.array(list(itertools.product(range(inp.k_max + 1), repeat=model.d)), dtype=int)
    if ks.size == 0:
        ks = np.zeros((1, model.d), dtype=int)
    M = np.repeat(ms, len(ks))
    K = np.tile(ks, (len(ms), 1))
    return M, K


# -- Newton -----------------------------------------------------------------

def _newton_batch(model, m, k, inp, E0):
    """Vectorised Newton; returns ``(E, |F|, iters, reason)`` with reason ``''`` on success."""
    n = len(m)
    E = np.array(E0, dtype=complex)
    iters = np.zeros(n, dtype=int)
    res = np.full(n, np.inf)
    reason = np.array([""] * n, dtype=object)
    active = np.ones(n, dtype=bool)
    for it in range(inp.max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        inside = model.in_validity_region(E[idx])
        for i in idx[~inside]:
            reason[i] = "root escaped the validity region"
            active[i] = False
        idx = idx[inside]
        if idx.size == 0:
            break
        F, dF = bs_residual(model, E[idx], m[idx], k[idx], inp.h, check=False)
        res[idx] = np.abs(F)
        done = res[idx] <= inp.newton_tol
        active[idx[done]] = False
        idx, F, dF = idx[~done], F[~done], dF[~done]
        flat = np.abs(dF) < 1e-12
        for i in idx[flat]:
            reason[i] = "degenerate Jacobian"
            active[i] = False
        idx, F, dF = idx[~flat], F[~flat], dF[~flat]
        if it == inp.max_iter:
            for i in idx:
                reason[i] = f"no convergence after {inp.max_iter} iterations"
            active[idx] = False
            break
        damp = 0.5 if it < 2 else 1.0
        E[idx] = E[idx] - damp * F / dF
        iters[idx] += 1
    return E, res, iters, reason


def _collect(m, k, E, res, iters, reason):
    ok, bad = [], []
    for i in range(len(m)):
        key_k = tuple(int(v) for v in k[i])
        if reason[i]:
            bad.append((int(m[i]), key_k, reason[i]))
        elif E[i].imag > DECAY_TOL:
            bad.append((int(m[i]), key_k, "growth side (Im E > 0)"))
        else:
            ok.append(Resonance(int(m[i]), key_k, complex(E[i]), float(res[i]), int(iters[i])))
    return ok, bad


def solve_resonance(model, m, k, inp):
    """Solve the quantisation condition for one ``(m, k)``.

    Raises
    ------
    QuantizationError
        Divergence, a root leaving the validity region, a degenerate
        Jacobian, or a root on the growth side.
    """
    mm = np.array([int(m)])
    kk = np.array([list(k)], dtype=int)
    if kk.shape[1] != model.d:
        raise ValueError(f"k must have {model.d} entries")
    E0 = seed_energies(model, mm, kk, inp.h)
    if not model.in_validity_region(E0)[0]:
        raise QuantizationError(f"seed for (m={m}, k={tuple(k)}) lies outside the validity region")
    ok, bad = _collect(mm, kk, *_newton_batch(model, mm, kk, inp, E0))
    if bad:
        raise QuantizationError(f"(m={m}, k={tuple(k)}): {bad[0][2]}")
    return ok[0]


def enumerate_lattice(model, inp, threads=1, chunk=4096):
    """All resonances with ``|m - m_c| h <= eps0`` (seed in the window) and
    ``0 <= k_j <= h^(delta-1)``.

    Per-point failures are recorded in ``lattice.failures``; the call itself
    does not raise.  ``m_c`` is the longitudinal index of the window centre
    (zero for windows centred on ``E = 0`` of the model).
    """
    meta = {"window": [float(w) for w in model.window], "h": inp.h,
            "system": model.system_name, "d": model.d, "g": model.g,
            "m_center": center_index(model, inp.h) if inp.eps0 >= inp.h else None}
    if inp.eps0 < inp.h:
        return ResonanceLattice([], inp, meta)
    m, k = _index_grid(model, inp)
    E0 = seed_energies(model, m, k, inp.h)
    lo, hi = model.window
    keep = (E0.real >= lo) & (E0.real <= hi)
    m, k, E0 = m[keep], k[keep], E0[keep]

    parts = [slice(i, min(i + chunk, len(m))) for i in range(0, len(m), chunk)]

    def run(s):
        return _collect(m[s], k[s], *_newton_batch(model, m[s], k[s], inp, E0[s]))

    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, parts))
    else:
        results = [run(s) for s in parts]
    ok = [r for part in results for r in part[0]]
    bad = sorted((b for part in results for b in part[1]), key=lambda b: (b[0], b[1]))
    if bad:
        logger.info("%d of %d lattice points failed", len(bad), len(m))
    return ResonanceLattice(ok, inp, meta, bad)


# -- exact model lattice ----------------------------------------------------

def _model_entries(mu):
    entries = []
    for kind, val in model_blocks(mu):
        if kind == "hc":
            rep = complex(val.real, abs(val.imag))
            per = TWO_PI * rep
            entries.append(((KIND_RANK[kind], -round(per.real, 9), round(per.imag, 9)),
                            [rep, rep.conjugate()], [0, 0]))
        elif kind == "ee":
            theta = (TWO_PI * val.imag) % TWO_PI
            entries.append(((KIND_RANK[kind], 0.0, round(theta, 9)), [val],
                            [int(math.floor(val.imag + 1e-12))]))
        else:
            entries.append(((KIND_RANK[kind], -round(TWO_PI * val.real, 9), 0.0), [val], [0]))
    entries.sort(key=lambda e: e[0])
    return entries


def model_modes(mu):
    """Per-unit-time mode exponents of the model in the solver's canonical order.

    A loxodromic ``mu`` contributes ``mu`` (``Im > 0``) and its conjugate.
    Elliptic entries are ordered by their rotation angle per period.
    """
    return np.array([v for _, vals, _ in _model_entries(mu) for v in vals], dtype=complex)


def model_turns(mu):
    """Full turns ``floor(omega_j)`` per mode (zero for hyperbolic modes), canonical order."""
    return np.array([n for _, _, ns in _model_entries(mu) for n in ns], dtype=int)


def oracle_energy(mu, h, m, k):
    """``E = m h - i h sum_j (k_j + 1/2) mu_j`` with modes in canonical order."""
    modes = model_modes(mu)
    return m * h - 1j * h * complex(np.dot(np.asarray(k) + 0.5, modes))


def model_oracle(mu, inp, m_center=0):
    """Exact resonance lattice of the model on the windows of ``inp``.

    ``m`` ranges over ``|m - m_center| h <= eps0``; the solver's centre index
    is zero for windows centred on ``E = 0``.
    """
    modes = model_modes(mu)
    d = len(modes)
    meta = {"system": "model-oracle", "h": inp.h, "d": d, "mu": [str(complex(v)) for v in mu]}
    if inp.eps0 < inp.h:
        return ResonanceLattice([], inp, meta)
    out = []
    for m in range(m_center - inp.m_radius, m_center + inp.m_radius + 1):
        for k in itertools.product(range(inp.k_max + 1), repeat=d):
            E = m * inp.h - 1j * inp.h * complex(np.dot(np.array(k) + 0.5, modes))
            out.append(Resonance(m, tuple(k), E, 0.0, 0))
    return ResonanceLattice(out, inp, meta)


@dataclass
class Comparison:
    max_deviation: float
    deviations: Dict[tuple, float]
    flagged: List[tuple]
    tol: float

    @property
    def ok(self):
        return not self.flagged

    def to_dict(self):
        return {"max_deviation": self.max_deviation, "tol": self.tol,
                "count": len(self.deviations),
                "flagged": [list(k) for k in self.flagged]}


def cz_relabel(turns):
    """Key map from solver labels to model labels.

    The solver reduces each elliptic angle to ``(0, 2 pi)`` and restores the
    ``n_j`` full turns through the index ``g = sum n_j``.  The two labellings
    of the same energy then relate by ``m -> m - sum n_j (k_j + 1)``.
    ``turns`` is the per-mode vector ``n`` (or a single integer for ``d = 1``).
    """
    n = np.atleast_1d(np.asarray(turns, dtype=int))

    def relabel(key):
        m, k = key[0], np.asarray(key[1:])
        return (int(m - n @ (k + 1)),) + tuple(int(v) for v in k)
    return relabel


def compare(lattice, oracle, tol=1e-10, relabel: Optional[Callable] = None):
    """Per-key ``|E_solver - E_oracle|`` and the maximum.

    Raises
    ------
    LatticeMismatch
        If the key sets differ (after ``relabel``, solver keys must all be
        present in the oracle; without it the sets must be equal).
    """
    ref = oracle.by_key()
    keys = [r.key for r in lattice.resonances]
    mapped = [relabel(key) if relabel else key for key in keys]
    missing = [k for k, mk in zip(keys, mapped) if mk not in ref]
    if missing:
        raise LatticeMismatch(f"{len(missing)} solver keys missing from the oracle, "
                              f"first {missing[0]}")
    if relabel is None and len(ref) != len(keys):
        extra = sorted(set(ref) - set(keys))
        raise LatticeMismatch(f"{len(extra)} oracle keys missing from the lattice, first {extra[0]}")
    devs = {}
    for r, mk in zip(lattice.resonances, mapped):
        devs[r.key] = float(abs(r.E - ref[mk].E))
    worst = max(devs.values(), default=0.0)
    flagged = sorted(k for k, v in devs.items() if v > tol)
    return Comparison(worst, devs, flagged, tol)
