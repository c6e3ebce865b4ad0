"""Periodic orbits by Newton shooting on a Poincare section, and their continuation in energy."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
from numpy.polynomial import chebyshev
from scipy.linalg import null_space
from scipy.optimize import least_squares

from .dynamics import HamiltonianSystem, PhasePoint, Trajectory, integrate
from .errors import ContinuationError, IntegrationError, ReturnMapError, ShootingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SectionSpec:
    """Hyperplane ``<normal, wrap(z - base)> = 0`` crossed in the direction of ``normal``."""

    base: np.ndarray
    normal: np.ndarray
    energy_slice: bool = True

    def value(self, system, z):
        return float(self.normal @ system.wrap(z - self.base))


def make_section(system, base, energy_slice=True):
    z = base.as_array() if isinstance(base, PhasePoint) else np.asarray(base, float)
    f = system.vector_field(z)
    nrm = np.linalg.norm(f)
    if nrm == 0.0:
        raise ReturnMapError("flow vanishes at the section base point")
    return SectionSpec(base=z.copy(), normal=f / nrm, energy_slice=energy_slice)


class ReturnResult(NamedTuple):
    point: PhasePoint
    time: float
    jacobian: np.ndarray


def poincare_return(system, section, p, tol=1e-12, t_min=1e-2, t_max=100.0):
    """First return of ``p`` to ``section`` after ``t_min``.

    The crossing is located by root finding on the dense output.  The returned
    jacobian is the flow jacobian at the crossing followed by the projection
    along the flow back onto the hyperplane.
    """
    z0 = p.as_array() if isinstance(p, PhasePoint) else np.asarray(p, float)
    normal = section.normal
    if abs(normal @ system.vector_field(section.base)) <= 1e-10 * np.linalg.norm(normal):
        raise ReturnMapError("section is not transverse to the flow at its base point")
    if abs(section.value(system, z0)) > 1e-8 * (1 + np.max(np.abs(z0))):
        raise ReturnMapError("starting point does not lie on the section")

    head = integrate(system, z0, t_min, tol=tol)

    def crossing(_t, s):
        return section.value(system, s[:system.dim])

    crossing.terminal = True
    crossing.direction = 1.0
    _, sol = integrate(system, head.end, t_max, tol=tol, Y0=head.Y[-1],
                       events=[crossing], t0=t_min)
    if not len(sol.t_events[0]):
        raise ReturnMapError(f"no return to the section within t_max={t_max:g}")
    d = system.dim
    t_ret = float(sol.t_events[0][0])
    s_ret = sol.y_events[0][0]
    z_ret, Y_ret = s_ret[:d], s_ret[d:].reshape(d, d)
    f_ret = system.vector_field(z_ret)
    rate = normal @ f_ret
    if abs(rate) < 1e-10:
        raise ReturnMapError("tangential crossing of the section")
    proj = np.eye(d) - np.outer(f_ret, normal) / rate
    return ReturnResult(PhasePoint.from_array(z_ret), t_ret, proj @ Y_ret)


@dataclass(frozen=True)
class PeriodicOrbit:
    system: HamiltonianSystem
    E: float
    T: float
    start: PhasePoint
    trajectory: Trajectory
    section: SectionSpec
    residual: float = 0.0
    iterations: int = 0
    # sign of det(dP - I) on the energy slice, used to detect bifurcations
    det_sign: float = 0.0

    def closure(self):
        z0 = self.start.as_array()
        return float(np.max(np.abs(self.system.wrap(self.trajectory.end - z0))))


def _project_energy(system, z, E, normal, max_iter=30):
    for _ in range(max_iter):
        err = system.eval0(z) - E
        if abs(err) <= 1e-14 * (1 + abs(E)):
            return z
        g = system.grad0(z)
        g = g - (g @ normal) * normal
        slope = g @ g
        if slope == 0.0:
            break
        z = z - err / slope * g
    if abs(system.eval0(z) - E) > 1e-11 * (1 + abs(E)):
        raise ShootingError("could not project the iterate onto the energy shell")
    return z


def _period_estimate(system, section, z, t_min, t_max, tol):
    try:
        return poincare_return(system, section, z, tol=tol, t_min=t_min, t_max=t_max).time
    except ReturnMapError as exc:
        # strongly unstable guesses may never come back; fall back on the
        # fastest angular coordinate
        f = system.vector_field(z)
        rates = [(abs(f[i]), p) for i, p in enumerate(system.angle_periods) if p]
        rates = [(r, p) for r, p in rates if r > 0]
        if not rates:
            raise ShootingError(f"no period estimate for the guess: {exc}") from exc
        rate, period = max(rates)
        return period / rate


def _trust_region(assemble, x0, max_nfev):
    cache = {}

    def fun(x):
        try:
            r, j = assemble(x)
        except (ReturnMapError, IntegrationError):
            r, j = np.full(cache["m"], 1e6), cache["j"]
        cache.update(x=x.copy(), j=j, m=r.size)
        return r

    def jac(x):
        if not np.array_equal(cache.get("x"), x):
            fun(x)
        return cache["j"]

    fun(x0)
    # keep the period near its current estimate (it may not flip sign)
    lo = np.full(x0.size, -np.inf)
    hi = np.full(x0.size, np.inf)
    lo[-1], hi[-1] = 1e-3 * x0[-1], 2.0 * x0[-1]
    sol = least_squares(fun, x0, jac=jac, bounds=(lo, hi), method="trf", xtol=1e-15,
                        ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    return sol.x


def find_periodic_orbit(system, guess, E, tol=1e-11, int_tol=1e-12, section=None,
                        t_min=1e-2, t_max=100.0, max_iter=50, period_guess=None,
                        segments=8):
    """Locate the periodic orbit of energy ``E`` through the section at ``guess``.

    The closing condition is solved by Gauss-Newton multiple shooting: the
    period is cut into ``segments`` pieces whose end points are unknowns, the
    first point is held on the section and on ``H_0 = E``.  Segment starts are
    seeded by integrating the guess forward for the first half period and
    backward for the second, which keeps strongly unstable orbits in reach.

    Raises
    ------
    ShootingError
        Divergence after ``max_iter`` iterations, or a singular Newton system
        (the linearised return map has eigenvalue 1).
    """
    z = guess.as_array() if isinstance(guess, PhasePoint) else np.asarray(guess, float)
    if abs(system.eval0(z) - E) > 0.1:
        raise ShootingError(f"guess energy {system.eval0(z):.6g} is too far from E={E:.6g}")
    if section is None:
        section = make_section(system, z)
    normal = section.normal
    z = z - section.value(system, z) * normal
    z = _project_energy(system, z, E, normal)
    T = period_guess or _period_estimate(system, section, z, t_min, t_max, int_tol)

    d, K = system.dim, int(segments)
    pts = [z]
    for i in range(1, K):
        t = T * i / K
        back = t > T / 2
        tr = integrate(system, z, t - T if back else t, tol=int_tol)
        pts.append(tr.end)
    x = np.concatenate(pts + [np.array([T])])
    seed = x.copy()

    def assemble(x):
        zs = x[:-1].reshape(K, d)
        T = x[-1]
        res = np.empty(K * d + 2)
        jac = np.zeros((K * d + 2, K * d + 1))
        for i in range(K):
            tr = integrate(system, zs[i], T / K, tol=int_tol)
            rows = slice(i * d, (i + 1) * d)
            res[rows] = system.wrap(tr.end - zs[(i + 1) % K])
            jac[rows, i * d:(i + 1) * d] = tr.Y[-1]
            j = (i + 1) % K
            jac[rows, j * d:(j + 1) * d] -= np.eye(d)
            jac[rows, -1] = system.vector_field(tr.end) / K
        res[-2] = section.value(system, zs[0])
        jac[-2, :d] = normal
        res[-1] = system.eval0(zs[0]) - E
        jac[-1, :d] = system.grad0(zs[0])
        return res, jac

    res, jac = assemble(x)
    for it in range(max_iter + 1):
        nrm = float(np.max(np.abs(res)))
        logger.debug("shooting E=%.12g it=%d residual=%.3e", E, it, nrm)
        if nrm <= tol:
            break
        if it == max_iter:
            raise ShootingError(f"Newton did not converge in {max_iter} iterations "
                                f"(residual {nrm:.3e})")
        u, sv, vt = np.linalg.svd(jac, full_matrices=False)
        if sv[-1] < 1e-10 * sv[0]:
            raise ShootingError("singular Newton system: linearised return map has eigenvalue 1")
        dx = -(vt.T @ ((u.T @ res) / sv))
        # backtrack on the residual norm; full steps near the solution
        lam = 1.0
        while True:
            trial = x + lam * dx
            if trial[-1] > 0:
                try:
                    r_new, j_new = assemble(trial)
                except (ReturnMapError, IntegrationError):
                    r_new = None
                if r_new is not None and np.max(np.abs(r_new)) < (1 - 1e-4 * lam) * nrm:
                    break
            lam *= 0.5
            if lam < 1e-4:
                break
        if lam < 1e-4:
            # far from the orbit the Gauss-Newton direction stalls; a
            # trust-region solve gets back into the quadratic regime.
            # Restart from the seed, Newton may have wandered off
            trial = _trust_region(assemble, seed, max_nfev=4 * max_iter)
            r_new, j_new = assemble(trial)
            if not np.max(np.abs(r_new)) < nrm:
                raise ShootingError("Newton line search failed to reduce the residual")
        x, res, jac = trial, r_new, j_new

    z, T = x[:d], float(x[-1])
    # the shooting period may be a multiple of the first return time
    first = poincare_return(system, section, z, tol=int_tol, t_min=min(t_min, T / 10),
                            t_max=1.5 * T)
    if first.time < T * (1 - 1e-8):
        gap = float(np.max(np.abs(system.wrap(first.point.as_array() - z))))
        if gap > 1e-8 * (1 + np.max(np.abs(z))):
            raise ShootingError("converged orbit crosses the section before closing")
        T = first.time
    traj = integrate(system, z, T, tol=int_tol)
    W = null_space(np.vstack([normal, system.grad0(section.base)]))
    f_end = system.vector_field(traj.end)
    dP = (np.eye(d) - np.outer(f_end, normal) / (normal @ f_end)) @ traj.Y[-1]
    det_sign = float(np.sign(np.linalg.det(W.T @ (dP - np.eye(d)) @ W)))
    orbit = PeriodicOrbit(system=system, E=float(E), T=T, start=PhasePoint.from_array(z),
                          trajectory=traj, section=section, residual=nrm, iterations=it,
                          det_sign=det_sign)
    closure = orbit.closure()
    if closure > 1e-9 * (1 + np.max(np.abs(z))):
        raise ShootingError(f"orbit closure {closure:.3e} fails after convergence")
    return orbit


@dataclass(frozen=True)
class OrbitFamily:
    orbits: List[PeriodicOrbit]
    energies: np.ndarray
    window: tuple = field(default=(0.0, 0.0))

    @property
    def periods(self):
        return np.array([o.T for o in self.orbits])

    def max_step(self):
        if len(self.orbits) < 2:
            return 0.0
        starts = [o.start.as_array() for o in self.orbits]
        sys_ = self.orbits[0].system
        return float(max(np.max(np.abs(sys_.wrap(b - a))) for a, b in zip(starts, starts[1:])))


def chebyshev_lobatto(e_min, e_max, count):
    """Chebyshev extreme points on ``[e_min, e_max]`` in increasing order.

    These nest under ``count -> 2*count - 1``.
    """
    x = chebyshev.chebpts2(count)
    return 0.5 * (e_min + e_max) + 0.5 * (e_max - e_min) * x


def continue_family(system, seed, E_range, node_count=16, tol=1e-10, int_tol=1e-12):
    """Continue ``seed`` to the Chebyshev nodes of ``E_range``.

    Nodes are visited outward from the seed energy, each warm-started from its
    already computed neighbour on the seed's section.
    """
    e_min, e_max = float(E_range[0]), float(E_range[1])
    if e_min == e_max:
        if not math.isclose(seed.E, e_min, abs_tol=1e-12):
            raise ValueError("degenerate energy range must equal the seed energy")
        return OrbitFamily([seed], np.array([seed.E]), (e_min, e_max))
    if not 8 <= node_count <= 64:
        raise ValueError("node_count must lie in [8, 64]")
    if not e_min <= seed.E <= e_max:
        raise ValueError("energy range must contain the seed energy")
    nodes = chebyshev_lobatto(e_min, e_max, node_count)
    t_min = seed.T / 10

    def sweep(energies):
        out, prev = [], seed
        for E in energies:
            try:
                # move the warm start onto the new energy shell first
                guess = _project_energy(system, prev.start.as_array(), E, seed.section.normal)
                orb = find_periodic_orbit(system, guess, E, tol=tol, int_tol=int_tol,
                                          section=seed.section, t_min=t_min,
                                          t_max=3 * prev.T, period_guess=prev.T)
            except ShootingError as exc:
                raise ContinuationError(f"continuation broke down at E={E:.12g}: {exc}",
                                        energy=float(E)) from exc
            if prev.det_sign and orb.det_sign and orb.det_sign != prev.det_sign:
                raise ContinuationError(
                    f"a Floquet multiplier crossed 1 between E={prev.E:.12g} and E={E:.12g}",
                    energy=float(E))
            out.append(orb)
            prev = orb
        return out

    up = sweep([E for E in nodes if E >= seed.E])
    down = sweep([E for E in nodes[::-1] if E < seed.E])
    orbits = sorted(up + down, key=lambda o: o.E)
    return OrbitFamily(orbits, np.array([o.E for o in orbits]), (e_min, e_max))
