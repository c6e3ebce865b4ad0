"""Hamiltonian systems and integration of the flow with its variational system.

Built-in systems are declared symbolically with sympy; gradients and Hessians
are obtained by exact differentiation and compiled with ``lambdify``.  User
systems supply their own analytic derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp

from .errors import IntegrationError, SingularityError, SystemSpecError
from .symplectic import standard_j, symplectic_defect

COULOMB_CUTOFF = 1e-8


@dataclass(frozen=True)
class PhasePoint:
    y: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        if y.shape != eta.shape:
            raise ValueError("position and momentum must have the same length")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(eta))):
            raise ValueError("phase point has non-finite entries")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def from_array(cls, z):
        z = np.asarray(z, dtype=float)
        n = z.shape[0] // 2
        return cls(z[:n], z[n:])

    def as_array(self):
        return np.concatenate([self.y, self.eta])


@dataclass(frozen=True)
class HamiltonianSystem:
    """A principal symbol ``H_0`` with analytic derivatives.

    ``angle_periods`` gives, per position coordinate, the period of an angular
    coordinate (``None`` for a coordinate on the real line).  ``guard`` is
    called on every right-hand-side evaluation and raises when the state
    enters a forbidden region.
    """

    name: str
    n: int
    eval0: Callable[[np.ndarray], float]
    grad0: Callable[[np.ndarray], np.ndarray]
    hess0: Callable[[np.ndarray], np.ndarray]
    eval1: Callable[[np.ndarray], float]
    params: Mapping[str, object] = field(default_factory=dict)
    angle_periods: tuple = ()
    guard: Optional[Callable[[np.ndarray], None]] = None

    @property
    def dim(self):
        return 2 * self.n

    def vector_field(self, z):
        g = self.grad0(z)
        n = self.n
        return np.concatenate([g[n:], -g[:n]])

    def wrap(self, dz):
        """Reduce angular components of a phase-space difference to (-P/2, P/2]."""
        dz = np.array(dz, dtype=float)
        for i, period in enumerate(self.angle_periods):
            if period:
                dz[..., i] = dz[..., i] - period * np.round(dz[..., i] / period)
        return dz


def _zero(_z):
    return 0.0


def _compile(name, ys, etas, H, params, angle_periods=(), guard=None, h1=None):
    vars_ = list(ys) + list(etas)
    grad = [sp.diff(H, v) for v in vars_]
    hess = [[sp.diff(g, v) for v in vars_] for g in grad]
    f0 = sp.lambdify([vars_], H, "numpy", cse=True)
    f1 = sp.lambdify([vars_], grad, "numpy", cse=True)
    f2 = sp.lambdify([vars_], hess, "numpy", cse=True)
    dim = len(vars_)

    def eval0(z):
        return float(f0(z))

    def grad0(z):
        return np.asarray(f1(z), dtype=float).reshape(dim)

    def hess0(z):
        return np.asarray(f2(z), dtype=float).reshape(dim, dim)

    if h1 is None:
        eval1 = _zero
    else:
        if isinstance(h1, str):
            try:
                h1 = sp.sympify(h1, locals={str(v): v for v in vars_})
            except (sp.SympifyError, SyntaxError) as exc:
                raise SystemSpecError(f"cannot parse h1 expression: {exc}") from exc
        unknown = h1.free_symbols - set(vars_)
        if unknown:
            raise SystemSpecError(f"h1 uses unknown symbols {sorted(map(str, unknown))}")
        g1 = sp.lambdify([vars_], h1, "numpy", cse=True)

        def eval1(z):
            return float(g1(z))

    periods = tuple(angle_periods) + (None,) * (len(ys) - len(angle_periods))
    return HamiltonianSystem(name=name, n=len(ys), eval0=eval0, grad0=grad0,
                             hess0=hess0, eval1=eval1, params=dict(params),
                             angle_periods=periods, guard=guard)


def parse_mu(mu):
    """Coerce a model exponent vector (numbers or strings like ``'0.5+0.2j'``)."""
    out = []
    for m in mu:
        if isinstance(m, str):
            m = complex(m.replace(" ", "").replace("i", "j"))
        out.append(complex(m))
    return tuple(out)


def model_blocks(mu):
    """Split the model exponent vector into typed blocks.

    Returns a list of ``(kind, value)`` with kind ``'hr'`` (real ``mu > 0``),
    ``'ee'`` (``mu = i*omega``, ``omega > 0``) or ``'hc'`` (``Re mu > 0`` and
    ``Im mu != 0``, realised on two degrees of freedom).
    """
    blocks = []
    for m in parse_mu(mu):
        if m.real < 0:
            raise SystemSpecError(f"model exponent {m} has negative real part")
        if m.imag == 0.0:
            if m.real == 0.0:
                raise SystemSpecError("model exponent 0 is degenerate")
            blocks.append(("hr", m))
        elif m.real == 0.0:
            if m.imag < 0:
                raise SystemSpecError("elliptic model exponents need omega > 0")
            blocks.append(("ee", m))
        else:
            blocks.append(("hc", m))
    if not blocks:
        raise SystemSpecError("model needs at least one exponent")
    return blocks


def _model(mu, h1=None):
    blocks = model_blocks(mu)
    d = sum(2 if k == "hc" else 1 for k, _ in blocks)
    t, tau = sp.symbols("t tau", real=True)
    xs = sp.symbols(f"x1:{d + 1}", real=True)
    xis = sp.symbols(f"xi1:{d + 1}", real=True)
    H = tau
    j = 0
    for kind, m in blocks:
        if kind == "hr":
            H += sp.Float(m.real) * xs[j] * xis[j]
            j += 1
        elif kind == "ee":
            H += sp.Float(m.imag) * (xs[j] ** 2 + xis[j] ** 2) / 2
            j += 1
        else:
            c, dd = sp.Float(m.real), sp.Float(m.imag)
            x1, x2, p1, p2 = xs[j], xs[j + 1], xis[j], xis[j + 1]
            # c Q' - d Q'' with the rotation generator Q'' = x1 p2 - x2 p1
            H += c * (x1 * p1 + x2 * p2) - dd * (x1 * p2 - x2 * p1)
            j += 2
    return _compile("model", (t,) + xs, (tau,) + xis, H,
                    {"mu": parse_mu(mu)}, angle_periods=(2 * math.pi,), h1=h1)


def _coulomb_guard(z):
    n = z.shape[0] // 2
    if np.linalg.norm(z[:n]) < COULOMB_CUTOFF:
        raise SingularityError("trajectory reached the Coulomb singularity")


def _coulomb_stark(a, n=2, h1=None):
    if not a > 0:
        raise SystemSpecError("coulomb_stark needs a > 0")
    if int(n) != n or n < 2:
        raise SystemSpecError("coulomb_stark needs integer n >= 2")
    n = int(n)
    ys = sp.symbols(f"y1:{n + 1}", real=True)
    etas = sp.symbols(f"eta1:{n + 1}", real=True)
    r = sp.sqrt(sum(v ** 2 for v in ys))
    H = sum(p ** 2 for p in etas) + 1 / r + sp.Float(a) * ys[0]
    return _compile("coulomb_stark", ys, etas, H, {"a": float(a), "n": n},
                    guard=_coulomb_guard, h1=h1)


def _hyperboloid(h1=None):
    # (cosh u cos phi, cosh u sin phi, sinh u) on x^2 + y^2 - z^2 = 1
    u, phi, pu, pphi = sp.symbols("u phi p_u p_phi", real=True)
    H = (pu ** 2 / sp.cosh(2 * u) + pphi ** 2 / sp.cosh(u) ** 2) / 2
    return _compile("hyperboloid_geodesic", (u, phi), (pu, pphi), H, {},
                    angle_periods=(None, 2 * math.pi), h1=h1)


def _revolution_4d(profile=(1.0, 0.5, 0.1), h1=None):
    """Hypersurface ``(rho cos phi, rho sin phi, u, v)`` of R^4 with
    ``rho(u, v) = c0 + a u^2 - b v^2``: the circle ``u = v = 0`` is a closed
    geodesic, unstable across ``u`` and elliptic across ``v``."""
    c0, a, b = (float(c) for c in profile)
    if not (c0 > 0 and a > 0 and b > 0):
        raise SystemSpecError("revolution_surface_4d needs c0, a, b > 0")
    u, v, phi, pu, pv, pphi = sp.symbols("u v phi p_u p_v p_phi", real=True)
    rho = c0 + a * u ** 2 - b * v ** 2
    ru, rv = sp.diff(rho, u), sp.diff(rho, v)
    G = sp.Matrix([[1 + ru ** 2, ru * rv], [ru * rv, 1 + rv ** 2]])
    Ginv = sp.simplify(G.inv())
    p = sp.Matrix([pu, pv])
    H = ((p.T * Ginv * p)[0, 0] + pphi ** 2 / rho ** 2) / 2
    return _compile("revolution_surface_4d", (u, v, phi), (pu, pv, pphi), H,
                    {"profile": (c0, a, b)}, angle_periods=(None, None, 2 * math.pi), h1=h1)


def _user(table, n, name="user", angle_periods=()):
    missing = [k for k in ("eval0", "grad0", "hess0") if not callable(table.get(k))]
    if missing:
        raise SystemSpecError(f"user system is missing callbacks: {', '.join(missing)}")
    if int(n) != n or n < 2:
        raise SystemSpecError("user system needs n >= 2 degrees of freedom")
    n = int(n)
    periods = tuple(angle_periods) + (None,) * (n - len(angle_periods))
    return HamiltonianSystem(
        name=name, n=n,
        eval0=table["eval0"],
        grad0=lambda z, f=table["grad0"]: np.asarray(f(z), dtype=float).reshape(2 * n),
        hess0=lambda z, f=table["hess0"]: np.asarray(f(z), dtype=float).reshape(2 * n, 2 * n),
        eval1=table.get("eval1") or _zero,
        params=dict(table.get("params", {})),
        angle_periods=periods, guard=table.get("guard"))


SYSTEMS = ("model", "coulomb_stark", "hyperboloid_geodesic",
           "revolution_surface_4d", "user")


def build_system(name, **params):
    """Construct a named Hamiltonian system.

    Parameters
    ----------
    name : str
        One of ``model`` (``mu=[...]``), ``coulomb_stark`` (``a``, ``n``),
        ``hyperboloid_geodesic``, ``revolution_surface_4d`` (``profile``) or
        ``user`` (``callbacks`` dict with ``eval0``, ``grad0``, ``hess0`` and
        optionally ``eval1``, plus ``n``).  Built-in systems accept ``h1``, a
        sympy expression in the coordinate names for the sub-principal symbol.
    """
    h1 = params.get("h1")
    if name == "model":
        if "mu" not in params:
            raise SystemSpecError("model needs an exponent vector mu")
        return _model(params["mu"], h1)
    if name == "coulomb_stark":
        return _coulomb_stark(params.get("a", 1.0), params.get("n", 2), h1)
    if name == "hyperboloid_geodesic":
        return _hyperboloid(h1)
    if name == "revolution_surface_4d":
        return _revolution_4d(params.get("profile", (1.0, 0.5, 0.1)), h1)
    if name == "user":
        return _user(params.get("callbacks", {}), params.get("n", 0),
                     angle_periods=params.get("angle_periods", ()))
    raise SystemSpecError(f"unknown system {name!r}; expected one of {SYSTEMS}")


def default_guess(system, energy):
    """A starting point on (or near) the natural periodic orbit of a built-in system."""
    n = system.n
    z = np.zeros(2 * n)
    if system.name == "model":
        z[n] = energy
    elif system.name == "hyperboloid_geodesic":
        z[3] = math.sqrt(2 * energy)
    elif system.name == "revolution_surface_4d":
        c0 = system.params["profile"][0]
        z[5] = c0 * math.sqrt(2 * energy)
    elif system.name == "coulomb_stark":
        # barrier-top normal mode: oscillation along y_1 through the saddle
        a = system.params["a"]
        excess = energy - 2 * math.sqrt(a)
        if excess <= 0:
            raise SystemSpecError(
                f"coulomb_stark orbit needs E > 2*sqrt(a) = {2 * math.sqrt(a):.6g}")
        z[0] = 1 / math.sqrt(a)
        z[n] = math.sqrt(excess)
    else:
        raise SystemSpecError(f"no default guess for system {system.name!r}")
    return PhasePoint.from_array(z)


def check_derivatives(system, points, rel=1e-6, rel_hess=1e-5):
    """Compare analytic derivatives with centred finite differences.

    Returns ``(max_grad_err, max_hess_err, max_asym)``; the errors are
    relative, ``|analytic - fd| / (1 + |analytic|)`` in the max norm.
    """
    worst_g = worst_h = worst_s = 0.0
    for z in np.atleast_2d(points):
        g = system.grad0(z)
        Hm = system.hess0(z)
        fd_g = np.empty_like(g)
        fd_h = np.empty_like(Hm)
        for i in range(z.shape[0]):
            step = 1e-5 * (1 + abs(z[i]))
            e = np.zeros_like(z)
            e[i] = step
            fd_g[i] = (system.eval0(z + e) - system.eval0(z - e)) / (2 * step)
            fd_h[:, i] = (system.grad0(z + e) - system.grad0(z - e)) / (2 * step)
        worst_g = max(worst_g, np.max(np.abs(g - fd_g)) / (1 + np.max(np.abs(g))))
        worst_h = max(worst_h, np.max(np.abs(Hm - fd_h)) / (1 + np.max(np.abs(Hm))))
        worst_s = max(worst_s, np.max(np.abs(Hm - Hm.T)))
    return worst_g, worst_h, worst_s


@dataclass(frozen=True)
class Trajectory:
    """Solution of the coupled flow and variational system.

    ``t``, ``z`` and ``Y`` hold the integrator's step points; ``dense`` is the
    continuous extension over ``[t0, t1]`` of the packed state ``(z, vec Y)``.
    """

    system: HamiltonianSystem
    t: np.ndarray
    z: np.ndarray
    Y: np.ndarray
    dense: Callable
    energy: float
    energy_drift: float

    @property
    def t0(self):
        return float(self.t[0])

    @property
    def t1(self):
        return float(self.t[-1])

    @property
    def samples(self):
        return [(float(t), PhasePoint.from_array(z)) for t, z in zip(self.t, self.z)]

    @property
    def tangent(self):
        return list(self.Y)

    def state(self, t):
        d = self.system.dim
        return self.dense(t)[:d]

    def tangent_at(self, t):
        d = self.system.dim
        return self.dense(t)[d:].reshape(d, d)

    @property
    def end(self):
        return self.z[-1]


def _rhs(system):
    d = system.dim
    J = standard_j(system.n)
    guard = system.guard

    def f(_t, s):
        z = s[:d]
        if guard is not None:
            guard(z)
        g = system.grad0(z)
        Hm = system.hess0(z)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(Hm))):
            raise IntegrationError("non-finite derivative along the trajectory")
        Y = s[d:].reshape(d, d)
        return np.concatenate([J @ g, (J @ Hm @ Y).ravel()])

    return f


def integrate(system, start, t1, tol=1e-10, events=None, Y0=None, t0=0.0):
    """Integrate ``dz/dt = J grad H_0`` together with ``dY/dt = J H_0'' Y``.

    Uses the adaptive DOP853 pair with ``rtol = tol`` and ``atol = tol/100``.
    ``Y0`` defaults to the identity.  ``events`` are passed to
    :func:`scipy.integrate.solve_ivp`; the raw solver result is attached as
    the second return value when events are requested.

    Raises
    ------
    IntegrationError
        On step-size failure, non-finite derivatives, or an energy drift above
        ``10 * tol * (1 + |E|)``.
    SingularityError
        When the system guard trips (e.g. the Coulomb centre).
    """
    if not 1e-14 <= tol <= 1e-4:
        raise ValueError("tol must lie in [1e-14, 1e-4]")
    z0 = start.as_array() if isinstance(start, PhasePoint) else np.asarray(start, float)
    d = system.dim
    if z0.shape != (d,):
        raise ValueError(f"start point has dimension {z0.shape}, expected {d}")
    Y0 = np.eye(d) if Y0 is None else np.asarray(Y0, float)
    s0 = np.concatenate([z0, Y0.ravel()])
    energy = system.eval0(z0)
    try:
        sol = solve_ivp(_rhs(system), (t0, t1), s0, method="DOP853",
                        rtol=tol, atol=tol * 1e-2, dense_output=True, events=events)
    except (FloatingPointError, ZeroDivisionError, OverflowError) as exc:
        raise IntegrationError(str(exc)) from exc
    if sol.status < 0:
        raise IntegrationError(f"integrator failed: {sol.message}")
    zs = sol.y[:d].T
    Ys = sol.y[d:].T.reshape(-1, d, d)
    drift = max(abs(system.eval0(z) - energy) for z in zs)
    if drift > 10 * tol * (1 + abs(energy)):
        raise IntegrationError(f"energy drift {drift:.3e} exceeds bound at tol={tol:g}")
    traj = Trajectory(system=system, t=sol.t.copy(), z=zs, Y=Ys, dense=sol.sol,
                      energy=energy, energy_drift=drift)
    if events is not None:
        return traj, sol
    return traj


def max_symplectic_defect(traj):
    return max(symplectic_defect(Y) for Y in traj.Y)
