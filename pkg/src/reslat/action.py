"""Classical action, period, sub-principal integral and Floquet exponents as
polynomial fits in the energy, evaluable at complex energies."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.optimize import linear_sum_assignment

from .errors import ActionModelError, FloquetError, NodeHypothesisError, ValidityError
from .floquet import check_hypotheses, conley_zehnder, monodromy

logger = logging.getLogger(__name__)

REQUIRED_AT_NODES = ("nondegenerate", "no_nonpositive_real", "distinct_exponents",
                     "nonres17", "nonres18")
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _loop_quadrature(traj, integrand):
    """Composite Gauss-Legendre quadrature of ``integrand(z)`` over the integrator steps."""
    t = traj.t
    total = 0.0
    for a, b in zip(t[:-1], t[1:]):
        if b <= a:
            continue
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        ts = mid + half * _GL_X
        vals = np.array([integrand(traj.state(s)) for s in ts])
        if not np.all(np.isfinite(vals)):
            raise ActionModelError("non-finite integrand in the loop quadrature")
        total += half * float(_GL_W @ vals)
    return total


def action_integral(orbit):
    """Loop integral ``S_0 = oint eta . dy`` along one period of the orbit.

    Evaluated as ``int_0^T eta . dH/deta dt`` so that angle coordinates need
    no unwrapping.
    """
    system = orbit.system
    n = system.n

    def integrand(z):
        return float(z[n:] @ system.grad0(z)[n:])

    return _loop_quadrature(orbit.trajectory, integrand)


def subprincipal_integral(orbit, system=None):
    """``I_1 = int_0^T H_1(z(t)) dt`` along the orbit."""
    system = orbit.system if system is None else system
    return _loop_quadrature(orbit.trajectory, lambda z: float(system.eval1(z)))


# -- the model ------------------------------------------------------------

@dataclass
class ActionModel:
    """Chebyshev fits on ``window`` of ``S0``, ``T``, ``I1`` and the exponents.

    ``fits`` maps ``'S0'``, ``'T'``, ``'I1'``, ``'ReM<j>'``, ``'ImM<j>'`` to
    Chebyshev coefficients in the variable mapped from ``window`` to
    ``[-1, 1]``.  ``kinds[j]`` is the kind of exponent ``j``.
    """

    window: tuple
    fits: Dict[str, np.ndarray]
    g: int
    kinds: List[str]
    rho_c: float = 0.5
    nodes: Optional[np.ndarray] = None
    system_name: str = ""
    meta: dict = field(default_factory=dict)

    def series(self, key):
        return Chebyshev(self.fits[key], domain=list(self.window))

    @property
    def center(self):
        return 0.5 * (self.window[0] + self.window[1])

    @property
    def half_width(self):
        return 0.5 * (self.window[1] - self.window[0])

    @property
    def mode_kinds(self):
        out = []
        for k in self.kinds:
            out.extend([k, k] if k == "hc" else [k])
        return out

    @property
    def d(self):
        return len(self.mode_kinds)

    def in_validity_region(self, E):
        E = np.asarray(E, dtype=complex)
        slack = 1e-12 * max(1.0, self.half_width)
        return ((E.real >= self.window[0] - slack) & (E.real <= self.window[1] + slack)
                & (np.abs(E.imag) <= self.rho_c * self.half_width + slack))

    def to_dict(self):
        return {
            "window": [float(self.window[0]), float(self.window[1])],
            "fits": {k: [float(c) for c in v] for k, v in sorted(self.fits.items())},
            "g": int(self.g),
            "kinds": list(self.kinds),
            "rho_c": float(self.rho_c),
            "nodes": None if self.nodes is None else [float(e) for e in self.nodes],
            "system": self.system_name,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(window=tuple(data["window"]),
                   fits={k: np.asarray(v, dtype=float) for k, v in data["fits"].items()},
                   g=int(data["g"]), kinds=list(data["kinds"]), rho_c=float(data["rho_c"]),
                   nodes=None if data.get("nodes") is None else np.asarray(data["nodes"]),
                   system_name=data.get("system", ""), meta=dict(data.get("meta", {})))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _track_branches(per_node):
    """Reorder the exponents at each node to follow the branches of the first node."""
    ref = per_node[0]
    out = [ref]
    for i, cur in enumerate(per_node[1:], start=1):
        if len(cur) != len(ref):
            raise ActionModelError(f"exponent count changes at node {i}")
        vals = np.array([e.M for e in cur])
        gaps = np.abs(vals[:, None] - vals[None, :]) + np.eye(len(vals)) * 1e300
        if len(vals) > 1 and gaps.min() < 1e-6:
            raise ActionModelError(f"exponent branches collide at node {i}")
        prev = np.array([e.M for e in out[-1]])
        cost = np.abs(prev[:, None] - vals[None, :])
        _, cols = linear_sum_assignment(cost)
        ordered = [cur[j] for j in cols]
        for a, b in zip(out[-1], ordered):
            if a.kind != b.kind:
                raise ActionModelError(
                    f"exponent kind changes from {a.kind} to {b.kind} inside the window "
                    f"(node {i}); the window contains a bifurcation")
        out.append(ordered)
    return out


def _fit(window, E, values, key, rel=1e-9):
    series = Chebyshev.fit(E, values, deg=len(E) - 1, domain=list(window))
    resid = np.max(np.abs(series(E) - values)) if len(E) else 0.0
    scale = max(1.0, float(np.max(np.abs(values))))
    if resid > rel * scale:
        raise ActionModelError(f"fit residual {resid:.3e} for {key} exceeds bound")
    return series.coef


def build_action_model(family, system=None, K=10, tol_res=1e-8, tol_ell=1e-6,
                       rho_c=0.5, cz_grid=64, required=REQUIRED_AT_NODES):
    """Fit ``S0, T, I1`` and the exponent branches over the family's window.

    Raises
    ------
    ActionModelError
        Too few nodes, a hypothesis failing at a node (named in the message),
        a change of exponent kind, a branch collision, a fit residual above
        ``1e-9`` relative, a Conley-Zehnder index varying across nodes, or
        ``dS0/dE`` departing from ``T`` by more than ``1e-6 max T``.
    """
    orbits = family.orbits
    if len(orbits) < 8:
        raise ActionModelError("an action model needs at least 8 family nodes")
    system = orbits[0].system if system is None else system
    window = tuple(float(w) for w in family.window)
    E = np.array([o.E for o in orbits])

    per_node, gs, S0, T, I1 = [], [], [], [], []
    for o in orbits:
        md = monodromy(o)
        rep = check_hypotheses(md, K=K, tol_res=tol_res, tol_ell=tol_ell)
        failed = rep.failures(required)
        if failed:
            raise NodeHypothesisError(
                f"hypotheses {', '.join(failed)} fail at node E={o.E:.12g}"
                + (f" ({rep.message})" if rep.message else ""))
        per_node.append(rep.exponents)
        try:
            gs.append(conley_zehnder(o, grid=cz_grid, tol_ell=tol_ell, md=md))
        except FloquetError as exc:
            raise ActionModelError(f"Conley-Zehnder index failed at E={o.E:.12g}: {exc}") from exc
        S0.append(action_integral(o))
        T.append(o.T)
        I1.append(subprincipal_integral(o, system))

    if len(set(gs)) != 1:
        raise ActionModelError(f"Conley-Zehnder index varies across the window: {sorted(set(gs))}")
    tracked = _track_branches(per_node)
    kinds = [e.kind for e in tracked[0]]

    fits = {
        "S0": _fit(window, E, np.array(S0), "S0"),
        "T": _fit(window, E, np.array(T), "T"),
        "I1": _fit(window, E, np.array(I1), "I1"),
    }
    for j, kind in enumerate(kinds):
        M = np.array([node[j].M for node in tracked])
        # elliptic exponents are purely imaginary, real-hyperbolic ones real
        re = np.zeros_like(M.real) if kind == "ee" else M.real
        im = np.zeros_like(M.imag) if kind == "hr" else M.imag
        fits[f"ReM{j}"] = _fit(window, E, re, f"ReM{j}")
        fits[f"ImM{j}"] = _fit(window, E, im, f"ImM{j}")

    model = ActionModel(window=window, fits=fits, g=gs[0], kinds=kinds, rho_c=rho_c,
                        nodes=E, system_name=system.name,
                        meta={"K": K, "tol_res": tol_res, "tol_ell": tol_ell,
                              "node_count": len(E)})
    err = action_identity_defect(model)
    Tmax = float(np.max(np.abs(T)))
    if err > 1e-6 * Tmax:
        raise ActionModelError(f"dS0/dE departs from T by {err:.3e}")
    return model


def action_identity_defect(model, samples=50):
    """``max |S0'(E) - T(E)|`` over ``samples`` points of the window."""
    E = np.linspace(model.window[0], model.window[1], samples)
    return float(np.max(np.abs(model.series("S0").deriv()(E) - model.series("T")(E))))


# -- evaluation -------------------------------------------------------------

class ActionValues(NamedTuple):
    """Values of the fitted quantities at ``E`` (scalars or arrays).

    ``M`` and ``dM`` carry one entry per mode along the first axis: a
    loxodromic exponent contributes ``M`` and its reflection ``conj-branch``.
    """

    S0: complex
    S1: complex
    T: complex
    M: np.ndarray
    dS0: complex
    dS1: complex
    dM: np.ndarray


def eval_action(model, E, check=True):
    """Evaluate the fits at (possibly complex, possibly array) energies.

    Raises
    ------
    ValidityError
        If any ``E`` lies outside ``Re E in window`` and
        ``|Im E| <= rho_c * half_width``.
    """
    scalar = np.ndim(E) == 0
    E = np.asarray(E, dtype=complex)
    if check and not np.all(model.in_validity_region(E)):
        raise ValidityError(f"energy outside the validity region of the action model "
                            f"(window {model.window}, rho_c {model.rho_c})")
    S0s, Ts, I1s = model.series("S0"), model.series("T"), model.series("I1")
    S0 = S0s(E)
    dS0 = S0s.deriv()(E)
    T = Ts(E)
    S1 = -I1s(E) / (2 * math.pi) + model.g / 2
    dS1 = -I1s.deriv()(E) / (2 * math.pi)
    Ms, dMs = [], []
    for j, kind in enumerate(model.kinds):
        re, im = model.series(f"ReM{j}"), model.series(f"ImM{j}")
        M = re(E) + 1j * im(E)
        dM = re.deriv()(E) + 1j * im.deriv()(E)
        Ms.append(M)
        dMs.append(dM)
        if kind == "hc":
            # continuation of the conjugate branch, analytic in E
            Ms.append(re(E) - 1j * im(E))
            dMs.append(re.deriv()(E) - 1j * im.deriv()(E))
    M = np.array(Ms, dtype=complex)
    dM = np.array(dMs, dtype=complex)
    if scalar:
        return ActionValues(complex(S0), complex(S1), complex(T), M, complex(dS0),
                            complex(dS1), dM)
    return ActionValues(S0, S1, T, M, dS0, dS1, dM)
