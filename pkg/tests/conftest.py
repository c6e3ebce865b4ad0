import functools
import math

import numpy as np
import pytest
from numpy.polynomial import Chebyshev

from reslat.action import ActionModel, build_action_model
from reslat.dynamics import build_system, default_guess
from reslat.orbits import continue_family, find_periodic_orbit

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")


@pytest.fixture
def record():
    def _record(n, ok, detail):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok
    return _record


@functools.lru_cache(maxsize=None)
def orbit_of(name, energy, params=()):
    system = build_system(name, **dict(params))
    return find_periodic_orbit(system, default_guess(system, energy), energy)


@functools.lru_cache(maxsize=None)
def family_of(name, energy, window, node_count=16, params=()):
    seed = orbit_of(name, energy, params)
    return continue_family(seed.system, seed, window, node_count=node_count)


@functools.lru_cache(maxsize=None)
def model_action(mu, K=10, window=(-0.6, 0.6), node_count=16):
    fam = family_of("model", 0.0, window, node_count, (("mu", mu),))
    return build_action_model(fam, K=K)


def synthetic_model(modes_per_period, kinds, window=(-0.6, 0.6), g=0, S0=None, T=None,
                    I1=None, rho_c=0.5):
    """An ActionModel with closed-form fits (no orbit computation)."""
    nodes = 0.5 * (window[0] + window[1]) + 0.5 * (window[1] - window[0]) * np.cos(
        np.linspace(math.pi, 0, 16))
    S0 = S0 or (lambda E: 2 * math.pi * E)
    T = T or (lambda E: 2 * math.pi + 0 * E)
    I1 = I1 or (lambda E: 0 * E)

    def fit(f):
        return Chebyshev.fit(nodes, f(nodes), 15, domain=list(window)).coef

    fits = {"S0": fit(S0), "T": fit(T), "I1": fit(I1)}
    for j, M in enumerate(modes_per_period):
        fits[f"ReM{j}"] = fit(lambda E: M.real + 0 * E)
        fits[f"ImM{j}"] = fit(lambda E: M.imag + 0 * E)
    return ActionModel(window=tuple(window), fits=fits, g=g, kinds=list(kinds), rho_c=rho_c,
                       nodes=nodes, system_name="synthetic")
