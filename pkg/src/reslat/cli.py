"""Command-line front end.

Exit status: 0 success, 1 configuration error (nothing written), 2 a required
hypothesis fails, 3 numerical failure.  Every run that gets past
configuration writes ``report.json`` with a machine-readable ``reason``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import emit
from .action import (action_identity_defect, action_integral, build_action_model,
                     subprincipal_integral)
from .config import load_config
from .dynamics import PhasePoint, default_guess, parse_mu
from .errors import ConfigError, HypothesisError, ReslatError, SystemSpecError
from .floquet import (CZ_CONVENTION, block_normal_form, check_hypotheses, classify,
                      conley_zehnder, exp_log_defect, exponent_dict, monodromy,
                      stable_unstable_split)
from .orbits import continue_family, find_periodic_orbit
from .quantize import (QuantizationInput, compare, cz_relabel, enumerate_lattice,
                       model_modes, model_oracle, model_turns)

logger = logging.getLogger("reslat")

COMMANDS = ("check-hypotheses", "analyze-orbit", "resonances", "oracle", "compare")
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
ORACLE_TOL = 1e-10

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_NUMERICAL = 0, 1, 2, 3


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2, which is reserved for hypothesis failures
    def error(self, message):
        raise _ArgumentError(message)


def build_parser():
    p = _Parser(prog="reslat", description="Semiclassical resonance lattices of periodic orbits.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, metavar="PATH", help="YAML run configuration")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    p.add_argument("--threads", type=int, default=1, metavar="N",
                   help="worker threads for lattice enumeration")
    p.add_argument("--seed-guess", metavar="V1,V2,...",
                   help="phase-space starting point (overrides orbit.guess)")
    return p


def _setup_logging():
    level = os.environ.get("RESLAT_LOG", "quiet").strip().lower() or "quiet"
    if level not in LOG_LEVELS:
        raise ConfigError(f"RESLAT_LOG must be one of {sorted(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


class _HypothesisFailure(HypothesisError):
    def __init__(self, failed):
        super().__init__(f"required hypotheses fail: {', '.join(failed)}")
        self.failed = failed


# -- pipeline steps -----------------------------------------------------------

def _required_flags(cfg):
    flags = ["nondegenerate", "no_nonpositive_real", "distinct_exponents", "nonres17", "nonres18"]
    if cfg.floquet["require_partial_hyperbolicity"]:
        flags.append("partially_hyperbolic")
    return flags


def _find_orbit(cfg, system, report):
    o = cfg.orbit
    E = o["energy"]
    if o["guess"] is not None:
        if len(o["guess"]) != system.dim:
            raise ConfigError(f"orbit guess needs {system.dim} entries, got {len(o['guess'])}")
        guess = PhasePoint.from_array(np.array(o["guess"]))
    else:
        guess = default_guess(system, E)
    orbit = find_periodic_orbit(system, guess, E, tol=o["tol"], int_tol=o["int_tol"],
                                t_min=o["t_min"] or 1e-2, t_max=o["t_max"],
                                segments=o["segments"])
    report["orbit"] = {"E": orbit.E, "T": orbit.T, "start": orbit.start.as_array(),
                       "closure": orbit.closure(), "residual": orbit.residual,
                       "iterations": orbit.iterations}
    return orbit


def _hypotheses(cfg, orbit, report):
    f = cfg.floquet
    md = monodromy(orbit)
    report["monodromy"] = {"A": md.A, "eigenvalues": sorted(md.eigenvalues().tolist(),
                                                            key=lambda z: (z.real, z.imag)),
                           "symplectic_defect": md.symplectic_defect()}
    rep = check_hypotheses(md, K=f["K"], tol_res=f["tol_res"], tol_ell=f["tol_ell"])
    report["hypotheses"] = rep.to_dict()
    report["hypotheses"]["required"] = _required_flags(cfg)
    return md, rep


def _enforce(cfg, rep):
    failed = rep.failures(_required_flags(cfg))
    if failed:
        raise _HypothesisFailure(failed)


def _quantization_inputs(cfg):
    q = cfg.quantize
    return [QuantizationInput(h=h, eps0=q["eps0"], delta=q["delta"],
                              newton_tol=q["newton_tol"], max_iter=q["max_iter"])
            for h in q["h"]]


def _lattice_name(i, ext):
    return f"lattice.{ext}" if i == 0 else f"lattice_{i}.{ext}"


def _write_lattices(cfg, lattices, out, report, title):
    files = []
    for i, lat in enumerate(lattices):
        emit.write_text(out / _lattice_name(i, "csv"), emit.lattice_csv(lat))
        emit.write_text(out / _lattice_name(i, "json"), emit.lattice_json(lat))
        files.append({"h": lat.input.h, "csv": _lattice_name(i, "csv"),
                      "json": _lattice_name(i, "json"), "count": len(lat),
                      "failures": len(lat.failures)})
    emit.write_text(out / "plotdata.csv", emit.plotdata_csv(lattices))
    report["lattices"] = files
    report["plotdata"] = "plotdata.csv"
    if cfg.output["plot"]:
        from .plotting import render_lattice
        render_lattice(lattices, out / "lattice.png", title=title)
        report["figure"] = "lattice.png"


def _solver_lattices(cfg, system, args, report):
    orbit = _find_orbit(cfg, system, report)
    md, rep = _hypotheses(cfg, orbit, report)
    _enforce(cfg, rep)
    f = cfg.floquet
    fam = continue_family(system, orbit, cfg.family["window"],
                          node_count=cfg.family["node_count"],
                          tol=cfg.orbit["tol"], int_tol=cfg.orbit["int_tol"])
    required = [x for x in _required_flags(cfg) if x != "partially_hyperbolic"]
    model = build_action_model(fam, system, K=f["K"], tol_res=f["tol_res"], tol_ell=f["tol_ell"],
                               rho_c=cfg.quantize["rho_c"], cz_grid=f["cz_grid"],
                               required=required)
    report["action_model"] = model.to_dict()
    report["action_model"]["identity_defect"] = action_identity_defect(model)
    report["conley_zehnder"] = {"g": model.g, "convention": CZ_CONVENTION}
    lattices = [enumerate_lattice(model, inp, threads=args.threads)
                for inp in _quantization_inputs(cfg)]
    return model, lattices


def _oracle_lattices(cfg, centers=None):
    mu = parse_mu(cfg.system["params"]["mu"])
    turns = model_turns(mu)
    out = []
    for i, inp in enumerate(_quantization_inputs(cfg)):
        # widen the oracle so every relabelled solver key is present
        pad = inp.h * (int(turns.sum()) * (inp.k_max + 1) + 1)
        wide = QuantizationInput(inp.h, inp.eps0 + pad, inp.delta, inp.newton_tol, inp.max_iter)
        mc = 0 if centers is None or centers[i] is None else centers[i]
        out.append((inp, model_oracle(mu, wide if turns.any() else inp, m_center=mc)))
    return mu, turns, out


def _oracle_check(cfg, lattices, report):
    mu, turns, oracles = _oracle_lattices(cfg, [lat.meta.get("m_center") for lat in lattices])
    results = []
    for lat, (_, orc) in zip(lattices, oracles):
        relabel = cz_relabel(turns) if turns.any() else None
        cmp_ = compare(lat, orc, tol=ORACLE_TOL, relabel=relabel)
        results.append(dict(cmp_.to_dict(), h=lat.input.h))
    report["oracle_comparison"] = {"mu": [str(m) for m in mu], "turns": turns,
                                   "modes": model_modes(mu), "results": results}
    bad = [r for r in results if r["flagged"]]
    return results, bad


# -- subcommands ----------------------------------------------------------------

def cmd_check_hypotheses(cfg, system, args, report, out):
    orbit = _find_orbit(cfg, system, report)
    _, rep = _hypotheses(cfg, orbit, report)
    _enforce(cfg, rep)


def cmd_analyze_orbit(cfg, system, args, report, out):
    orbit = _find_orbit(cfg, system, report)
    md, rep = _hypotheses(cfg, orbit, report)
    exps = classify(md, cfg.floquet["tol_ell"])
    report["exponents"] = [exponent_dict(e) for e in exps]
    blocks = block_normal_form(md, cfg.floquet["tol_ell"])
    report["normal_forms"] = [{"kind": b.kind, "descriptor": b.descriptor, "basis": b.basis}
                              for b in blocks]
    report["exp_log_defect"] = exp_log_defect(md, blocks)
    if any(e.kind != "ee" for e in exps):
        fp, fm = stable_unstable_split(md, cfg.floquet["tol_ell"])
        report["stable_unstable"] = {"unstable_dim": fp.shape[1], "stable_dim": fm.shape[1]}
    report["conley_zehnder"] = {"g": conley_zehnder(orbit, grid=cfg.floquet["cz_grid"],
                                                    tol_ell=cfg.floquet["tol_ell"], md=md),
                                "convention": CZ_CONVENTION}
    report["action"] = {"S0": action_integral(orbit), "I1": subprincipal_integral(orbit)}
    _enforce(cfg, rep)


def cmd_resonances(cfg, system, args, report, out):
    model, lattices = _solver_lattices(cfg, system, args, report)
    _write_lattices(cfg, lattices, out, report, title=f"{system.name} resonances")
    if system.name == "model":
        _, bad = _oracle_check(cfg, lattices, report)
        if bad:
            raise _OracleMismatch(bad)


def cmd_oracle(cfg, system, args, report, out):
    mu, _, oracles = _oracle_lattices(cfg)
    lattices = [model_oracle(mu, inp) for inp, _ in oracles]
    report["oracle"] = {"mu": [str(m) for m in mu], "modes": model_modes(mu)}
    _write_lattices(cfg, lattices, out, report, title="model oracle")


def cmd_compare(cfg, system, args, report, out):
    _, lattices = _solver_lattices(cfg, system, args, report)
    _write_lattices(cfg, lattices, out, report, title=f"{system.name} resonances")
    results, bad = _oracle_check(cfg, lattices, report)
    lines = ["h,max_deviation,count,flagged"]
    for r in results:
        lines.append(f"{emit.fmt_float(r['h'])},{emit.fmt_float(r['max_deviation'])},"
                     f"{r['count']},{len(r['flagged'])}")
    emit.write_text(out / "compare.csv", "\n".join(lines) + "\n")
    if bad:
        raise _OracleMismatch(bad)


class _OracleMismatch(ReslatError):
    reason = "oracle_mismatch"

    def __init__(self, bad):
        super().__init__(f"solver deviates from the model oracle by more than {ORACLE_TOL:g} "
                         f"at {sum(len(b['flagged']) for b in bad)} points")


HANDLERS = {"check-hypotheses": cmd_check_hypotheses, "analyze-orbit": cmd_analyze_orbit,
            "resonances": cmd_resonances, "oracle": cmd_oracle, "compare": cmd_compare}


# -- entry point ----------------------------------------------------------------

def _parse_seed(text, cfg):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--seed-guess must be comma-separated numbers: {exc}") from exc
    if not vals:
        raise ConfigError("--seed-guess is empty")
    cfg.orbit["guess"] = vals


def _config_error(message):
    sys.stderr.write(emit.dumps({"status": "config_error", "reason": "config",
                                 "message": message}))
    return EXIT_CONFIG


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        _setup_logging()
        needs_q = args.command in ("resonances", "oracle", "compare")
        cfg = load_config(args.config, need_quantize=needs_q,
                          need_window=args.command in ("resonances", "compare"))
        if args.command in ("oracle", "compare") and cfg.system["name"] != "model":
            raise ConfigError(f"'{args.command}' needs the model system")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.seed_guess:
            _parse_seed(args.seed_guess, cfg)
        system = cfg.build_system()
        if cfg.orbit["guess"] is not None and len(cfg.orbit["guess"]) != system.dim:
            raise ConfigError(f"orbit guess needs {system.dim} entries")
    except (_ArgumentError, ConfigError, SystemSpecError) as exc:
        return _config_error(str(exc))

    out = Path(args.out or cfg.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    report = {"command": args.command, "config": cfg.to_dict(), "system": system.name}
    code = EXIT_OK
    try:
        HANDLERS[args.command](cfg, system, args, report, out)
        report.update(status="ok", reason="ok", message="")
    except HypothesisError as exc:
        code = EXIT_HYPOTHESIS
        report.update(status="hypothesis_failure", reason=exc.reason, message=str(exc))
        if isinstance(exc, _HypothesisFailure):
            report["failed_flags"] = exc.failed
    except ReslatError as exc:
        code = EXIT_NUMERICAL
        report.update(status="numerical_failure", reason=exc.reason, message=str(exc))
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        code = EXIT_NUMERICAL
        report.update(status="numerical_failure", reason="numerical", message=str(exc))
    emit.write_text(out / "report.json", emit.dumps(report))
    if code:
        logger.warning("%s: %s", report["status"], report["message"])
    return code


if __name__ == "__main__":
    sys.exit(main())
