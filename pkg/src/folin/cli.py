"""``folin`` command-line front end.

Subcommands::

    folin check SYSTEM --order V (--roots R.. | --alpha A.. | --joint)
    folin design SYSTEM --order V (--roots R.. | --alpha A.. | --joint) [--out OBS]
    folin simulate [SYSTEM] [--observer OBS | --roots ..] [--scenario FILE] ...
    folin lti SYSTEM --roots R.. [--order V] [--out OBS]
    folin verify-general SYSTEM SPEC [--out OBS]

Reports are JSON on stdout.  Exit codes: 0 success / feasible / pass,
1 input error, 2 infeasible or failed verification, 3 ill-conditioned
least-squares problem, 4 evaluation failure during a simulation.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .expr import ExprError
from .files import (load_observer, load_scenario, load_system, observer_to_dict,
                    read_json, resolve, write_json)
from .gfol import NotInvertibleError, check_monotone, synthesize_general, verify_71
from .lti import (UnobservableError, condition_61, design_corollary, linear_transform,
                  obs_index, verify_luenberger)
from .sim import SimConfig, SimulationError, error_decay_check, export_csv, simulate
from .span import CharPoly, DEFAULT_TOL, char_from_roots, sample, solve_beta, solve_joint
from .synth import UnstableObserverError, synthesize, verify_output, verify_pde
from .system import SystemFileError

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_ILL, EXIT_SIM = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


# --- argument helpers --------------------------------------------------------

def _numbers(tokens, kind=float):
    out = []
    for tok in tokens or ():
        for part in str(tok).split(","):
            part = part.strip()
            if part:
                try:
                    out.append(kind(part))
                except ValueError:
                    raise InputError(f"not a number: {part!r}") from None
    return out


def _root_json(r):
    r = complex(r)
    return r.real if r.imag == 0 else str(r)


def _charpoly_from_args(args, v):
    if args.roots:
        roots = _numbers(args.roots, complex)
        alpha = char_from_roots(roots)
    elif args.alpha:
        alpha = CharPoly(tuple(_numbers(args.alpha)))
    else:
        return None
    if v is not None and alpha.order != v:
        raise InputError(f"--order {v} does not match a polynomial of order {alpha.order}")
    return alpha


def _emit(report):
    sys.stdout.write(json.dumps(report, indent=2) + "\n")


def _poly_report(alpha):
    return {"alpha": [float(a) for a in alpha.alpha],
            "roots": [_root_json(r) for r in np.sort_complex(alpha.roots)],
            "hurwitz": alpha.hurwitz}


def _beta_report(b):
    return {"feasible": b.feasible, "residual": b.residual, "tol": b.tol,
            "condition": b.condition, "ill_conditioned": b.ill_conditioned,
            "beta": b.beta.tolist(), "effective_samples": b.effective_samples,
            "skipped": list(b.skipped), "dependent_columns": list(b.dropped)}


def _verdict(b):
    if b.ill_conditioned:
        return "ill-conditioned", EXIT_ILL
    if not b.feasible:
        return "infeasible", EXIT_INFEASIBLE
    return "feasible", EXIT_OK


# --- check / design ----------------------------------------------------------

def _run_check(args):
    model, _, _ = load_system(args.system)
    v = args.order
    if v is None or v < 1:
        raise InputError("--order must be a positive integer")
    samples = sample(model.box, args.samples, args.seed)
    method = "min-norm" if args.min_norm else "lowest-order"
    if args.joint:
        alpha, b = solve_joint(model, samples, v, tol=args.tol, skip_bad=args.skip_bad,
                               method=method)
    else:
        alpha = _charpoly_from_args(args, v)
        if alpha is None:
            raise InputError("give --roots, --alpha or --joint")
        b = solve_beta(model, samples, v, alpha, tol=args.tol, skip_bad=args.skip_bad,
                       method=method)
    verdict, code = _verdict(b)
    report = {"system": model.name, "order": v, "samples": args.samples,
              "seed": args.seed, "method": method, "joint": bool(args.joint),
              **_poly_report(alpha), **_beta_report(b), "verdict": verdict}
    return model, alpha, b, report, code


def cmd_check(args):
    _, _, _, report, code = _run_check(args)
    report = {"command": "check", **report}
    _emit(report)
    return code


def _verify_lti_design(model, obs, args):
    fresh = sample(model.box, args.samples, args.seed + 1)
    pde = verify_pde(model, obs, obs.alpha, obs.beta, fresh.points)
    out = verify_output(model, obs, obs.alpha, obs.beta, fresh.points)
    return [pde.summary(), out.summary()], pde.passed and out.passed


def cmd_design(args):
    if args.lti:
        return _design_exact(args, "design")
    model, alpha, b, report, code = _run_check(args)
    report = {"command": "design", **report}
    if code != EXIT_OK:
        _emit(report)
        return code
    obs = synthesize(alpha, b, allow_unstable=args.allow_unstable)
    checks, passed = _verify_lti_design(model, obs, args)
    doc = observer_to_dict(obs, metadata={"system": model.name, "order": args.order,
                                          "samples": args.samples, "seed": args.seed})
    report.update(observer=doc, verification=checks)
    if not passed:
        report["verdict"] = "verification-failed"
        _emit(report)
        return EXIT_INFEASIBLE
    if args.out:
        write_json(doc, args.out)
        report["written"] = args.out
    _emit(report)
    return EXIT_OK


# --- exact LTI path ----------------------------------------------------------

def _design_exact(args, command):
    _, lti, _ = load_system(args.system)
    if lti is None:
        raise InputError("the exact LTI path needs a linear system file")
    vo = obs_index(lti)
    v = args.order if args.order is not None else vo - 1
    alpha = _charpoly_from_args(args, v)
    if alpha is None:
        raise InputError("give --roots or --alpha")
    if args.order is None and not args.alpha:
        obs = design_corollary(lti, _numbers(args.roots, complex),
                               allow_unstable=args.allow_unstable)
        b = condition_61(lti, v, alpha)
    else:
        b = condition_61(lti, v, alpha)
        if not b.feasible:
            _emit({"command": command, "observability_index": vo, "order": v,
                   **_poly_report(alpha), **_beta_report(b), "verdict": "infeasible"})
            return EXIT_INFEASIBLE
        obs = synthesize(alpha, b, allow_unstable=args.allow_unstable)
    T = linear_transform(lti, alpha, b)
    lr = verify_luenberger(lti, T, obs)
    doc = observer_to_dict(obs, metadata={"order": v, "observability_index": vo})
    report = {"command": command, "observability_index": vo, "order": v,
              **_poly_report(alpha), **_beta_report(b),
              "observer": doc, "T": T.tolist(),
              "luenberger": {"pde_residual": lr.pde_residual,
                             "output_residual": lr.output_residual,
                             "tol": lr.tol, "passed": lr.passed}}
    if not lr.passed:
        report["verdict"] = "verification-failed"
        _emit(report)
        return EXIT_INFEASIBLE
    report["verdict"] = "feasible"
    if args.out:
        write_json(doc, args.out)
        report["written"] = args.out
    _emit(report)
    return EXIT_OK


def cmd_lti(args):
    return _design_exact(args, "lti")


# --- simulate ----------------------------------------------------------------

def _scenario_settings(args):
    """Merge scenario file values with command-line flags (flags win)."""
    s = load_scenario(args.scenario) if args.scenario else {}
    system = args.system or s.get("system")
    if system is None:
        raise InputError("give a system file or --scenario")
    get = lambda flag, key, default=None: flag if flag is not None else s.get(key, default)  # noqa: E731
    design = dict(s.get("design", {}))
    if args.roots or args.alpha:
        design = {"roots": args.roots, "alpha": args.alpha, "order": args.order,
                  "lti": args.lti}
    return {
        "system": system,
        "observer": args.observer or s.get("observer"),
        "design": design,
        "x0": _numbers(args.x0) if args.x0 else s.get("x0"),
        "xi0": _numbers(args.xi0) if args.xi0 else s.get("xi0"),
        "init_error": get(args.init_error, "init_error"),
        "consistent": args.consistent,
        "t_end": get(args.t_end, "t_end"),
        "dt": get(args.dt, "dt"),
        "stride": get(args.stride, "stride", 1),
        "samples": get(args.samples, "samples", 200),
        "seed": get(args.seed, "seed", 0),
    }


def _observer_for(model, lti, cfg):
    if cfg["observer"]:
        return load_observer(cfg["observer"], p=model.p)
    d = cfg["design"]
    if not d:
        raise InputError("give --observer, design flags (--roots/--alpha) or a scenario with one")
    ns = argparse.Namespace(roots=d.get("roots"), alpha=d.get("alpha"))
    alpha = _charpoly_from_args(ns, d.get("order"))
    if alpha is None:
        raise InputError("design settings need roots or alpha")
    if d.get("lti") and lti is not None:
        b = condition_61(lti, alpha.order, alpha)
    else:
        b = solve_beta(model, sample(model.box, int(cfg["samples"]), int(cfg["seed"])),
                       alpha.order, alpha)
    if not b.feasible:
        raise InputError(f"observer design infeasible (residual {b.residual:.3e})")
    return synthesize(alpha, b)


def cmd_simulate(args):
    cfg = _scenario_settings(args)
    model, lti, _ = load_system(cfg["system"])
    obs = _observer_for(model, lti, cfg)
    if cfg["x0"] is None or cfg["t_end"] is None or cfg["dt"] is None:
        raise InputError("simulation needs x0, t_end and dt")
    x_raw = [float(a) for a in cfg["x0"]]
    if len(x_raw) != model.n:
        raise InputError(f"x0 must have {model.n} entries")
    x0 = [float(a) for a in model.from_raw(x_raw)]
    if cfg["consistent"]:
        xi0 = "consistent"
    elif cfg["xi0"] is not None:
        xi0 = [float(a) for a in cfg["xi0"]]
    elif cfg["init_error"] is not None:
        from .sim import observer_transform
        xi0 = np.array(observer_transform(model, obs)(x0), dtype=float)
        xi0[-1] += float(cfg["init_error"])
    else:
        xi0 = "consistent"
    config = SimConfig(float(cfg["t_end"]), float(cfg["dt"]), tuple(x0), xi0,
                       int(cfg["stride"]))
    try:
        traj = simulate(model, obs, config)
    except SimulationError as exc:
        _emit({"command": "simulate", "system": model.name, "status": "failed",
               "failure_time": exc.t, "message": str(exc)})
        return EXIT_SIM
    report = error_decay_check(traj, obs, tol=args.tol)
    manifold = float(np.max(np.linalg.norm(traj.e_state, axis=1)))
    out = {"command": "simulate", "system": model.name, "status": "completed",
           "steps": int(round(config.t_end / config.dt)), "recorded": len(traj),
           "e_out_initial": float(traj.e_out[0]), "e_out_final": float(traj.e_out[-1]),
           "max_state_error": manifold, **report.summary()}
    if args.out:
        export_csv(traj, args.out)
        out["written"] = args.out
    _emit(out)
    return EXIT_OK if report.passed else EXIT_INFEASIBLE


# --- verify-general ----------------------------------------------------------

def cmd_verify_general(args):
    model, _, _ = load_system(args.system)
    path = resolve(args.spec)
    doc = read_json(path)
    if doc.get("kind", "general") != "general":
        raise InputError("verify-general needs an observer file of kind 'general'")
    doc = {**doc, "kind": "general"}
    from .files import observer_from_dict
    obs = observer_from_dict(doc, p=model.p)
    spec = obs.spec
    samples = sample(model.box, args.samples, args.seed)
    rep = verify_71(model, spec, samples.points, tol=args.tol)
    report = {"command": "verify-general", "system": model.name,
              "samples": args.samples, "seed": args.seed,
              **_poly_report(spec.alpha), **rep.summary()}
    try:
        report["monotone_sign"] = check_monotone(model, spec, seed=args.seed)
    except NotInvertibleError as exc:
        report["monotone_sign"] = None
        report["monotone_error"] = str(exc)
    ok = rep.passed and report["monotone_sign"] is not None
    if ok and not spec.alpha.hurwitz and not args.allow_unstable:
        report["stability_error"] = "characteristic polynomial is not Hurwitz"
        ok = False
    report["verdict"] = "pass" if ok else "fail"
    if ok and args.out:
        write_json(observer_to_dict(synthesize_general(spec, allow_unstable=True)), args.out)
        report["written"] = args.out
    _emit(report)
    return EXIT_OK if ok else EXIT_INFEASIBLE


# --- parser ------------------------------------------------------------------

def _add_poly_flags(p, joint=True):
    p.add_argument("--order", type=int, help="observer order v")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--roots", nargs="+", metavar="R",
                   help="observer eigenvalues (comma or space separated; "
                        "complex as --roots=-1+2j,-1-2j)")
    g.add_argument("--alpha", nargs="+", metavar="A", help="coefficients α_1..α_v")
    if joint:
        g.add_argument("--joint", action="store_true",
                       help="solve for α together with β")


def _add_sample_flags(p, tol=DEFAULT_TOL):
    p.add_argument("--samples", type=int, default=200, help="number of sample states")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--tol", type=float, default=tol, help="acceptance tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="folin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="test whether a linear-error observer exists")
    p.add_argument("system")
    _add_poly_flags(p)
    _add_sample_flags(p)
    p.add_argument("--skip-bad", action="store_true",
                   help="drop samples where evaluation fails")
    p.add_argument("--min-norm", action="store_true",
                   help="report the minimum-norm β instead of the lowest-order one")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("design", help="check, synthesize and write an observer")
    p.add_argument("system")
    _add_poly_flags(p)
    _add_sample_flags(p)
    p.add_argument("--skip-bad", action="store_true")
    p.add_argument("--min-norm", action="store_true")
    p.add_argument("--lti", action="store_true", help="use the exact linear path")
    p.add_argument("--allow-unstable", action="store_true")
    p.add_argument("--out", help="observer JSON file to write")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", help="co-simulate plant and observer")
    p.add_argument("system", nargs="?")
    p.add_argument("--scenario", help="scenario JSON with defaults for all settings")
    p.add_argument("--observer", help="observer JSON file")
    _add_poly_flags(p, joint=False)
    p.add_argument("--lti", action="store_true", default=None)
    p.add_argument("--x0", nargs="+", help="initial plant state (physical coordinates)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--xi0", nargs="+", help="initial observer state")
    g.add_argument("--consistent", action="store_true", help="start on 𝒯(x0)")
    g.add_argument("--init-error", type=float, help="start at 𝒯(x0) + e_v·value")
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--stride", type=int, help="record every k-th step")
    p.add_argument("--samples", type=int, help="samples for on-the-fly design")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, default=1e-6, help="error-linearity tolerance")
    p.add_argument("--out", help="trajectory CSV file to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lti", help="exact design for a linear system")
    p.add_argument("system")
    _add_poly_flags(p, joint=False)
    p.add_argument("--allow-unstable", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_lti)

    p = sub.add_parser("verify-general", help="check user-supplied 𝒵 functions")
    p.add_argument("system")
    p.add_argument("spec")
    _add_sample_flags(p, tol=1e-10)
    p.add_argument("--allow-unstable", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_general)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, SystemFileError, ExprError, FileNotFoundError, ValueError,
            UnobservableError, UnstableObserverError, ArithmeticError, OSError) as exc:
        sys.stderr.write(f"folin {args.command}: error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
