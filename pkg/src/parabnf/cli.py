"""Command line front end.  Exit codes: 0 ok, 2 validation error, 3 numerical failure."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import harness as hz
from .egorov_bnf import DivisorError, check_nonresonance, tensors_to_json
from .flows import FlowError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _config(args):
    over = {"modes": args.modes, "s": args.s, "r": args.r, "T": args.T, "dt": args.dt,
            "seed": args.seed, "out": args.out}
    for kv in args.set or []:
        if "=" not in kv:
            raise hz.ValidationError(f"--set expects key=value, got {kv!r}")
        k, v = kv.split("=", 1)
        over[k.strip()] = v.strip()
    return hz.load_config(args.config, over)


def _outdir(cfg):
    try:
        os.makedirs(cfg.out, exist_ok=True)
    except OSError as exc:
        raise hz.ValidationError(f"cannot create output directory: {exc}") from None
    return cfg.out


def _emit(cfg, name, data):
    path = os.path.join(_outdir(cfg), f"{name}.json")
    hz.export(data, "json", path)
    print(json.dumps(hz._jsonable(data), indent=1, sort_keys=True))
    return path


# ---------------------------------------------------------------------------
# subcommands

def cmd_quantize_check(cfg):
    from .quantization import op_bw
    from .symbols import SeparableSymbol, japanese_fn, power_fn
    from .torus import FourierField
    N = cfg.modes
    j = np.arange(-N, N + 1)
    t0 = time.perf_counter()
    errs = []
    for p in range(4):
        A = op_bw(SeparableSymbol([(1.0, power_fn(p))], order=p), None, N).matrix
        errs.append(float(np.max(np.abs(A - np.diag(j.astype(float) ** p)))))
    cos = FourierField.from_function(np.cos, N)
    A = op_bw(SeparableSymbol([(cos, japanese_fn(1))], order=1, real=True), None, N).matrix
    sa = float(np.linalg.norm(A - A.conj().T, 2) / np.linalg.norm(A, 2))
    return _emit(cfg, "quantize_check", {"multiplier_max_error": max(errs), "self_adjoint_defect": sa,
                                          "modes": N, "seconds": time.perf_counter() - t0})


def cmd_compose_check(cfg):
    from .calculus import compose, smoothing_order
    from .symbols import SeparableSymbol, japanese_fn
    from .torus import FourierField
    N = cfg.modes
    sin = FourierField.from_function(np.sin, N)
    cos = FourierField.from_function(np.cos, N)
    rows = []
    for m1, m2, rho in [(1, 1, 2), (1, 1, 3), (2, 1, 3)]:
        a = SeparableSymbol([(sin, japanese_fn(m1))], order=m1, real=True)
        b = SeparableSymbol([(cos, japanese_fn(m2))], order=m2, real=True)
        res = compose(a, b, rho, N)
        rows.append({"m": m1, "m_prime": m2, "rho": rho, "slope": smoothing_order(res.residual),
                     "bound": m1 + m2 - rho + 0.5})
    return _emit(cfg, "compose_check", {"rows": rows})


def cmd_flow(cfg):
    from .flows import flow_inverse, flow_nonlinear, transport
    from .torus import random_field, real_field, synthesize_array, sobolev_norm
    N = min(cfg.modes, 32)
    rng = np.random.default_rng(cfg.seed)
    u0 = random_field(N, rng, decay=cfg.decay, s=cfg.s, r=cfg.r)
    M = 4 * N + 4

    def b_fn(t, z):
        return real_field(np.abs(synthesize_array(z.coeffs, M)) ** 2 + 0.1, N)

    gen = transport(b_fn)
    res = flow_nonlinear(gen, u0, s=cfg.s)
    back = flow_inverse(gen, res.final, s=cfg.s)
    return _emit(cfg, "flow", {"picard_iterations": res.picard_iterations, "ratios": res.contraction_ratios,
                               "round_trip": sobolev_norm(back - u0, cfg.s - 1),
                               "norm_constant": res.norm_constant(cfg.s)})


def cmd_egorov_demo(cfg):
    return _emit(cfg, "egorov_demo", hz.egorov_demo(cfg.r, min(cfg.modes, 16)))


def cmd_bnf(cfg):
    if cfg.model not in ("nls", "beam"):
        raise hz.ValidationError("bnf supports the nls and beam models")
    system = cfg.build_system()
    rep = check_nonresonance(system.freq, 4 if cfg.model == "nls" else 3, min(10, cfg.modes))
    tr, _, report = hz.bnf_report(system, r=min(cfg.r, 1e-3), K=cfg.K, seed=cfg.seed, s=cfg.s)
    report["nonresonance"] = {k: rep[k] for k in ("p", "J_max", "min_divisor", "resonant_count")}
    out = _outdir(cfg)
    tensors_to_json(tr.steps[-1]["coeffs"], tr.freq, os.path.join(out, "bnf_tensors.json"), tol=1e-14)
    return _emit(cfg, "bnf", report)


def cmd_simulate(cfg):
    system = cfg.build_system()
    u0 = cfg.initial_state()
    rep = hz.simulate(system, u0, cfg.T, cfg.dt, cfg.s, record_every=cfg.record_every,
                      config=hz.config_dict(cfg))
    out = _outdir(cfg)
    hz.export(rep, "csv", os.path.join(out, "simulate.csv"))
    hz.export(rep, "json", os.path.join(out, "simulate.json"))
    print(f"steps {int(rep.step_count[-1])}  escape {rep.escape_time}  blowup {rep.blowup}  "
          f"max ||u||_s / ||u0||_s {float(np.max(rep.h_s_norm) / rep.h_s_norm[0]):.6g}")
    if rep.blowup:
        raise hz.NumericalFailure(f"blow-up after t = {rep.last_valid_time}")
    return rep


def cmd_scan(cfg):
    from .egorov_bnf import bnf_pipeline
    system = cfg.build_system()
    kw = {}
    if cfg.model == "nls":
        tr, transformed = bnf_pipeline(system, 1, K=cfg.K)
        kw = {"transform": tr, "transformed": transformed}
    scan = hz.amplitude_scan(system, cfg.radii(), cfg.s, cfg.T, cfg.dt, cfg.seed, cfg.decay, **kw)
    return _emit(cfg, "scan", scan)


def cmd_report(cfg):
    out = cfg.out
    rows = {}
    if not os.path.isdir(out):
        raise hz.ValidationError(f"no output directory {out!r}")
    for name in sorted(os.listdir(out)):
        if name.endswith(".json") and name != "report.json" and name != "bnf_tensors.json":
            with open(os.path.join(out, name)) as fh:
                data = json.load(fh)
            rows[name[:-5]] = {k: v for k, v in data.items() if not isinstance(v, list) or len(v) <= 8}
    return _emit(cfg, "report", {"sections": rows})


COMMANDS = {
    "quantize-check": cmd_quantize_check,
    "compose-check": cmd_compose_check,
    "flow": cmd_flow,
    "egorov-demo": cmd_egorov_demo,
    "bnf": cmd_bnf,
    "simulate": cmd_simulate,
    "scan": cmd_scan,
    "report": cmd_report,
}


def build_parser():
    p = argparse.ArgumentParser(prog="parabnf", description="Para-differential normal form toolkit.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--modes", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg)
    except hz.ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (hz.NumericalFailure, DivisorError, FlowError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
