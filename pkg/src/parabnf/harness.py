"""Time integration, the pushforward Taylor oracle, amplitude scans and reports."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .egorov_bnf import bnf_pipeline, resonant_project
from .torus import FourierField, random_field, sobolev_norm, sobolev_weight

SCHEMA = 1


class ValidationError(ValueError):
    """Invalid configuration (exit code 2)."""


class NumericalFailure(RuntimeError):
    """Blow-up, non-contraction or divisor failure (exit code 3)."""


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    model: str = "nls"
    catalog: str = ""
    modes: int = 64
    s: float = 4.0
    r: float = 0.05
    T: float = 20.0
    dt: float = 5e-3
    integrator: str = "ifrk4"
    seed: int = 0
    decay: float = 6.0
    out: str = "out"
    m: str = "0.31,-0.17"
    mass: float = 1.0
    r_list: str = "0.2,0.1,0.05"
    K: int = 12
    record_every: int = 1

    def validate(self):
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        if self.r <= 0:
            raise ValidationError("r must be positive")
        if self.T < 0:
            raise ValidationError("T must be nonnegative")
        if self.modes < 4 or self.modes > 256:
            raise ValidationError("modes must lie in [4, 256]")
        if self.model not in ("nls", "beam", "bo", "linear"):
            raise ValidationError(f"unknown model {self.model!r}")
        if self.integrator not in ("ifrk4",):
            raise ValidationError(f"unknown integrator {self.integrator!r}")
        try:
            self.mvec()
            self.radii()
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        if self.catalog:
            from .models import BEAM_CATALOG, BO_CATALOG, NLS_CATALOG
            cat = {"nls": NLS_CATALOG, "beam": BEAM_CATALOG, "bo": BO_CATALOG}.get(self.model, {})
            if self.catalog not in cat:
                raise ValidationError(f"unknown catalog id {self.catalog!r} for {self.model}")
        return self

    def mvec(self):
        return [float(v) for v in str(self.m).split(",") if v.strip()]

    def radii(self):
        return [float(v) for v in str(self.r_list).split(",") if v.strip()]

    def build_system(self):
        from .models import build_system, linear_system
        if self.model == "linear":
            return linear_system(self.modes)
        kw = {"m": self.mvec(), "mass": self.mass}
        if self.catalog:
            kw["catalog"] = self.catalog
        try:
            return build_system(self.model, self.modes, **kw)
        except (KeyError, ValueError) as exc:
            raise ValidationError(str(exc)) from None

    def initial_state(self, r=None):
        rng = np.random.default_rng(self.seed)
        u = random_field(self.modes, rng, decay=self.decay, s=self.s, r=self.r if r is None else r).coeffs
        if self.model == "bo":
            u = 0.5 * (u + np.conj(u[::-1]))
            u = u * ((self.r if r is None else r) / sobolev_norm(FourierField(u, self.modes), self.s))
        return u


_FIELDS = {f.name: f.type for f in RunConfig.__dataclass_fields__.values()}


def load_config(path=None, overrides=None):
    """Flat key = value file; '#' starts a comment.  Overrides win."""
    cfg = RunConfig()
    items = {}
    if path:
        try:
            with open(path) as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.split("#", 1)[0].strip()
                    if not line:
                        continue
                    if "=" not in line:
                        raise ValidationError(f"{path}:{lineno}: expected key = value")
                    k, v = (t.strip() for t in line.split("=", 1))
                    items[k] = v
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from None
    items.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for k, v in items.items():
        if k not in _FIELDS:
            raise ValidationError(f"unknown config key {k!r}")
        default = getattr(cfg, k)
        try:
            setattr(cfg, k, type(default)(v))
        except (TypeError, ValueError):
            raise ValidationError(f"bad value for {k}: {v!r}") from None
    return cfg.validate()


# ---------------------------------------------------------------------------
# integration

@dataclass
class RunReport:
    t: np.ndarray
    h_s_norm: np.ndarray
    energy: np.ndarray
    step_count: np.ndarray
    escape_time: float | None
    blowup: bool
    last_valid_time: float
    config: dict = dc_field(default_factory=dict)
    wall_time: float = 0.0
    final_state: np.ndarray | None = None

    @property
    def energy_drift(self):
        if len(self.energy) == 0:
            return {"max_abs": 0.0, "final": 0.0}
        d = self.energy - self.energy[0]
        return {"max_abs": float(np.max(np.abs(d))), "final": float(d[-1])}

    def to_dict(self):
        return {"schema": SCHEMA, "t": self.t.tolist(), "h_s_norm": self.h_s_norm.tolist(),
                "energy": self.energy.tolist(), "step_count": self.step_count.tolist(),
                "escape_time": self.escape_time, "blowup": self.blowup,
                "last_valid_time": self.last_valid_time, "energy_drift": self.energy_drift,
                "config": self.config, "wall_time": self.wall_time}


def _energy(system, u):
    H = getattr(system, "hamiltonian", None)
    if H is not None:
        return float(H(u))
    return float(np.sum(np.abs(u) ** 2))


def simulate(system, u0, T, dt, s=4.0, escape_factor=2.0, stop_on_escape=False,
             record_every=1, blowup_factor=1e6, config=None):
    """Integrating-factor RK4: the linear multiplier exactly, the rest with RK4 stages."""
    t0 = time.perf_counter()
    u = np.asarray(u0, complex).copy()
    lin = np.asarray(system.linear, complex)
    w = sobolev_weight(system.N, s)
    E_half = np.exp(lin * dt / 2)
    E_full = E_half * E_half

    def Nl(v):
        return system.nonlinear(v)

    n0 = float(np.linalg.norm(w * u))
    ts, ns, es, cs = [0.0], [n0], [_energy(system, u)], [0]
    escape = None
    blowup = False
    n_steps = int(round(T / dt))
    for k in range(1, n_steps + 1):
        with np.errstate(all="ignore"):
            k1 = Nl(u)
            uh = E_half * u
            k2 = Nl(uh + dt / 2 * E_half * k1)
            k3 = Nl(uh + dt / 2 * k2)
            k4 = Nl(E_full * u + dt * E_half * k3)
            new = E_full * u + dt / 6 * (E_full * k1 + 2 * E_half * (k2 + k3) + k4)
        nrm = float(np.linalg.norm(w * new))
        if not np.isfinite(nrm) or nrm > blowup_factor * max(n0, 1e-300):
            blowup = True
            break
        u = new
        t = k * dt
        if escape is None and nrm > escape_factor * n0:
            escape = t
        if k % record_every == 0 or k == n_steps or (escape == t):
            ts.append(t)
            ns.append(nrm)
            es.append(_energy(system, u))
            cs.append(k)
        if escape is not None and stop_on_escape:
            break
    return RunReport(np.array(ts), np.array(ns), np.array(es), np.array(cs, dtype=int), escape,
                     blowup, ts[-1], config or {}, time.perf_counter() - t0, u)


def convergence_order(system, u0, T, dt, s=4.0):
    """Observed order from runs at dt, dt/2, dt/4."""
    finals = [simulate(system, u0, T, h, s, record_every=10 ** 9).final_state for h in (dt, dt / 2, dt / 4)]
    e1 = np.linalg.norm(finals[0] - finals[1])
    e2 = np.linalg.norm(finals[1] - finals[2])
    return float(np.log2(e1 / e2)) if e2 > 0 else np.inf


# ---------------------------------------------------------------------------
# pushforward oracle

def pushforward_field(forward, inverse, field, Z, h=1e-3):
    """dPsi(Psi^{-1} Z)[X(Psi^{-1} Z)] by central differences along X."""
    V = inverse(Z)
    X = field(V)
    nx = np.linalg.norm(X)
    if nx == 0:
        return X
    eps = h * max(np.linalg.norm(V), 1e-300) / nx
    return (forward(V + eps * X) - forward(V - eps * X)) / (2 * eps)


def pushforward_taylor(forward, inverse, field, linear, probe, r, degrees=(3, 5), resonant=None, h=1e-3):
    """Homogeneous parts of the conjugated field at the probe direction.

    The conjugated field minus its linear part is sampled at amplitudes
    r, r/2, ... (one per requested degree) and the monomials r^d are fitted
    exactly.  Returns {degree: {"norm", "nonresonant", "coefficient"}} where
    coefficient is the degree-d part at amplitude one and nonresonant
    subtracts resonant[d](probe) when given.
    """
    probe = np.asarray(probe, complex)
    degrees = list(degrees)
    amps = r * 0.5 ** np.arange(len(degrees))
    R = np.array([pushforward_field(forward, inverse, field, a * probe, h) - linear * a * probe for a in amps])
    V = np.array([[(a / r) ** d for d in degrees] for a in amps])
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > 1e8:
        raise NumericalFailure(f"amplitude regression ill-conditioned (cond {cond:.2e})")
    coef = np.linalg.solve(V, R)                     # coefficient of (a/r)^d
    out = {}
    for d, c in zip(degrees, coef):
        c1 = c / r ** d
        ref = resonant[d](probe) if resonant and d in resonant else 0.0
        out[d] = {"norm": float(np.linalg.norm(c1)), "nonresonant": float(np.linalg.norm(c1 - ref)),
                  "coefficient": c1, "at_r": float(np.linalg.norm(c1 - ref)) * r ** d}
    return out


def identity_map(u):
    return np.asarray(u, complex)


def bnf_report(system, r=1e-3, K=12, probe_support=3, seed=0, norm_radii=(1e-2, 5e-3), s=4.0):
    """One normal-form step plus its oracle verification."""
    tr, transformed = bnf_pipeline(system, 1, K=K)
    deg = tr.degree
    rng = np.random.default_rng(seed)
    probe = random_field(system.N, rng, decay=1.0, support=min(probe_support, K // 3)).coeffs
    probe = probe / np.linalg.norm(probe)
    res = resonant_project(tr.box_field)
    degrees = [deg, deg + 1, deg + 2, deg + 3] if deg == 2 else [deg, deg + 2]
    tay = pushforward_taylor(tr.forward, tr.inverse, system.field, system.linear, probe, r,
                             degrees, {deg: lambda z: res.evaluate(z, system.N)})
    raw = pushforward_taylor(identity_map, identity_map, system.field, system.linear, probe, r,
                             degrees, {deg: lambda z: res.evaluate(z, system.N)})
    from .egorov_bnf import back_substitution_residual
    bsr = back_substitution_residual(tr.steps[-1]["input"], tr.steps[-1]["coeffs"], tr.freq)
    states = [random_field(system.N, rng, decay=6.0, s=s, r=q).coeffs for q in norm_radii]
    C = [tr.norm_constants([z], s).tolist() for z in states]
    rt = max(tr.round_trip(z) for z in states)
    return tr, transformed, {
        "degree": deg, "r": r, "K": K,
        "nonresonant_after": tay[deg]["at_r"], "nonresonant_before": raw[deg]["at_r"],
        "bound": 1e-6 * r ** (deg - 1), "back_substitution": bsr,
        "norm_constants": {"radii": list(norm_radii), "C_lin_C_quad": C}, "round_trip": rt,
        "steps": [s_["kind"] for s_ in tr.steps]}


# ---------------------------------------------------------------------------
# scans and demos

def escape_time(system, u0, T_max, dt, s=4.0):
    rep = simulate(system, u0, T_max, dt, s, stop_on_escape=True, record_every=10 ** 9)
    if rep.blowup:
        return rep.last_valid_time
    return rep.escape_time if rep.escape_time is not None else T_max


def amplitude_scan(system, r_list, s=4.0, T_max=200.0, dt=5e-3, seed=0, decay=6.0, transform=None,
                   transformed=None):
    """Escape time (first t with ||u||_s > 2 ||u0||_s, capped at T_max) per r.

    With transform/transformed given, the normal-form system is run from
    Psi(u0) alongside the raw one.
    """
    r_list = list(r_list)
    if len(r_list) < 3 or any(a <= b for a, b in zip(r_list, r_list[1:])):
        raise ValidationError("r_list must be descending with at least 3 values")
    base = random_field(system.N, np.random.default_rng(seed), decay=decay, s=s, r=1.0).coeffs
    rows = []
    for r in r_list:
        u0 = r * base
        row = {"r": r, "raw": escape_time(system, u0, T_max, dt, s)}
        if transform is not None:
            row["bnf"] = escape_time(transformed, transform.forward(u0), T_max, dt, s)
        rows.append(row)
    out = {"rows": rows, "T_max": T_max, "s": s}
    for key in ("raw", "bnf"):
        if rows and key in rows[0]:
            T = np.array([row[key] for row in rows])
            finite = T < T_max
            out[f"slope_{key}"] = (float(np.polyfit(np.log(r_list), np.log(T), 1)[0])
                                   if finite.sum() >= 2 else None)
    return out


def energy_constant(report, s=4.0, exponent=4.0):
    """C = max_t (||w(t)||^2 - ||w0||^2) / int_0^t ||w||^exponent."""
    n = report.h_s_norm
    t = report.t
    integ = np.concatenate([[0.0], np.cumsum(0.5 * (n[1:] ** exponent + n[:-1] ** exponent) * np.diff(t))])
    inc = n ** 2 - n[0] ** 2
    ok = integ > 0
    return float(np.max(inc[ok] / integ[ok])) if np.any(ok) else 0.0


def egorov_demo(r=0.02, N=16, n_iters=2, modes_=(1, 2), seed=0):
    """Toy model i Op((1+|u|^2)(i xi)^2) u: constant m_b and variance reduction."""
    from .flows import _mb_formula, constant_m_b
    from .torus import real_field, synthesize_array, good_size
    if r > 0.05:
        raise ValidationError("egorov demo requires r <= 0.05")
    rng = np.random.default_rng(seed)
    c = np.zeros(2 * N + 1, complex)
    for j in modes_:
        c[N + j] = rng.standard_normal() + 1j * rng.standard_normal()
    if np.any(c):
        c *= r / np.linalg.norm(c)
    w = FourierField(c, N)
    M = good_size(4 * N + 2)

    def atilde(z):
        return real_field(np.abs(synthesize_array(z.coeffs, M)) ** 2, N)

    closed = _mb_formula(np.abs(synthesize_array(c, M)) ** 2, 2)
    if not np.any(c):
        return {"m_b": 0.0, "closed_form": closed, "variance": [0.0], "reduction": np.inf, "r": r}
    mb, gen, diag = constant_m_b(atilde, 2, n_iters, w)
    var = diag.variance_history
    return {"r": r, "N": N, "m_b": mb, "closed_form": closed, "m_history": diag.m_history,
            "variance": var, "reduction": var[0] / max(var[-1], 1e-300)}


# ---------------------------------------------------------------------------
# export

CSV_HEADER = ["t", "h_s_norm", "energy", "step_count"]


def report_csv(report):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    for row in zip(report.t, report.h_s_norm, report.energy, report.step_count):
        wr.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def export(report, fmt, path):
    """Write a RunReport (csv or json) or a plain dict (json)."""
    if fmt == "csv":
        text = report_csv(report)
    elif fmt == "json":
        data = report.to_dict() if isinstance(report, RunReport) else dict(report)
        data.setdefault("schema", SCHEMA)
        text = json.dumps(_jsonable(data), indent=1, sort_keys=True)
    else:
        raise ValidationError(f"unknown format {fmt!r}")
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from None
    return path


def read_report(path):
    with open(path) as fh:
        data = json.load(fh)
    if data.get("schema") != SCHEMA:
        raise ValidationError("unsupported report schema")
    return data


def config_dict(cfg):
    return asdict(cfg)
