"""Command-line entry point.

Configuration comes from defaults, then an optional ``key = value`` file
(``--config``), then ``--key value`` flags.  Every output file starts with
the resolved configuration, so reading it back reproduces the run.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__

COMMANDS = ("mesh", "forms", "lattice", "spectrum", "trace", "weyl", "radial", "verify-all")


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    command: str = "verify-all"
    level: int = 3                 # mesh refinement level
    h: float = 1.0                 # semiclassical parameter
    t: tuple = (1.0,)              # heat times for `trace`
    a: float = 0.0                 # window [a, b]
    b: float = 20.0
    delta: str = "4000*c*h"        # P^delta band width, or an explicit number
    form: tuple = (0.0, 0.0, 0.0, 0.0)   # coefficients in the harmonic basis
    quad_level: int = 3            # octagon quadrature level for `trace`
    radial_quad_level: int = 7
    radial_t: float = 2.0
    trunc: float = 7.0             # geometric-side truncation radius
    basepoint: tuple = (0.0, 1.0)  # (x, y) in the upper half-plane
    radius: float = 8.0            # enumeration radius for `lattice`
    points: int = 50               # sample points for `radial`
    k: int = 40                    # eigenvalues for `spectrum`
    solver: str = "auto"           # auto | dense | iterative
    out: str = "out"

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError("command", f"unknown command {self.command!r}")
        if not 0 <= self.level <= 7:
            raise ConfigError("level", "must be between 0 and 7")
        if self.h <= 0:
            raise ConfigError("h", "must be positive")
        if any(x <= 0 for x in self.t):
            raise ConfigError("t", "heat times must be positive")
        if self.a > self.b:
            raise ConfigError("a", "need a <= b")
        if len(self.form) != 4:
            raise ConfigError("form", "needs 4 coefficients")
        if len(self.basepoint) != 2:
            raise ConfigError("basepoint", "needs two numbers x,y")
        if self.basepoint[1] <= 0:
            raise ConfigError("basepoint", "imaginary part y must be positive")
        if self.delta != "4000*c*h":
            try:
                if float(self.delta) <= 0:
                    raise ValueError
            except ValueError:
                raise ConfigError("delta", "expected '4000*c*h' or a positive number") from None
        if self.solver not in ("auto", "dense", "iterative"):
            raise ConfigError("solver", "expected auto, dense or iterative")
        for key in ("quad_level", "radial_quad_level", "points", "k"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be at least 1")
        for key in ("radial_t", "trunc", "radius"):
            if getattr(self, key) <= 0:
                raise ConfigError(key, "must be positive")
        return self

    def lines(self):
        return [f"{f.name} = {_fmt_value(getattr(self, f.name))}" for f in fields(self)]

    def dumps(self) -> str:
        return "\n".join(self.lines()) + "\n"


def _fmt_value(v):
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(key, raw: str):
    kind = {f.name: f.type for f in fields(RunConfig)}[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple":
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r}") from None
    return raw


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", "expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(key, "unknown key")
        values[key] = _parse_value(key, raw)
    return dataclasses.replace(base or RunConfig(), **values)


# ---------------------------------------------------------------------------
# output helpers

def _num(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.16e}"


def _header(cfg: RunConfig, extra: dict | None = None) -> str:
    meta = {"bolzalab": __version__, "numpy": np.__version__, "scipy": scipy.__version__}
    meta.update(extra or {})
    lines = cfg.lines() + [f"meta.{k} = {v}" for k, v in meta.items()]
    return "\n".join(lines)


def _write_csv(path: Path, cfg, columns, rows, extra=None):
    with open(path, "w") as fh:
        for line in _header(cfg, extra).splitlines():
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _num(v) for v in row) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def _write_json(path: Path, cfg, result, extra=None):
    doc = {"config": {f.name: _jsonable(getattr(cfg, f.name)) for f in fields(cfg)},
           "meta": {"bolzalab": __version__, "numpy": np.__version__,
                    "scipy": scipy.__version__, **(extra or {})},
           "result": _jsonable(result)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands

def _mesh_and_form(cfg):
    from .surfmesh import build_mesh, combine, harmonic_basis
    mesh = build_mesh(cfg.level)
    basis = harmonic_basis(mesh)
    return mesh, basis, combine(mesh, basis, cfg.form)


def _delta(cfg, c):
    if cfg.delta == "4000*c*h":
        from .twistedop import default_delta
        return default_delta(c, cfg.h)
    return float(cfg.delta)


def cmd_mesh(cfg, out: Path):
    from .surfmesh import build_mesh, write_mesh
    mesh = build_mesh(cfg.level)
    path = out / f"mesh_L{cfg.level}.txt"
    write_mesh(mesh, path, header=_header(cfg))
    print(f"V={mesh.n_vertices} E={mesh.n_edges} F={mesh.n_triangles} "
          f"chi={mesh.euler_characteristic} area={mesh.total_area:.12f} -> {path}")
    return 0


def cmd_forms(cfg, out: Path):
    from .surfmesh import write_form
    mesh, basis, combo = _mesh_and_form(cfg)
    rows = []
    for k, hf in enumerate(basis + [combo]):
        name = f"form_{k}" if k < 4 else "form_combined"
        write_form(hf.cochain, out / f"{name}.csv", header=_header(cfg, {"form": name}))
        rows.append([name, *hf.periods, hf.l2_norm, hf.linf_norm, hf.codiff_residual])
    _write_csv(out / "forms_summary.csv", cfg,
               ["form", "p0", "p1", "p2", "p3", "l2_norm", "linf_norm", "codiff_residual"], rows)
    for r in rows:
        print(r[0], " ".join(f"{v:.6g}" for v in r[1:]))
    return 0


def cmd_lattice(cfg, out: Path):
    from . import fuchsian
    gens = fuchsian.bolza_group()
    x = complex(*cfg.basepoint)
    table = fuchsian.shell_table(gens, x, cfg.radius)
    rows = [[r, r + 1, int(table.counts[r]), table.cosh_bounds[r], table.exp_bounds[r]]
            for r in range(len(table.counts))]
    _write_csv(out / "lattice.csv", cfg, ["r_low", "r_high", "count", "cosh_bound", "exp_bound"],
               rows, {"inj_at_base": repr(table.inj_at_base), "violations": table.violations})
    print(f"inj={table.inj_at_base:.12f} counts={table.counts.tolist()} violations={table.violations}")
    return 0 if table.violations == 0 else 1


def cmd_spectrum(cfg, out: Path):
    from .twistedop import assemble_twisted, compute_spectrum, strip_bound
    mesh, _, hf = _mesh_and_form(cfg)
    c = hf.linf_norm
    op = assemble_twisted(mesh, hf.cochain, cfg.h)
    k = min(cfg.k, op.n)
    spec = compute_spectrum(op, k=k, mode=cfg.solver, vectors=False)
    delta = _delta(cfg, c)
    ev = spec.eigenvalues
    extra = {"c": repr(c), "delta": repr(delta), "epsilon": repr(delta / 200.0),
             "solver": spec.metadata["mode"], "tol": spec.metadata["tol"],
             "max_residual": repr(float(spec.residuals.max()))}
    _write_csv(out / "spectrum.csv", cfg, ["re", "im", "residual"],
               [[e.real, e.imag, r] for e, r in zip(ev, spec.residuals)], extra)
    excess = max(abs(e.imag) - strip_bound(c, max(e.real / cfg.h ** 2, 0.0)) * cfg.h ** 2 for e in ev)
    print(f"lambda0={ev[0].real:.12g} c={c:.6g} delta={delta:.6g} strip_excess={excess:.3g}")
    return 0


def cmd_trace(cfg, out: Path):
    from . import fuchsian
    from .traceweyl import trace_residual
    mesh, _, hf = _mesh_and_form(cfg)
    gens = fuchsian.bolza_group()
    reports = [trace_residual(mesh, hf.cochain, hf.periods, t, cfg.quad_level, cfg.trunc,
                              gens=gens).to_dict() for t in cfg.t]
    _write_json(out / "trace.json", cfg, reports)
    for r in reports:
        print(f"t={r['t']:g} spectral={r['spectral_side']:.10g} residual={r['residual']:.3g} "
              f"relative={r['relative_residual']:.3g}")
    return 0


def cmd_weyl(cfg, out: Path):
    from .traceweyl import weyl_report
    from .twistedop import assemble_twisted, compute_spectrum
    mesh, _, hf = _mesh_and_form(cfg)
    op = assemble_twisted(mesh, hf.cochain, 1.0)
    spec = compute_spectrum(op, mode="dense" if cfg.solver == "auto" else cfg.solver,
                            k=None if cfg.solver != "iterative" else cfg.k, vectors=False)
    rep = weyl_report(spec, cfg.a, cfg.b).to_dict()
    _write_json(out / "weyl.json", cfg, rep)
    print(json.dumps(_jsonable(rep), sort_keys=True))
    return 0


def cmd_radial(cfg, out: Path):
    from . import fuchsian
    from .radialform import sample_points, supnorm_bound_check
    mesh, _, hf = _mesh_and_form(cfg)
    if not np.any(cfg.form):
        raise ConfigError("form", "radial needs a nonzero form")
    gens = fuchsian.bolza_group()
    pts = sample_points(gens, cfg.points)
    t = cfg.radial_t
    n = max(fuchsian.primitive_loop_count(gens, complex(p), 2 * t) for p in pts)
    inj = fuchsian.SYSTOLE_EXACT / 2
    rep = supnorm_bound_check(gens, mesh, hf.cochain, t, pts, cfg.radial_quad_level, n, inj)
    rows = [[r.x.real, r.x.imag, r.dF_norm, r.mu_omega, r.ratio, r.bound, str(r.passed).lower()]
            for r in rep.rows]
    extra = {"mu": repr(rep.mu), "n_loops": n, "inj": repr(inj),
             "max_rel_error": repr(rep.max_rel_error), "violations": rep.violations}
    _write_csv(out / "radial.csv", cfg, ["x_re", "x_im", "dF_norm", "mu_omega_norm", "ratio",
                                         "bound", "pass"], rows, extra)
    print(f"mu={rep.mu:.10g} n={n} max_rel_error={rep.max_rel_error:.3g} violations={rep.violations}")
    return 0 if rep.violations == 0 else 1


def cmd_verify_all(cfg, out: Path):
    from .verify import run_all

    def log(c):
        print(f"[{'PASS' if c.passed else 'FAIL'}] criterion {c.criterion:2d}  {c.name}: "
              f"{c.value:.6g} (threshold {c.threshold:.6g})", flush=True)

    checks = run_all(cfg.level, log=log)
    _write_csv(out / "verify_summary.csv", cfg, ["criterion", "check", "value", "threshold", "pass"],
               [[str(c.criterion), c.name.replace(",", ";"), c.value, c.threshold,
                 str(c.passed).lower()] for c in checks])
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return 1 if failed else 0


HANDLERS = {
    "mesh": cmd_mesh, "forms": cmd_forms, "lattice": cmd_lattice, "spectrum": cmd_spectrum,
    "trace": cmd_trace, "weyl": cmd_weyl, "radial": cmd_radial, "verify-all": cmd_verify_all,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bolzalab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value configuration file")
    for f in fields(RunConfig):
        if f.name != "command":
            p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None)
    return p


def resolve_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(command=args.command)
    if args.config:
        cfg = parse_config_text(Path(args.config).read_text(), cfg)
        cfg = dataclasses.replace(cfg, command=args.command)
    updates = {f.name: _parse_value(f.name, getattr(args, f.name)) for f in fields(RunConfig)
               if f.name != "command" and getattr(args, f.name) is not None}
    return dataclasses.replace(cfg, **updates).validate()


def main(argv=None) -> int:
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return HANDLERS[cfg.command](cfg, out)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
