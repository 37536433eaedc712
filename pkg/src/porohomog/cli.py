"""Command-line front end.

    porohomog classify      [--config FILE] [--geometry FILE] [--report FILE]
    porohomog cell WHICH    [--config FILE] [--geometry FILE] [--out DIR] [--skip-checks]
    porohomog macro WHICH   [--report FILE | --synthetic] [--mms] [--n N] [--dim 2|3] ...
    porohomog report-merge  -o OUT IN [IN ...]

``WHICH`` for ``cell`` is one of ``elastic``, ``stokes``, ``unsteady``,
``b3``, ``visco``; for ``macro`` one of ``darcy-steady``,
``darcy-transient``, ``lame``.

Exit codes: 0 success, 1 solver, input or I/O failure, 2 inadmissible
parameters or a limit combination no regime covers, 3 failed
invariant check.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import macro, scaling, tensors
from .cell_elastic import (CellProblemError, assemble_effective_elastic, energy_identity,
                           solve_elastic_cell)
from .cell_fluid import (FluidProblemError, kernel_B1, kernel_integral, permeability_B2,
                         solve_neumann_B3, solve_steady_stokes, solve_unsteady_stokes)
from .config import ConfigError, RunConfig, load_config, parse_config
from .microcell import GeometryError, analyze_connectivity, load_geometry
from .report import Report, ReportError, fmt, read_report, write_kernel_csv
from .solvers import SolverError
from .visco_cell import (PAIRS, ZERO, ViscoBindings, ViscoProblemError, assemble_visco_kernels,
                         default_visco_schedule, initial_energy_identity, solve_visco_evolution)

EXIT_OK, EXIT_FAILURE, EXIT_INADMISSIBLE, EXIT_CHECK = 0, 1, 2, 3

CELL_PROBLEM = {"elastic": "elastic_cell", "stokes": "steady_stokes",
                "unsteady": "unsteady_stokes", "b3": "neumann_B3", "visco": "visco_I"}
CELL_PARAMS = {"elastic": ("lambda0", "eta0"), "stokes": ("mu1",),
               "unsteady": ("mu1", "tau0", "rho_f"), "b3": (),
               "visco": ("mu0", "lambda0", "nu0", "p_star", "eta0")}

LABELS = {
    "A0s": "effective skeleton stiffness, Mandel 6x6",
    "A1s": "skeleton corrector stiffness, Mandel 6x6",
    "B0s": "stress response to skeleton volume change",
    "B1s": "stress response to fluid pressure",
    "C0s": "volume change response to strain",
    "B2": "steady permeability",
    "B1_integral": "time integral of the relaxation kernel",
    "B1_raw_initial": "relaxation kernel at t=0 before projection",
    "B1_projected_initial": "relaxation kernel at t=0 after projection",
    "B3": "inviscid potential-flow matrix",
    "mI_minus_B3": "porosity times identity minus the potential-flow matrix",
    "A2": "instantaneous viscous stiffness, Mandel 6x6",
    "A3": "instantaneous elastic stiffness, Mandel 6x6",
    "A0f": "fluid corrector stiffness, Mandel 6x6",
    "B4": "instantaneous volumetric stress response",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAILURE, f"{self.prog}: error: {message}\n")


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config("")
    if getattr(args, "geometry", None):
        cfg.general["geometry"] = str(Path(args.geometry).resolve())
    return cfg


def _geometry(cfg: RunConfig, required: bool):
    path = cfg.geometry
    if path is None:
        if required:
            raise ConfigError("this command needs a geometry (config key 'geometry' or --geometry)")
        return None, None
    cell = load_geometry(path)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        conn = analyze_connectivity(cell)
    return cell, conn


def _out_dir(cfg: RunConfig, args) -> Path:
    d = Path(args.out) if getattr(args, "out", None) else Path(cfg.get("output", "dir"))
    if not d.is_absolute() and not getattr(args, "out", None):
        d = cfg.base_dir / d
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# regime reporting

def regime_report(regime: scaling.Regime, limits: scaling.LimitSet, rep: Report | None = None,
                  prefix: str = "regime") -> Report:
    rep = rep or Report()
    rep.set(f"{prefix}.tag", regime.tag)
    rep.set(f"{prefix}.cell_problems", ",".join(sorted(regime.required_cell_problems)) or "none")
    if regime.darcy_law:
        rep.set(f"{prefix}.darcy_law", regime.darcy_law)
    if regime.forcing_route:
        rep.set(f"{prefix}.forcing_route", regime.forcing_route)
    r = regime.renormalization
    rep.set(f"{prefix}.displacement_scale.c", r.displacement_scale.c)
    rep.set(f"{prefix}.displacement_scale.a", str(r.displacement_scale.a))
    for k, note in enumerate(r.remappings):
        rep.set(f"{prefix}.remapping.{k}", note)
    for problem in sorted(regime.bindings):
        for key, val in sorted(regime.bindings[problem].items()):
            if val is not None:
                rep.set(f"{prefix}.binding.{problem}.{key}", float(val))
    for k, note in enumerate(regime.notes):
        rep.set(f"{prefix}.note.{k}", note)
    for k, comp in enumerate(regime.companions):
        regime_report(comp, limits, rep, prefix=f"{prefix}.companion.{k}")
    if prefix == "regime":
        for name, val in limits.as_dict().items():
            rep.set(f"limit.{name}", str(val))
    return rep


def _classify(cfg: RunConfig, conn):
    limits = cfg.limits()
    return scaling.classify(limits, conn, cfg.forcing_class), limits


def cmd_classify(args) -> int:
    cfg = _load(args)
    if not cfg.has_scaling:
        raise ConfigError("classify needs alpha_* or limit.* keys in [scaling]")
    _, conn = _geometry(cfg, required=False)
    regime, limits = _classify(cfg, conn)
    rep = regime_report(regime, limits)
    if conn is not None:
        rep.set("connectivity.pores_isolated", conn.pores_isolated)
    text = rep.to_text()
    sys.stdout.write(text)
    if args.report:
        rep.write(args.report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# cell problems

def _find_binding(regime: scaling.Regime, problem: str):
    if problem in regime.bindings:
        return regime.bindings[problem]
    for comp in regime.companions:
        found = _find_binding(comp, problem)
        if found is not None:
            return found
    return None


def resolve_bindings(cfg: RunConfig, which: str, conn, rep: Report) -> dict:
    """Cell-problem parameters from the classified regime, then ``bind.*`` overrides."""
    values = {}
    if cfg.has_scaling:
        regime, limits = _classify(cfg, conn)
        regime_report(regime, limits, rep)
        found = _find_binding(regime, CELL_PROBLEM[which])
        if found is None and CELL_PARAMS[which] and not cfg.bindings():
            raise ConfigError(f"regime {regime.tag} does not use the {which} cell problem; "
                              "give bind.* overrides to run it anyway")
        values.update({k: v for k, v in (found or {}).items() if v is not None})
    values.update(cfg.bindings())
    if which == "unsteady" and "rho_f" not in values:
        values["rho_f"] = cfg.scaling.get("rho_f", 1.0)
    missing = [k for k in CELL_PARAMS[which] if k not in values]
    if missing:
        raise ConfigError(f"missing cell parameters {', '.join(missing)} "
                          "(give [scaling] exponents or bind.* keys)")
    return {k: float(values[k]) for k in CELL_PARAMS[which]}


class _Checks:
    def __init__(self, rep: Report):
        self.rep = rep
        self.failed = []

    def add(self, name: str, passed: bool, value=None):
        self.rep.set(f"check.{name}", "pass" if passed else "fail")
        if value is not None:
            self.rep.set(f"check.{name}.value", float(value))
        if not passed:
            self.failed.append(name)


def _rel_asym(M, ref: float = 0.0) -> float:
    """Asymmetry relative to the larger of the entries and a natural scale ``ref``."""
    M = np.asarray(M, dtype=float)
    return tensors.asymmetry(M) / max(np.abs(M).max(), ref, 1e-300)


def _min_eig(M) -> float:
    M = np.asarray(M, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def _block(rep: Report, name: str, M):
    if M is None:
        rep.set(f"{name}", "not-applicable")
        return
    rep.block(name, M)
    if name in LABELS:
        rep.set(f"label.{name}", LABELS[name])


def _cell_elastic(cell, conn, b, cfg, rep, checks, out, prefix):
    tol = cfg.get("solver", "tol")
    sol = solve_elastic_cell(cell, b["lambda0"], b["eta0"], tol=tol,
                             method=cfg.get("solver", "method"))
    eff = assemble_effective_elastic(sol, cfg.scaling.get("rho_f"), cfg.scaling.get("rho_s"))
    for name in ("A0s", "A1s", "B0s", "C0s", "B1s"):
        _block(rep, name, getattr(eff, name))
    for name in ("a0s", "a1s", "a2s", "m", "rho_hat"):
        val = getattr(eff, name)
        rep.set(name, "not-applicable" if val is None else float(val))
    rep.set("flag.a2s_excluded_from_macro_set", True)
    rep.set("solver.elastic.iterations", int(sum(sum(v) if isinstance(v, list) else v
                                         for v in sol.iterations.values())))
    rep.set("solver.elastic.max_residual", float(max(sol.residuals.values())))
    ct = cfg.get("solver", "check_tol")
    asym = _rel_asym(eff.A0s)
    checks.add("A0s_symmetric", asym <= ct, asym)
    margin = _min_eig(eff.A0s)
    checks.add("A0s_positive_definite", margin > 0, margin)
    lhs, rhs = energy_identity(sol)
    err = float(np.abs(lhs - rhs).max() / max(np.abs(lhs).max(), 1e-300))
    checks.add("energy_identity", err <= 1e-6, err)


def _cell_stokes(cell, conn, b, cfg, rep, checks, out, prefix):
    if cell.porosity == 0:
        print("warning: cell has no fluid; permeability is zero", file=sys.stderr)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = solve_steady_stokes(cell, b["mu1"], tol=cfg.get("solver", "tol"),
                                  method=cfg.get("solver", "method"))
    B2 = permeability_B2(sol)
    _block(rep, "B2", B2)
    rep.set("flag.fluid_average", "zero-extended cell average")
    rep.set("solver.stokes.max_residual", float(max(sol.residuals.values(), default=0.0)))
    _fluid_checks(checks, "B2", B2, conn, cfg, ref=0.0)


def _fluid_checks(checks, name, M, conn, cfg, ref):
    ct = cfg.get("solver", "check_tol")
    asym = _rel_asym(M, ref)
    checks.add(f"{name}_symmetric", asym <= ct, asym)
    scale = max(np.abs(M).max(), ref, 1e-300)
    eig = _min_eig(M)
    checks.add(f"{name}_positive_semidefinite", eig >= -ct * scale, eig)
    if conn is not None and all(conn.fluid_wraps):
        checks.add(f"{name}_positive_definite", eig > ct * scale, eig)


def _cell_unsteady(cell, conn, b, cfg, rep, checks, out, prefix):
    sol = solve_unsteady_stokes(cell, b["mu1"], b["tau0"], b["rho_f"],
                                tol=cfg.get("solver", "tol"), method=cfg.get("solver", "method"),
                                decay=cfg.get("schedule", "decay"),
                                scheme=cfg.get("schedule", "scheme"),
                                schedule=_schedule(cfg, lambda: None))
    kernel = kernel_B1(sol)
    path = out / f"{prefix}_B1.csv"
    write_kernel_csv(path, "B", kernel)
    rep.set("kernel.B1.file", path.name)
    rep.set("kernel.B1.samples", len(kernel))
    _block(rep, "B1_raw_initial", sol.raw_initial)
    _block(rep, "B1_projected_initial", sol.projected_initial)
    integral = kernel_integral(kernel)
    _block(rep, "B1_integral", integral)
    rep.set("solver.unsteady.divergence_residual", float(sol.divergence_residual))
    ct = cfg.get("solver", "check_tol")
    ref = np.abs(sol.raw_initial).max()
    worst = max(_rel_asym(B, ref) for _, B in kernel)
    checks.add("B1_symmetric", worst <= ct, worst)
    # the integral can never exceed the largest sample times the sampled span
    span = ref * (kernel[-1][0] - kernel[0][0])
    _fluid_checks(checks, "B1_integral", integral, conn, cfg, ref=span)


def _cell_b3(cell, conn, b, cfg, rep, checks, out, prefix):
    _, B3, rest = solve_neumann_B3(cell, tol=cfg.get("solver", "tol"))
    _block(rep, "B3", B3)
    _block(rep, "mI_minus_B3", rest)
    rep.set("flag.fluid_average", "zero-extended cell average")
    ct = cfg.get("solver", "check_tol")
    asym = _rel_asym(B3, cell.porosity)
    checks.add("B3_symmetric", asym <= ct, asym)
    _fluid_checks(checks, "mI_minus_B3", rest, conn, cfg, ref=cell.porosity)


def _schedule(cfg: RunConfig, default):
    first = cfg.schedule.get("first")
    if first is None:
        return default()
    return first * cfg.get("schedule", "ratio") ** np.arange(cfg.get("schedule", "max_steps"))


def _cell_visco(cell, conn, b, cfg, rep, checks, out, prefix):
    bindings = ViscoBindings(b["mu0"], b["lambda0"], b["nu0"], b["p_star"], b["eta0"])
    families = list(PAIRS)
    if math.isfinite(b["p_star"]) or math.isfinite(b["eta0"]):
        families.append(ZERO)
    schedule = _schedule(cfg, lambda: default_visco_schedule(
        bindings, ratio=cfg.get("schedule", "ratio"), max_steps=cfg.get("schedule", "max_steps")))
    sol = solve_visco_evolution(cell, bindings, schedule, tol=cfg.get("solver", "tol"),
                                method=cfg.get("solver", "method"), families=families,
                                stall=cfg.get("schedule", "stall"),
                                substeps=cfg.get("schedule", "substeps"))
    ks = assemble_visco_kernels(sol)
    for name in ("A2", "A3", "A0f", "B4"):
        _block(rep, name, getattr(ks, name))
    rep.set("m", float(ks.m))
    rep.set("flag.A3_checked_for_definiteness", True)
    exports = [("A4", ks.A4_kernel, tensors.VOIGT_LABELS), ("C2", ks.C2_kernel, None),
               ("C3", ks.C3_kernel, None), ("B5", ks.B5_kernel, None),
               ("a2", ks.a2_kernel, None), ("a3", ks.a3_kernel, None)]
    for name, kernel, lab in exports:
        if kernel is None:
            rep.set(f"kernel.{name}", "not-applicable")
            continue
        path = out / f"{prefix}_{name}.csv"
        write_kernel_csv(path, name, kernel, lab)
        rep.set(f"kernel.{name}.file", path.name)
    rep.set("kernel.samples", int(ks.times.size))
    ct = cfg.get("solver", "check_tol")
    asym = _rel_asym(ks.A2, b["mu0"])
    checks.add("A2_symmetric", asym <= ct, asym)
    a3 = _min_eig(ks.A3)
    checks.add("A3_positive_definite", a3 > 0, a3)
    if conn is not None and conn.pores_isolated:
        norm = float(np.abs(ks.A2).max())
        checks.add("A2_vanishes", norm <= 1e-6 * b["mu0"], norm)
    elif conn is not None and all(conn.fluid_wraps):
        checks.add("A2_positive_definite", _min_eig(ks.A2) > 0, _min_eig(ks.A2))
    lhs, rhs = initial_energy_identity(sol)
    err = float(np.abs(lhs - rhs).max() / max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-300))
    checks.add("initial_energy_identity", err <= 1e-5, err)


CELL_RUNNERS = {"elastic": _cell_elastic, "stokes": _cell_stokes, "unsteady": _cell_unsteady,
                "b3": _cell_b3, "visco": _cell_visco}


def _finish(rep: Report, checks: _Checks, path: Path, skip: bool) -> int:
    rep.set("checks.failed", ",".join(checks.failed) or "none")
    rep.write(path)
    print(f"report written to {path}")
    if checks.failed:
        msg = f"invariant checks failed: {', '.join(checks.failed)}"
        if skip:
            print(f"warning: {msg}", file=sys.stderr)
            return EXIT_OK
        print(msg, file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_cell(args) -> int:
    cfg = _load(args)
    cell, conn = _geometry(cfg, required=True)
    rep = Report()
    params = resolve_bindings(cfg, args.which, conn, rep)
    rep.set("command", f"cell {args.which}")
    rep.set("geometry.dims", "x".join(str(n) for n in cell.dims))
    rep.set("geometry.porosity", float(cell.porosity))
    rep.set("connectivity.fluid_connected", conn.fluid_connected)
    rep.set("connectivity.pores_isolated", conn.pores_isolated)
    rep.set("connectivity.fluid_wraps", ",".join("1" if w else "0" for w in conn.fluid_wraps))
    for k, v in params.items():
        rep.set(f"binding.{k}", v)
    rep.set("solver.tol", float(cfg.get("solver", "tol")))
    rep.set("solver.method", cfg.get("solver", "method"))
    rep.set("seed", int(cfg.seed))
    out = _out_dir(cfg, args)
    prefix = f"{cfg.get('output', 'prefix')}_{args.which}"
    checks = _Checks(rep)
    CELL_RUNNERS[args.which](cell, conn, params, cfg, rep, checks, out, prefix)
    return _finish(rep, checks, out / f"{prefix}.rpt", args.skip_checks)


# ---------------------------------------------------------------------------
# macro solvers

def _coefficients(args):
    if args.synthetic:
        return None
    if not args.report:
        raise ConfigError("macro commands need --report FILE or --synthetic coefficients")
    return read_report(args.report)


def _gravity(dim: int, g: float):
    def F(X):
        out = np.zeros(X.shape)
        out[..., dim - 1] = -g
        return out
    return F


def _write_vector_fields(out: Path, prefix: str, name: str, points, field_arr):
    for a in range(field_arr.shape[0]):
        macro.write_field_csv(out / f"{prefix}_{name}_{'xyz'[a]}.csv", f"{name}_{'xyz'[a]}",
                              points, field_arr[a])


def _mms(rep: Report, checks: _Checks, name: str, result):
    ns, errors, orders = result
    print(f"{'n':>6} {'L2 error':>24} {'order':>8}")
    for k, (n, e) in enumerate(zip(ns, errors)):
        o = f"{orders[k - 1]:8.4f}" if k else " " * 8
        print(f"{n:>6} {fmt(e):>24} {o}")
    rep.block(f"mms.{name}", np.column_stack([ns, errors]))
    rep.set(f"mms.{name}.orders", ",".join(fmt(o) for o in orders))
    checks.add(f"mms_{name}_order", all(1.8 <= o <= 2.2 for o in orders), min(orders))


def _macro_darcy_steady(args, coeffs, rep, checks, out, prefix, cfg):
    if args.mms:
        _mms(rep, checks, "darcy", macro.darcy_convergence(dim=args.dim))
        return
    K = _darcy_K(coeffs, args)
    F = _gravity(args.dim, args.gravity) if args.gravity else None
    st = macro.solve_darcy_steady(K, F=F, n=args.n, dim=args.dim, rho_f=args.rho_f)
    pts = st.grid.centres()
    macro.write_field_csv(out / f"{prefix}_q.csv", "q", pts, st.q)
    _write_vector_fields(out, prefix, "v", pts, st.v)
    rep.set("boundary_flux", st.boundary_flux)
    checks.add("no_flux", st.boundary_flux <= 1e-12, st.boundary_flux)


def _darcy_K(coeffs, args):
    if coeffs is None:
        return np.eye(args.dim)
    for name in ("K", "B2", "B1_integral", "mI_minus_B3"):
        if name in coeffs.blocks:
            return coeffs.blocks[name][:args.dim, :args.dim]
    raise ConfigError("report has no permeability block (K, B2, B1_integral or mI_minus_B3)")


def _macro_darcy_transient(args, coeffs, rep, checks, out, prefix, cfg):
    K = _darcy_K(coeffs, args)
    F = _gravity(args.dim, args.gravity) if args.gravity else None
    times = np.linspace(args.t_end / args.steps, args.t_end, args.steps)
    p0 = None
    if args.initial == "cosine":
        p0 = lambda X: np.prod(np.cos(np.pi * X), axis=-1)  # noqa: E731
    series = macro.solve_darcy_transient(K, F=F, p_star=args.p_star, nu0=args.nu0,
                                         rho_f=args.rho_f, schedule=times, n=args.n,
                                         dim=args.dim, p0=p0)
    rep.block("energy", np.column_stack([series.times, series.energy, series.mass]))
    rep.set("energy.columns", "t,energy,mass")
    pts = series.grid.centres()
    macro.write_field_csv(out / f"{prefix}_p.csv", "p", pts, series.p[-1])
    macro.write_field_csv(out / f"{prefix}_q.csv", "q", pts, series.q[-1])
    if F is None:
        e = series.energy
        ok = bool(np.all(e[1:] <= e[:-1] * (1 + 1e-12) + 1e-300))
        checks.add("energy_non_increasing", ok)


def _effective_from_report(coeffs):
    if coeffs is None:
        return macro.synthetic_effective_set(), 1.0
    blocks, ent = coeffs.blocks, coeffs.entries
    if "A0s" not in blocks:
        raise ConfigError("report has no A0s block")

    def num(key, default):
        v = ent.get(key)
        return default if v is None or isinstance(v, str) else float(v)

    eff = macro.synthetic_effective_set(
        A0s=blocks["A0s"], B0s=blocks.get("B0s"), C0s=blocks.get("C0s"), B1s=blocks.get("B1s"),
        a0s=num("a0s", 0.0), a1s=num("a1s", 0.0), rho_hat=num("rho_hat", 1.0))
    eta = num("regime.companion.0.binding.elastic_cell.eta0", None)
    if eta is None:
        eta = num("binding.eta0", 1.0)
    return eff, eta


def _macro_lame(args, coeffs, rep, checks, out, prefix, cfg):
    eff, eta2 = _effective_from_report(coeffs)
    if args.eta2 is not None:
        eta2 = args.eta2
    rep.set("binding.eta2", float(eta2))
    rep.set("flag.pi_convention", "stress carries -(q + pi) I; pi is fixed up to a function of time "
            "by its constitutive law")
    if args.mms:
        _mms(rep, checks, "lame", macro.lame_convergence(eff, eta2, dim=args.dim))
        return
    F = _gravity(args.dim, args.gravity) if args.gravity else None
    q = (lambda X: np.full(X.shape[:-1], args.q)) if args.q else None  # noqa: E731
    sol = macro.solve_lame_static(eff, q=q, F=F, eta2=eta2, n=args.n, dim=args.dim)
    nodes = sol.grid.nodes()
    _write_vector_fields(out, prefix, "u", nodes, sol.u)
    macro.write_field_csv(out / f"{prefix}_pi.csv", "pi", sol.grid.centres(), sol.pi)
    rep.set("solver.lame.residual", sol.residual)
    rng = np.random.default_rng(cfg.seed)
    A = sol.matrix
    worst = math.inf
    for _ in range(4):
        x = rng.standard_normal(A.shape[0])
        worst = min(worst, float(x @ (A @ x)) / float(x @ x))
    checks.add("lame_coercivity", worst > 0, worst)


MACRO_RUNNERS = {"darcy-steady": _macro_darcy_steady, "darcy-transient": _macro_darcy_transient,
                 "lame": _macro_lame}


def cmd_macro(args) -> int:
    cfg = _load(args)
    coeffs = _coefficients(args)
    rep = Report()
    rep.set("command", f"macro {args.which}")
    rep.set("grid.n", args.n)
    rep.set("grid.dim", args.dim)
    rep.set("coefficients", "synthetic" if coeffs is None else Path(args.report).name)
    out = _out_dir(cfg, args)
    prefix = f"{cfg.get('output', 'prefix')}_{args.which.replace('-', '_')}"
    checks = _Checks(rep)
    MACRO_RUNNERS[args.which](args, coeffs, rep, checks, out, prefix, cfg)
    return _finish(rep, checks, out / f"{prefix}.rpt", args.skip_checks)


def cmd_report_merge(args) -> int:
    merged = Report()
    for path in args.inputs:
        merged = merged.merge(read_report(path), strict=not args.overwrite)
    merged.write(args.output)
    print(f"merged {len(args.inputs)} reports into {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="porohomog", description="Periodic poroelastic homogenization toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--geometry", help="cell geometry file (overrides the config)")
    common.add_argument("--out", help="output directory (overrides [output] dir)")
    common.add_argument("--skip-checks", action="store_true",
                        help="report failed invariant checks as warnings")

    p = sub.add_parser("classify", parents=[common], help="classify the homogenized regime")
    p.add_argument("--report", help="also write the classification to this .rpt file")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("cell", parents=[common], help="solve cell problems")
    p.add_argument("which", choices=sorted(CELL_RUNNERS))
    p.set_defaults(func=cmd_cell)

    p = sub.add_parser("macro", parents=[common], help="macroscale demonstration solvers")
    p.add_argument("which", choices=sorted(MACRO_RUNNERS))
    p.add_argument("--report", help="coefficient report to read")
    p.add_argument("--synthetic", action="store_true", help="use identity coefficients")
    p.add_argument("--mms", action="store_true", help="run the manufactured-solution study")
    p.add_argument("--n", type=int, default=16, help="cells per side")
    p.add_argument("--dim", type=int, choices=(2, 3), default=3)
    p.add_argument("--gravity", type=float, default=0.0, help="uniform body force magnitude")
    p.add_argument("--rho-f", dest="rho_f", type=float, default=1.0)
    p.add_argument("--p-star", dest="p_star", type=float, default=1.0)
    p.add_argument("--nu0", type=float, default=0.0)
    p.add_argument("--t-end", dest="t_end", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--initial", choices=("zero", "cosine"), default="zero")
    p.add_argument("--eta2", type=float, default=None)
    p.add_argument("--q", type=float, default=0.0, help="uniform fluid pressure for lame")
    p.set_defaults(func=cmd_macro)

    p = sub.add_parser("report-merge", help="merge coefficient reports")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--overwrite", action="store_true", help="later reports win on conflicts")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_report_merge)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = 1
    if getattr(args, "config", None):
        try:
            threads = load_config(args.config).get("general", "threads")
        except ConfigError:
            threads = 1
    try:
        with threadpool_limits(limits=threads):
            return args.func(args)
    except (scaling.InadmissibleParameters, scaling.OutsideCoverage) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INADMISSIBLE
    except (ConfigError, GeometryError, ReportError, SolverError, CellProblemError,
            FluidProblemError, ViscoProblemError, macro.MacroError, scaling.ScalingError,
            OSError) as exc:
        label = getattr(exc, "label", None)
        where = f" [{label}]" if label else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
