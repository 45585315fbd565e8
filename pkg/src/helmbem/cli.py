"""Command-line entry point.

Subcommands: study | solve | assemble | modes | probe | selftest.
Configuration is flat key=value text (comments with '#'), overridable by
flags.  Exit codes: 0 success, 1 study verdict failure, 2 usage error,
3 numerical/capacity error.
"""

import argparse
import json
import os
import re
import sys

import numpy as np

from . import analytic, assembly, geometry, krylov, probes, specfun, studies
from .errors import (AssemblyError, CapacityError, DomainError, NumericalError,
                     PrecisionError, SingularityError, UnsupportedError)

_HELMBEM_ERRORS = (AssemblyError, CapacityError, DomainError, NumericalError,
                   PrecisionError, SingularityError, UnsupportedError)

EXIT_OK = 0
EXIT_VERDICT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    """Bad configuration key or value (a usage error, exit code 2)."""


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    if isinstance(x, complex):
        return f"{x.real:.17g}{x.imag:+.17g}j"
    return str(x)


def parse_eta(text: str, key: str = "eta") -> float:
    """Coupling rule -> multiplier c in eta = c*k.  Accepts k | -k | <real>k | 0."""
    t = text.strip().lower().replace("*", "").replace("·", "")
    if t in ("k", "+k"):
        return 1.0
    if t == "-k":
        return -1.0
    if t.endswith("k"):
        t = t[:-1]
    try:
        return float(t)
    except ValueError:
        raise ConfigError(f"config key '{key}': cannot parse coupling rule '{text}'") from None


def parse_k_list(text: str, key: str = "k_list") -> tuple:
    try:
        return tuple(float(p) for p in re.split(r"[,\s]+", text.strip()) if p)
    except ValueError:
        raise ConfigError(f"config key '{key}': cannot parse k list '{text}'") from None


def read_config(path: str) -> dict:
    out = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for i, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{i}: expected key=value, got '{raw.strip()}'")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


_CONFIG_KEYS = {
    "study": str,
    "geometry": str,
    "k_list": parse_k_list,
    "ppw": float,
    "mesh_rule": str,
    "eta": parse_eta,
    "tol": float,
    "maxit": int,
    "threads": int,
    "n_angles": int,
    "hk43_ref_k": float,
    "hk43_ref_dof": int,
    "probe_epsilon": float,
    "probe_m": float,
    # curve shape parameters (forwarded to the geometry factory)
    "radius": float,
    "a1": float,
    "a2": float,
}

_SHAPE_KEYS = ("radius", "a1", "a2")


def build_study_config(mapping: dict) -> studies.StudyConfig:
    kwargs = {}
    for key, val in mapping.items():
        norm = key.strip().lower()
        if norm not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key '{key}'")
        conv = _CONFIG_KEYS[norm]
        try:
            parsed = conv(val, norm) if conv in (parse_eta, parse_k_list) else conv(val)
        except ConfigError:
            raise
        except (TypeError, ValueError):
            raise ConfigError(f"config key '{key}': bad value '{val}'") from None
        field = {"eta": "eta_mult", "probe_m": "probe_M"}.get(norm, norm)
        kwargs[field] = parsed
    shape = {k: kwargs.pop(k) for k in _SHAPE_KEYS if k in kwargs}
    if shape:
        kwargs["geometry_params"] = shape
    if "study" not in kwargs:
        raise ConfigError("config key 'study' is required")
    try:
        return studies.StudyConfig(**kwargs)
    except (DomainError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def emit_report(report: studies.StudyReport, out_dir: str) -> list:
    """Write report.json, table.csv, and plot_*.csv under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=1)
    written.append(path)

    rows = report.rows
    path = os.path.join(out_dir, "table.csv")
    with open(path, "w") as f:
        if rows:
            cols = [c for c in rows[0] if not isinstance(rows[0][c], (list, dict))]
            f.write(",".join(cols) + "\n")
            for r in rows:
                f.write(",".join(_fmt(r.get(c, "")) for c in cols) + "\n")
    written.append(path)

    for name, fit in report.fits.items():
        ks = fit.get("k_points", [])
        vals = fit.get("value_points", [])
        if not ks:
            continue
        fname = "plot_" + re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_") + ".csv"
        path = os.path.join(out_dir, fname)
        with open(path, "w") as f:
            f.write("log10_k,log10_value\n")
            for k, v in zip(ks, vals):
                if v > 0:
                    f.write(f"{np.log10(k):.17g},{np.log10(v):.17g}\n")
        written.append(path)
    return written


def _add_common(p):
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--geometry", default=None)
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--k-list", dest="k_list", default=None)
    p.add_argument("--eta", default=None, help="k | -k | <real>k | 0")
    p.add_argument("--ppw", type=float, default=None)
    p.add_argument("--mesh-rule", dest="mesh_rule", choices=("hk", "hk43", "both"),
                   default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--maxit", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)


def _make_parser():
    ap = argparse.ArgumentParser(prog="helmbem",
                                 description="2-D Helmholtz exterior-Dirichlet BEM laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("study", help="run a study and emit report files")
    ps.add_argument("--config", default=None, help="flat key=value config file")
    ps.add_argument("--study", default=None, choices=studies.STUDY_KINDS)
    _add_common(ps)

    pv = sub.add_parser("solve", help="one scattering solve; prints dof/iterations/error")
    _add_common(pv)

    pa = sub.add_parser("assemble", help="assemble one operator and dump it")
    pa.add_argument("--kind", required=True,
                    choices=("SLP", "DLP", "ADLP", "CFIE_direct", "CFIE_indirect"))
    _add_common(pa)

    pm = sub.add_parser("modes", help="export the circle mode table as CSV")
    pm.add_argument("--radius", type=float, default=1.0)
    _add_common(pm)

    pp = sub.add_parser("probe", help="sharpness probe sweep")
    pp.add_argument("--probe-geometry", dest="probe_geometry",
                    choices=("segment", "parabola"), default="segment")
    pp.add_argument("--derivative", action="store_true")
    _add_common(pp)

    sub.add_parser("selftest", help="run the quick built-in consistency suite")
    return ap


def _threads_from(args) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("HBL_THREADS")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"HBL_THREADS: bad value '{env}'") from None
    return 1


def _cmd_study(args) -> int:
    mapping = read_config(args.config) if args.config else {}
    if args.study:
        mapping["study"] = args.study
    for key, attr in (("geometry", "geometry"), ("k_list", "k_list"), ("eta", "eta"),
                      ("ppw", "ppw"), ("mesh_rule", "mesh_rule"), ("tol", "tol"),
                      ("maxit", "maxit"), ("threads", "threads")):
        v = getattr(args, attr, None)
        if v is not None:
            mapping[key] = v if isinstance(v, str) else _fmt(v)
    if args.k is not None:
        mapping["k_list"] = _fmt(args.k)
    if "threads" not in mapping:
        mapping["threads"] = str(_threads_from(args))
    cfg = build_study_config(mapping)
    report = studies.run_study(cfg)
    out = args.out or "out"
    files = emit_report(report, out)
    n_fail = sum(1 for v in report.verdicts if not v["passed"])
    for v in report.verdicts:
        status = "pass" if v["passed"] else "FAIL"
        print(f"[{status}] {v['criterion']}: observed {v['observed']} target {v['target']} {v['detail']}")
    print(f"report written: {', '.join(files)}")
    return EXIT_OK if n_fail == 0 else EXIT_VERDICT_FAIL


def _cmd_solve(args) -> int:
    k = args.k if args.k is not None else 16.0
    geom = args.geometry or "circle"
    eta = parse_eta(args.eta or "k") * k
    row, mesh, op, trace = studies.solve_once(
        geom, k, ppw=args.ppw or 10.0, eta=eta, tol=args.tol or 1e-5,
        maxit=args.maxit, threads=_threads_from(args))
    rel = row.get("rel_err")
    print(f"dof={row['dof']} iterations={row['iterations']} converged={row['converged']}"
          + (f" rel_mie_error={rel:.6g}" if rel is not None else ""))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        krylov.residuals_csv(trace, os.path.join(args.out, "residuals.csv"))
        print(f"residual history written to {os.path.join(args.out, 'residuals.csv')}")
    return EXIT_OK


def _cmd_assemble(args) -> int:
    k = args.k if args.k is not None else 16.0
    geom = args.geometry or "circle"
    mesh = geometry.build_mesh(geometry.make_curve(geom), k, args.ppw or 10.0)
    threads = _threads_from(args)
    if args.kind in ("SLP", "DLP", "ADLP"):
        op = assembly.assemble(args.kind, mesh, k, threads=threads)
    else:
        eta = parse_eta(args.eta or "k") * k
        maker = (assembly.combined_direct if args.kind == "CFIE_direct"
                 else assembly.combined_indirect)
        op = maker(mesh, k, eta, threads=threads)
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    base = os.path.join(out, f"{args.kind.lower()}_k{k:g}_dof{mesh.dof}")
    paths = assembly.dump_operator(op, base)
    print("wrote", *paths)
    return EXIT_OK


def _cmd_modes(args) -> int:
    k = args.k if args.k is not None else 16.0
    table = analytic.mode_table(k, args.radius)
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    path = analytic.mode_table_csv(table, os.path.join(out, f"modes_k{k:g}.csv"))
    print("wrote", path)
    return EXIT_OK


def _cmd_probe(args) -> int:
    ks = parse_k_list(args.k_list or "32,64,128,256")
    fit = probes.probe_exponent_fit(args.probe_geometry, args.derivative, ks)
    print(f"slope={fit['slope']:.4f} stderr={fit['stderr']:.4f} theory={fit['theory']:+.4f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = probes.probe_sweep_csv([fit], os.path.join(args.out, "probe.csv"))
        print("wrote", path)
    return EXIT_OK


def _selftest() -> int:
    """Quick consistency suite over the trivially-checkable contracts."""
    checks = []

    def check(name, fn):
        try:
            ok = bool(fn())
        except Exception as exc:  # a failing check, not a crash of the suite
            checks.append((name, False, f"{type(exc).__name__}: {exc}"))
            return
        checks.append((name, ok, ""))

    check("bessel_j(0, 1e-12) == 1", lambda: abs(specfun.bessel_j(0, 1e-12) - 1.0) < 1e-9)
    check("hankel symmetry H_{-3} = -H_3",
          lambda: abs(specfun.hankel_h1(-3, 2.0).value + specfun.hankel_h1(3, 2.0).value) < 1e-14)
    check("wronskian at n=3, x=5",
          lambda: abs(specfun.bessel_j(3, 5.0) * specfun.hankel_h1(3, 5.0).derivative
                      - (specfun.bessel_j(2, 5.0) - (3 / 5) * specfun.bessel_j(3, 5.0))
                      * specfun.hankel_h1(3, 5.0).value - 2j / (np.pi * 5.0)) < 1e-12)
    check("green scale invariance",
          lambda: abs(specfun.green_2d(2.0, 0.5) - specfun.green_2d(1.0, 1.0)) < 1e-15)
    check("dlp kernel vanishes tangentially",
          lambda: abs(specfun.dlp_kernel_2d(1.0, (2.0, 0.0), (1.0, 0.0), (0.0, 1.0))) == 0.0)
    check("adlp transpose relation",
          lambda: abs(specfun.adlp_kernel_2d(3.0, (0.2, 1.0), (1.1, -0.4), (0.6, 0.8))
                      - specfun.dlp_kernel_2d(3.0, (1.1, -0.4), (0.2, 1.0), (0.6, 0.8))) < 1e-15)

    mesh = geometry.build_mesh(geometry.circle(1.0), 10.0, 10.0)
    check("circle mesh dof = 100", lambda: mesh.dof == 100)
    check("mesh shape regularity", lambda: mesh.shape_regularity() <= 1.5)
    check("constant best-approx ~ 0",
          lambda: geometry.best_approx_error(mesh, lambda p: np.ones(p.shape[:-1])) < 1e-6)

    small = geometry.build_mesh(geometry.circle(1.0), 5.0, 10.0)
    S = assembly.assemble("SLP", small, 5.0)
    D = assembly.assemble("DLP", small, 5.0)
    Dp = assembly.assemble("ADLP", small, 5.0)
    scale = np.abs(S.matrix).max()
    check("SLP symmetry", lambda: np.abs(S.matrix - S.matrix.T).max() / scale < 1e-10)
    check("ADLP = DLP^T", lambda: np.abs(Dp.matrix - D.matrix.T).max() / np.abs(D.matrix).max() < 1e-10)
    A0 = assembly.combined_direct(small, 5.0, 0.0, slp=S, adlp=Dp)
    check("eta = 0 combined identity",
          lambda: np.abs(A0.matrix - (np.diag(0.5 * small.mass) + Dp.matrix)).max() == 0.0)
    Tm = assembly.tangential_derivative_matrix(small)
    check("stencil kills constants", lambda: np.abs(Tm @ np.ones(small.dof)).max() < 1e-12)

    tr = krylov.gmres(np.eye(3, dtype=complex), np.array([1.0, 2.0, 3.0]), tol=1e-10)
    check("gmres identity in one step", lambda: tr.iterations == 1 and tr.converged)
    tr2 = krylov.gmres(np.diag([1.0, 2.0]).astype(complex), np.array([1.0, 1.0]), tol=1e-12)
    check("gmres diag(1,2) in two steps", lambda: tr2.iterations == 2 and tr2.converged)
    check("gamma(pi/3) = 2 sin(pi/10)",
          lambda: abs(krylov.gamma_of_beta(np.pi / 3) - 2 * np.sin(np.pi / 10)) < 1e-14)

    tab = analytic.mode_table(8.0, 1.0)
    check("mode conjugate symmetry",
          lambda: tab.eigenvalue("SLP", -5) == tab.eigenvalue("SLP", 5))
    check("probe linearity (cutoff shape-free ratios)",
          lambda: probes.bump(0.5) == 1.0 and probes.bump(2.5) == 0.0)

    failed = 0
    for name, ok, info in checks:
        print(f"[{'pass' if ok else 'FAIL'}] {name}" + (f"  ({info})" if info else ""))
        failed += 0 if ok else 1
    print(f"selftest: {len(checks) - failed}/{len(checks)} passed")
    return EXIT_OK if failed == 0 else EXIT_VERDICT_FAIL


def parse_and_dispatch(argv) -> int:
    ap = _make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        if args.command == "study":
            return _cmd_study(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "assemble":
            return _cmd_assemble(args)
        if args.command == "modes":
            return _cmd_modes(args)
        if args.command == "probe":
            return _cmd_probe(args)
        if args.command == "selftest":
            return _selftest()
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _HELMBEM_ERRORS as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
