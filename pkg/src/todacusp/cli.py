"""Batch driver: solve / classify / diagnose / degenerate / dehn / plot-data.

Each run is driven by a configuration file, writes its artifacts into an
output directory, and always leaves a ``report.json`` — also on failure,
with the failing stage named.  All pipelines are seed-free and
deterministic, so rerunning the same configuration reproduces the output
bytes exactly.  Every artifact carries the schema version and the SHA-256
of the configuration it came from.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 invariant violation (e.g. W <= 0), 1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import (COMMANDS, SCHEMA_VERSION, ConfigError, build_cross_section,
                     load_config, phi_expression)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INVARIANT = 4


class InvariantViolation(RuntimeError):
    """A structural invariant failed and --strict made it fatal."""


# ---------------------------------------------------------------------------
# artifact writers

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))           # shortest round-trip decimal


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_csv(path, columns, rows, sha):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        fh.write(f"# config_sha256={sha}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, payload, sha):
    doc = {"schema_version": SCHEMA_VERSION, "config_sha256": sha}
    doc.update(_jsonable(payload))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_field_csv(path, field, sha):
    """A ScalarField as CSV: one row per t-node, columns t, xi, dof values."""
    cols = ["t", "xi"] + [f"f{j}" for j in range(field.values.shape[1])]
    xi = field.xi if field.xi is not None else field.t
    rows = [[field.t[i], xi[i], *field.values[i]] for i in range(len(field.t))]
    write_csv(path, cols, rows, sha)


# ---------------------------------------------------------------------------
# pipelines

def _solve_common(cfg):
    from .solver import BvpSpec, solve_bvp

    cs = build_cross_section(cfg)
    bvp_id = cfg.get("bvp", "id", required=True)
    phi = phi_expression(cfg.get("bvp", "phi", "0"), cs)
    a = cfg.get_float("bvp", "a")
    spec = BvpSpec(bvp_id, cs, phi, a=a)
    T = cfg.get_float("grid", "T", required=True)
    n_t = cfg.get_int("grid", "n_t", required=True)
    fd_order = cfg.get_int("grid", "fd_order", 4)
    tol = cfg.get_float("grid", "tol_newton")
    kw = {"fd_order": fd_order}
    if tol is not None:
        kw["tol_newton"] = tol
    u, v, rep = solve_bvp(spec, T, n_t, **kw)
    return cs, spec, u, v, rep, kw


def run_solve(cfg, out, strict):
    from .curvature import clipped_sup, frame_curvature
    from .metric import assemble_bvp_frame
    from .solver import fit_decay

    cs, spec, u, v, rep, kw = _solve_common(cfg)
    delta, diag = fit_decay(u, "exp_t", cs=cs)
    rep.fitted_decay_rate = delta
    sha = cfg.sha256
    _write_field_csv(os.path.join(out, "u.csv"), u, sha)
    _write_field_csv(os.path.join(out, "v.csv"), v, sha)

    payload = {"command": "solve", "status": "ok", "report": rep.to_dict(),
               "decay_fit": {k: v_ for k, v_ in diag.items()
                             if not isinstance(v_, np.ndarray)}}

    from .cross_section import FlatTorus
    if not isinstance(cs, FlatTorus):
        # mode-coefficient form for spectral cross-sections
        for name, fld in (("u", u), ("v", v)):
            write_json(os.path.join(out, f"{name}.json"), {
                "t": fld.t, "xi": fld.xi if fld.xi is not None else fld.t,
                "mode_coefficients": fld.values}, sha)
    if isinstance(cs, FlatTorus):
        frame = assemble_bvp_frame(spec, v, pde_residual=rep.pde_residual_sup,
                                   fd_order=kw["fd_order"])
        rep.min_W = frame.min_W
        write_json(os.path.join(out, "frame.json"), {
            "mtype": frame.mtype, "ell": frame.ell, "period": frame.period,
            "min_W": frame.min_W, "monopole": frame.conn["monopole"],
            "dF_residual": frame.meta.get("dF_residual"),
            "flux_spread": frame.meta.get("flux_spread"),
            "n_xi": len(frame.xi), "grid": list(cs.grid),
            "meta": frame.meta}, sha)
        curv = frame_curvature(frame, fd_order=min(kw["fd_order"] + 2, 6))
        xi = curv["xi"]
        n1, n2 = cs.grid
        rows = []
        for i in range(len(xi)):
            for p in range(n1):
                for q in range(n2):
                    rows.append([xi[i], cs.x[p, q], cs.y[p, q],
                                 curv["einstein_residual"][i, p, q],
                                 curv["weyl_plus"][i, p, q],
                                 curv["weyl_minus"][i, p, q],
                                 curv["scalar"][i, p, q]])
        write_csv(os.path.join(out, "curvature.csv"),
                  ["xi", "x", "y", "einstein_residual", "weyl_plus",
                   "weyl_minus", "scalar_g"], rows, sha)
        payload["report"] = rep.to_dict()
        payload["curvature"] = {
            "einstein_residual_clipped_sup":
                clipped_sup(curv["einstein_residual"]),
            "weyl_plus_clipped_sup": clipped_sup(curv["weyl_plus"]),
        }
        _check_invariants(rep, strict)
    return payload


def _check_invariants(rep, strict):
    problems = []
    if rep.max_principle_ok is False:
        problems.append("maximum principle surrogate violated")
    if rep.min_W is not None and rep.min_W <= 0:
        problems.append(f"min W = {rep.min_W} is not positive")
    if problems and strict:
        raise InvariantViolation("; ".join(problems))
    return problems


def _interval_rows(kind, a, b):
    from .models import ModelFamily, threshold_branch

    fam = ModelFamily(kind, a, b if kind != "TypeII_Sigma" else None)
    rows = []
    for (lo, hi), (glo, ghi) in fam.maximal_intervals():
        rows.append({
            "kind": kind, "a": a, "b": fam.b,
            "branch": threshold_branch(fam.a, fam.b),
            "interval_lo": lo, "interval_hi": hi,
            "tag_lo": glo.tag, "tag_hi": ghi.tag,
            "angle_lo": glo.angle_per_period,
            "angle_hi": ghi.angle_per_period,
        })
    return rows


def run_classify(cfg, out, strict):
    sha = cfg.sha256
    table = cfg.get_int("classify", "table")
    if table is not None:
        if table not in (1, 2):
            raise ConfigError("classify table must be 1 or 2")
        kind = "TypeI" if table == 1 else "TypeII_Torus"
        default = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5]
        a_lat = cfg.get_floats("classify", "a_lattice", default)
        b_lat = cfg.get_floats("classify", "b_lattice", default)
        cols = ["kind", "a", "b", "branch", "interval_lo", "interval_hi",
                "tag_lo", "tag_hi", "angle_lo", "angle_hi"]
        rows = []
        for a in a_lat:
            for b in b_lat:
                if a == 0 and b == 0:
                    continue
                try:
                    recs = _interval_rows(kind, a, b)
                except ValueError:
                    continue        # sign sector with no Riemannian interval
                rows.extend([r[c] for c in cols] for r in recs)
        write_csv(os.path.join(out, f"table{table}.csv"), cols, rows, sha)
        return {"command": "classify", "status": "ok",
                "table": table, "rows": len(rows)}

    kind = cfg.get("classify", "kind", required=True)
    a = cfg.get_float("classify", "a", required=True)
    b = cfg.get_float("classify", "b")
    recs = _interval_rows(kind, a, b)
    write_json(os.path.join(out, "row.json"), {"intervals": recs}, sha)
    print(json.dumps(_jsonable(recs), sort_keys=True))
    return {"command": "classify", "status": "ok", "intervals": recs}


def run_diagnose(cfg, out, strict):
    from .diagnostics import energy_trace, stability_experiment
    from .solver import BvpSpec, solve_bvp

    cs, spec, u1, v1, rep, kw = _solve_common(cfg)
    sha = cfg.sha256
    phi2 = phi_expression(cfg.get("diagnose", "phi2", required=True), cs)
    T = cfg.get_float("grid", "T", required=True)
    n_t = cfg.get_int("grid", "n_t", required=True)
    u2, _, _ = solve_bvp(BvpSpec(spec.id, cs, phi2, a=spec.a), T, n_t, **kw)

    tr = energy_trace(spec, u1, u2)
    write_csv(os.path.join(out, "energy.csv"),
              ["t", "E", "dE", "d2E", "bound"], tr.rows(), sha)

    eps = cfg.get_floats("diagnose", "epsilons", [1e-1, 1e-2, 1e-3])
    slack = cfg.get_float("diagnose", "slack", 0.1)
    stab = stability_experiment(spec, cs.values(spec.phi), cs.values(phi2),
                                T=T, n_t=n_t, epsilons=tuple(eps),
                                slack=slack, fd_order=kw["fd_order"])
    write_csv(os.path.join(out, "stability.csv"),
              ["eps", "sup_dev", "delta"],
              [[r["eps"], r["sup_dev"], r["delta"]] for r in stab["rows"]],
              sha)
    payload = {"command": "diagnose", "status": "ok",
               "energy": {"kappa0": tr.kappa0, "kappa1": tr.kappa1,
                          "kappa2": tr.kappa2, "E0": tr.E[0],
                          "monotone_ok": tr.monotone_ok(),
                          "decay_bound_ok": tr.decay_bound_ok(),
                          "inequality_ok": tr.inequality_ok()},
               "stability": {"fitted_exponent": stab["fitted_exponent"],
                             "envelope_constant": stab["envelope_constant"],
                             "power_bound_ok": stab["power_bound_ok"]}}
    if strict and not (tr.monotone_ok() and tr.decay_bound_ok()
                       and stab["power_bound_ok"]):
        raise InvariantViolation("energy/stability bound violated")
    return payload


def run_degenerate(cfg, out, strict):
    from .diagnostics import degeneration_family

    cs = build_cross_section(cfg)
    sha = cfg.sha256
    phi0 = phi_expression(cfg.get("degenerate", "phi0", "0"), cs)
    N_list = cfg.get_floats("degenerate", "N_list", required=True)
    kw = {}
    for key, conv in (("n_t", cfg.get_int), ("zeta_max", cfg.get_float),
                      ("T", cfg.get_float)):
        val = conv("degenerate", key)
        if val is not None:
            kw[key] = val
    window = cfg.get_floats("degenerate", "window", [1.0, 5.0])
    fam = degeneration_family(cs, cs.values(phi0), N_list,
                              window=tuple(window), **kw)
    write_csv(os.path.join(out, "degeneration.csv"),
              ["N", "window_lo", "window_hi", "sup_error", "tag"],
              [[r["N"], window[0], window[1], r["sup_error"], r["tag"]]
               for r in fam["rows"]], sha)
    payload = {"command": "degenerate", "status": "ok",
               "monotone": fam["monotone"], "achieved_N": fam["achieved_N"],
               "blow_up_max_rel_dev": fam["blow_up"]["max_rel_dev"]
               if fam.get("blow_up") else None}
    if strict and not fam["monotone"]:
        raise InvariantViolation("degeneration error column is not monotone")
    return payload


def run_dehn(cfg, out, strict):
    from .dehn import defect_ladder, hyperbolic_cusp_frame, match_parameters

    sha = cfg.sha256
    b = cfg.get_float("dehn", "b", 1.0)
    period = cfg.get_float("dehn", "period", 1.0)
    R = cfg.get_float("dehn", "R", required=True)
    l_list = cfg.get_floats("dehn", "l_list", required=True)
    kw = {}
    for key, conv in (("halfwidth", cfg.get_float),
                      ("band_halfwidth", cfg.get_float),
                      ("n_tau", cfg.get_int), ("fd_order", cfg.get_int)):
        val = conv("dehn", key)
        if val is not None:
            kw[key] = val
    sigma = cfg.get_ints("dehn", "sigma", [1, 0, 0])
    cusp = hyperbolic_cusp_frame(b=b, period=period)
    rows = defect_ladder(cusp, R, l_list, sigma=tuple(sigma), **kw)
    write_csv(os.path.join(out, "dehn.csv"),
              ["R", "l", "a", "s_plus", "beta", "sup_defect"],
              [[r["R"], r["l"], r["a"], r["s_plus"], r["beta"],
                r["sup_defect"]] for r in rows], sha)
    matching = [{"l": l, "a": match_parameters(l, R)} for l in l_list]
    d = [r["sup_defect"] for r in rows]
    decreasing = all(y < x for x, y in zip(d, d[1:]))
    if strict and not decreasing:
        raise InvariantViolation("dehn defect ladder is not decreasing")
    return {"command": "dehn", "status": "ok", "matching": matching,
            "ladder_decreasing": decreasing}


def _read_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    cols = lines[0].split(",")
    data = [ln.split(",") for ln in lines[1:]]
    return cols, data


def run_plot_data(cfg, out, strict):
    sha = cfg.sha256
    src = cfg.get("plot_data", "source", required=True)
    emitted = []

    upath = os.path.join(src, "u.csv")
    if os.path.exists(upath):
        cols, data = _read_csv(upath)
        rows = []
        for rec in data:
            xi = float(rec[1])
            sup = max(abs(float(v)) for v in rec[2:])
            rows.append([xi, sup])
        # fitted exponential over the interior, for overplotting
        xs = np.array([r[0] for r in rows])
        ys = np.array([max(r[1], 1e-300) for r in rows])
        pos = ys > max(ys.max() * 1e-8, 1e-13)
        n = pos.sum()
        if n >= 3:
            sel = np.flatnonzero(pos)[: max(3, int(0.9 * n))]
            slope, icpt = np.polyfit(xs[sel], np.log(ys[sel]), 1)
            fit = np.exp(icpt + slope * xs)
        else:
            fit = np.zeros_like(xs)
        write_csv(os.path.join(out, "decay_profile.csv"),
                  ["xi", "sup_u", "fitted_curve"],
                  [[x, y, f] for x, y, f in zip(xs, ys, fit)], sha)
        emitted.append("decay_profile.csv")

    for name, keep, outname in (
            ("energy.csv", ("t", "E", "bound"), "energy_profile.csv"),
            ("stability.csv", ("eps", "sup_dev"), "stability_profile.csv"),
            ("dehn.csv", ("l", "sup_defect"), "dehn_profile.csv")):
        path = os.path.join(src, name)
        if not os.path.exists(path):
            continue
        cols, data = _read_csv(path)
        idx = [cols.index(c) for c in keep]
        write_csv(os.path.join(out, outname), list(keep),
                  [[rec[i] for i in idx] for rec in data], sha)
        emitted.append(outname)

    if not emitted:
        raise ConfigError(f"no plottable artifacts found under {src!r}")
    return {"command": "plot-data", "status": "ok", "emitted": emitted}


RUNNERS = {"solve": run_solve, "classify": run_classify,
           "diagnose": run_diagnose, "degenerate": run_degenerate,
           "dehn": run_dehn, "plot-data": run_plot_data}


# ---------------------------------------------------------------------------
# entry point

def _parser():
    p = argparse.ArgumentParser(
        prog="todacusp",
        description="Toda boundary value problems, metric reconstruction, "
                    "and structural diagnostics.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/FFT worker threads")
    p.add_argument("--strict", action="store_true",
                   help="invariant violations become fatal")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    out = args.out or "out"
    report = {"command": args.command, "status": "error"}
    sha = ""
    code = EXIT_ERROR
    try:
        cfg = load_config(args.config)
        sha = cfg.sha256
        if cfg.command != args.command:
            raise ConfigError(
                f"configuration declares command {cfg.command!r} but "
                f"{args.command!r} was requested")
        out = args.out or cfg.get("run", "out", out)
        os.makedirs(out, exist_ok=True)
        strict = args.strict or cfg.get_bool("run", "strict", False)
        threads = (args.threads if args.threads is not None
                   else cfg.get_int("run", "threads"))
        if threads is not None:
            import threadpoolctl
            with threadpoolctl.threadpool_limits(limits=threads):
                report = RUNNERS[args.command](cfg, out, strict)
        else:
            report = RUNNERS[args.command](cfg, out, strict)
        code = EXIT_OK
    except ConfigError as exc:
        report = {"command": args.command, "status": "config_error",
                  "error": str(exc)}
        code = EXIT_CONFIG
    except InvariantViolation as exc:
        report = {"command": args.command, "status": "invariant_violation",
                  "error": str(exc)}
        code = EXIT_INVARIANT
    except Exception as exc:         # solver and frame failures, everything else
        from .metric import FrameError
        from .solver import SolverError
        if isinstance(exc, SolverError):
            report = {"command": args.command, "status": "solver_error",
                      "error": str(exc), "stage": exc.stage}
            if exc.report is not None:
                report["report"] = exc.report.to_dict()
            code = EXIT_SOLVER
        elif isinstance(exc, FrameError):
            report = {"command": args.command, "status": "invariant_violation",
                      "error": str(exc), "node": exc.node}
            code = EXIT_INVARIANT
        else:
            report = {"command": args.command, "status": "error",
                      "error": f"{type(exc).__name__}: {exc}"}
            code = EXIT_ERROR
    try:
        os.makedirs(out, exist_ok=True)
        write_json(os.path.join(out, "report.json"), report, sha)
    except OSError as exc:
        print(f"cannot write report.json: {exc}", file=sys.stderr)
    if code != EXIT_OK:
        print(f"{report['status']}: {report.get('error', '')}",
              file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
