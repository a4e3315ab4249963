"""Command-line front end.

Subcommands: simulate, discover, collider, collider-scan, table1.
Results go to --out (or stdout); diagnostics go to stderr.  Exit codes:
0 success, 2 configuration error, 3 data error, 4 inference error.
Every payload carries a provenance block (version, seed, config echo);
no timestamps, so identical configurations reproduce byte-identical
payloads apart from the runtime column of benchmark reports.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .asymmetry import AsymmetryResult, CONTRACTING, DYNAMICS, EXPANDING, directional_test
from .collider import ColliderVerdict, collider_test
from .data import load_csv
from .errors import CondasymError, ConfigurationError
from .kernels import Bandwidths
from .simlab import ScmSpec, generate_scm, run_table1

log = logging.getLogger("condasym")


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CondasymError as exc:
        log.error("error: %s", exc)
        return exc.exit_code


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condasym",
        description="Covariate-moderated causal direction discovery",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw one benchmark dataset as CSV")
    sim.add_argument("--model", type=int, required=True, choices=(1, 2, 3, 4))
    sim.add_argument("--sigma", type=float, default=0.0)
    sim.add_argument("--n", type=int, default=500)
    _common(sim)
    sim.set_defaults(func=_cmd_simulate)

    disc = sub.add_parser("discover", help="directional test on a CSV dataset")
    disc.add_argument("--data", required=True, help="input CSV path")
    disc.add_argument(
        "--roles",
        required=True,
        help="role mapping, e.g. x=COL,y=COL,z=COL or x=A,y=B,z=C1,C2",
    )
    disc.add_argument("--direction", default="x->y|z", choices=("x->y|z", "y->x|z"))
    disc.add_argument("--dynamics", default="both", choices=(*DYNAMICS, "both"))
    disc.add_argument("--alpha", type=float, default=0.05)
    disc.add_argument("--grid-frac", type=float, default=0.10)
    disc.add_argument("--span", type=float, default=0.75)
    disc.add_argument("--no-standardize", action="store_true")
    disc.add_argument("--bandwidths", default=None, help="fixed 'b,h' bypassing selection")
    disc.add_argument("--density-grid", type=int, default=512)
    _common(disc)
    disc.set_defaults(func=_cmd_discover)

    col = sub.add_parser("collider", help="test X -> COL <- Y on a CSV dataset")
    col.add_argument("--data", required=True)
    col.add_argument("--x", required=True, help="first parent column")
    col.add_argument("--y", required=True, help="second parent column")
    col.add_argument("--col", required=True, help="collider column")
    col.add_argument("--dynamics", default="both", choices=(*DYNAMICS, "both"))
    col.add_argument("--alpha", type=float, default=0.05)
    col.add_argument("--grid-frac", type=float, default=0.10)
    col.add_argument("--span", type=float, default=0.75)
    col.add_argument("--no-standardize", action="store_true")
    _common(col)
    col.set_defaults(func=_cmd_collider)

    scan = sub.add_parser("collider-scan", help="all-pairs collider tests")
    scan.add_argument("--data", required=True)
    scan.add_argument("--pairs", required=True, help="CSV with columns g1,g2")
    scan.add_argument("--col", required=True, help="collider column")
    scan.add_argument("--dynamics", default="both", choices=(*DYNAMICS, "both"))
    scan.add_argument("--alpha", type=float, default=0.05)
    scan.add_argument("--grid-frac", type=float, default=0.10)
    scan.add_argument("--span", type=float, default=0.75)
    scan.add_argument("--no-standardize", action="store_true")
    scan.add_argument("--json", default=None, help="also write raw-scale results here")
    _common(scan)
    scan.set_defaults(func=_cmd_collider_scan)

    tab = sub.add_parser("table1", help="benchmark accuracy report")
    tab.add_argument("--models", default="1,2,3,4")
    tab.add_argument("--sigmas", default="0,0.125,0.25,0.5,1")
    tab.add_argument("--n", type=int, default=500)
    tab.add_argument("--reps", type=int, default=50)
    tab.add_argument("--methods", default="cac,igci")
    tab.add_argument("--alpha", type=float, default=0.05)
    _common(tab)
    tab.set_defaults(func=_cmd_table1)

    return parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("CGEM_THREADS", "1")),
        help="worker processes (env CGEM_THREADS)",
    )


def _provenance(args) -> dict:
    config = {
        k: v for k, v in sorted(vars(args).items()) if k != "func" and v is not None
    }
    return {"version": __version__, "seed": args.seed, "config": config}


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w") as fh:
            fh.write(text)
        log.info("wrote %s", out)


def _parse_roles(spec: str) -> dict:
    roles: dict = {}
    current = None
    for token in spec.split(","):
        token = token.strip()
        if "=" in token:
            key, value = token.split("=", 1)
            key = key.strip().lower()
            if key not in ("x", "y", "z"):
                raise ConfigurationError(f"--roles: unknown role {key!r}")
            if key in roles:
                raise ConfigurationError(f"--roles: duplicate role {key!r}")
            roles[key] = [value.strip()]
            current = key
        elif token:
            if current != "z":
                raise ConfigurationError(
                    f"--roles: dangling column {token!r} (only z takes several)"
                )
            roles["z"].append(token)
    for need in ("x", "y", "z"):
        if need not in roles:
            raise ConfigurationError(f"--roles: role {need!r} is required")
    if len(roles["x"]) != 1 or len(roles["y"]) != 1:
        raise ConfigurationError("--roles: x and y each take exactly one column")
    return {"x": roles["x"][0], "y": roles["y"][0], "z": roles["z"]}


def _parse_bandwidths(spec: str | None):
    if spec is None:
        return None
    try:
        b, h = (float(tok) for tok in spec.split(","))
    except ValueError:
        raise ConfigurationError(
            f"--bandwidths expects 'b,h' with numeric entries, got {spec!r}"
        ) from None
    return Bandwidths(b, h)


def _result_dict(res: AsymmetryResult, with_profiles: bool = True) -> dict:
    out = {
        "dynamics": res.dynamics,
        "z0": list(map(float, np.atleast_1d(res.z0))),
        "c_hat": res.c_hat,
        "se": res.se,
        "bound": res.bound,
        "alpha": res.alpha,
        "reject_null": res.reject_null,
        "interval": [res.bound, None] if res.dynamics == CONTRACTING else [None, res.bound],
    }
    if with_profiles and res.profile is not None:
        out["profile"] = {
            "grid": res.profile.grid.tolist(),
            "c": res.profile.c.tolist(),
            "var_c": res.profile.var_c.tolist(),
        }
    if with_profiles and res.entropy is not None:
        out["entropy"] = {
            "grid": res.entropy.grid.tolist(),
            "h_x": res.entropy.h_x.tolist(),
            "h_y": res.entropy.h_y.tolist(),
            "var_x": res.entropy.var_x.tolist(),
            "var_y": res.entropy.var_y.tolist(),
        }
    return out


def verdict_to_dict(v: ColliderVerdict, with_profiles: bool = False) -> dict:
    return {
        "test_x": None if v.test_x is None else _result_dict(v.test_x, with_profiles),
        "test_y": None if v.test_y is None else _result_dict(v.test_y, with_profiles),
        "alpha_overall": v.alpha_overall,
        "alpha_each": v.alpha_each,
        "confirmed": v.confirmed,
        "dynamics": v.dynamics,
        "errors": list(v.errors),
    }


def verdict_from_dict(d: dict) -> ColliderVerdict:
    def res(sub):
        if sub is None:
            return None
        return AsymmetryResult(
            dynamics=sub["dynamics"],
            z0=np.asarray(sub["z0"], dtype=float),
            c_hat=sub["c_hat"],
            se=sub["se"],
            bound=sub["bound"],
            alpha=sub["alpha"],
            reject_null=sub["reject_null"],
        )

    return ColliderVerdict(
        test_x=res(d["test_x"]),
        test_y=res(d["test_y"]),
        alpha_overall=d["alpha_overall"],
        alpha_each=d["alpha_each"],
        confirmed=d["confirmed"],
        dynamics=d["dynamics"],
        errors=tuple(d.get("errors", ())),
    )


def _cmd_simulate(args) -> int:
    spec = ScmSpec(model_id=args.model, sigma=args.sigma, n=args.n, seed=args.seed)
    ds = generate_scm(spec)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["x", "y", "z1", "z2"])
    for i in range(ds.n):
        writer.writerow(
            [repr(float(v)) for v in (ds.x[i], ds.y[i], ds.z[i, 0], ds.z[i, 1])]
        )
    _emit(buf.getvalue(), args.out)
    return 0


def _cmd_discover(args) -> int:
    roles = _parse_roles(args.roles)
    if args.direction == "y->x|z":
        roles["x"], roles["y"] = roles["y"], roles["x"]
    ds = load_csv(args.data, roles, standardize=not args.no_standardize)
    bw = _parse_bandwidths(args.bandwidths)
    regimes = DYNAMICS if args.dynamics == "both" else (args.dynamics,)
    results = {}
    for dyn in regimes:
        res = directional_test(
            ds,
            dyn,
            args.alpha,
            seed=args.seed,
            grid_frac=args.grid_frac,
            span=args.span,
            bw_policy=bw,
            grid_size=args.density_grid,
        )
        results[dyn] = _result_dict(res)
        log.info(
            "%s: c_hat=%+.4f se=%.4f bound=%+.4f reject=%s",
            dyn,
            res.c_hat,
            res.se,
            res.bound,
            res.reject_null,
        )
    payload = {
        "provenance": _provenance(args),
        "direction": args.direction,
        "standardization": {k: list(v) for k, v in ds.standardization.items()},
        "results": results,
    }
    _emit(json.dumps(payload, indent=2, sort_keys=True), args.out)
    return 0


def _collider_payload(args, x, y, col, with_profiles: bool = False):
    regimes = DYNAMICS if args.dynamics == "both" else (args.dynamics,)
    verdicts = {}
    for dyn in regimes:
        v = collider_test(
            x,
            y,
            col,
            dyn,
            alpha_overall=args.alpha,
            seed=args.seed,
            grid_frac=args.grid_frac,
            span=args.span,
            keep_profiles=with_profiles,
        )
        verdicts[dyn] = v
    return verdicts


def _cmd_collider(args) -> int:
    ds_cols = load_csv(
        args.data,
        {"x": args.x, "y": args.y, "z": [args.col]},
        standardize=not args.no_standardize,
    )
    x, y, col = ds_cols.x, ds_cols.y, ds_cols.z[:, 0]
    verdicts = _collider_payload(args, x, y, col)
    payload = {
        "provenance": _provenance(args),
        "columns": {"x": args.x, "y": args.y, "col": args.col},
        "verdicts": {dyn: verdict_to_dict(v) for dyn, v in verdicts.items()},
        "confirmed_any": any(v.confirmed for v in verdicts.values()),
    }
    for dyn, v in verdicts.items():
        log.info("%s: confirmed=%s", dyn, v.confirmed)
    _emit(json.dumps(payload, indent=2, sort_keys=True), args.out)
    return 0


def _cmd_collider_scan(args) -> int:
    pairs = []
    with open(args.pairs, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"g1", "g2"} <= set(reader.fieldnames):
            raise ConfigurationError(f"{args.pairs} must have columns g1,g2")
        for row in reader:
            pairs.append((row["g1"].strip(), row["g2"].strip()))
    if not pairs:
        raise ConfigurationError(f"{args.pairs} lists no pairs")

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        [
            "dynamics",
            "g1",
            "g2",
            "c_g1_x100",
            "bound_g1_x100",
            "c_g2_x100",
            "bound_g2_x100",
            "confirmed",
        ]
    )
    raw = {"provenance": _provenance(args), "results": []}
    for g1, g2 in pairs:
        ds_cols = load_csv(
            args.data,
            {"x": g1, "y": g2, "z": [args.col]},
            standardize=not args.no_standardize,
        )
        x, y, col = ds_cols.x, ds_cols.y, ds_cols.z[:, 0]
        verdicts = _collider_payload(args, x, y, col)
        for dyn, v in verdicts.items():
            cx = v.test_x.c_hat if v.test_x is not None else float("nan")
            bx = v.test_x.bound if v.test_x is not None else float("nan")
            cy = v.test_y.c_hat if v.test_y is not None else float("nan")
            by = v.test_y.bound if v.test_y is not None else float("nan")
            writer.writerow(
                [
                    dyn,
                    g1,
                    g2,
                    f"{100 * cx:.2f}",
                    f"{100 * bx:.2f}",
                    f"{100 * cy:.2f}",
                    f"{100 * by:.2f}",
                    v.confirmed,
                ]
            )
            raw["results"].append(
                {"pair": [g1, g2], "dynamics": dyn, **verdict_to_dict(v)}
            )
        log.info("pair (%s, %s) done", g1, g2)
    _emit(buf.getvalue(), args.out)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(raw, fh, indent=2, sort_keys=True)
        log.info("wrote %s", args.json)
    return 0


def _cmd_table1(args) -> int:
    models = [int(tok) for tok in args.models.split(",") if tok.strip()]
    sigmas = [float(tok) for tok in args.sigmas.split(",") if tok.strip()]
    methods = [tok.strip() for tok in args.methods.split(",") if tok.strip()]
    report = run_table1(
        models=models,
        sigmas=sigmas,
        n=args.n,
        replicates=args.reps,
        methods=methods,
        seed=args.seed,
        alpha=args.alpha,
        threads=args.threads,
    )
    buf = io.StringIO()
    prov = _provenance(args)
    buf.write(f"# condasym {prov['version']} seed={prov['seed']}\n")
    buf.write(f"# note: {report.note}\n")
    writer = csv.writer(buf)
    writer.writerow(
        ["model", "sigma", "method", "accuracy", "replicates", "failures", "runtime_s"]
    )
    for row in report.rows:
        writer.writerow(
            [
                row.model_id,
                f"{row.sigma:g}",
                row.method,
                f"{row.accuracy:.4f}",
                row.replicates,
                row.failures,
                f"{row.runtime_s:.2f}",
            ]
        )
    _emit(buf.getvalue(), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
