"""Command line interface: ``prwtail {model-info,renewal,tail,verify,sv-check}``.

Exit codes: 0 success or PASS, 1 theorem FAIL, 2 invalid input (schema,
parameters, failed preconditions), 3 I/O failure.

Every JSON output embeds ``{seed, config_hash, version}``.  CSV files keep
the plain column layout and get the same block in a ``<name>.meta.json``
sidecar.  The default worker count comes from ``PRWTAIL_WORKERS``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Sequence

import jsonschema
import numpy as np

from . import __version__
from .model import ModelSpec, PreconditionError
from .streams import WORKERS_ENV, default_workers

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3


class ConfigError(ValueError):
    """Schema violations; ``errors`` holds ``(json_path, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


_POS_INT = {"type": "integer", "minimum": 1}
_GRID = {
    "oneOf": [
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
        {
            "type": "object",
            "properties": {"start": {"type": "number"}, "stop": {"type": "number"}, "step": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["start", "stop", "step"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "description": {"type": "string"},
        "model": {"type": "string"},
        "theorem": {"enum": ["corl", "lth", "pert1", "pert2", "goldie", "subcritical"]},
        "u_grid": _GRID,
        "n_paths": _POS_INT,
        "tau_stop": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "x0": {"type": "number", "exclusiveMinimum": 0},
        "n_blocks": _POS_INT,
        "block_size": _POS_INT,
        "renewal_paths": _POS_INT,
        "shift_paths": _POS_INT,
        "n_plugin": _POS_INT,
        "seed": {"type": "integer", "minimum": 0},
        "workers": _POS_INT,
        "sv": {"type": "object"},
        "controls": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theory_scale": {"type": "number", "exclusiveMinimum": 0},
                "rho_scale": {"type": "number", "exclusiveMinimum": 0},
                "include_second_order": {"type": "boolean"},
            },
        },
        "tolerances": {"type": "object"},
    },
}

DEFAULTS = {
    "tau_stop": 1e-6,
    "x0": 1.0,
    "n_blocks": 30,
    "block_size": 100_000,
    "renewal_paths": 200_000,
    "shift_paths": 1_000_000,
    "n_plugin": 1_000_000,
    "controls": {},
    "tolerances": {},
}


@dataclass
class ExperimentConfig:
    values: dict
    base_dir: str = "."
    u_grid: list[float] = field(default_factory=list)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    @property
    def workers(self) -> int:
        return self.values["workers"]

    def model_path(self) -> str | None:
        p = self.values.get("model")
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def hashable(self) -> dict:
        # the worker count cannot change any output, so it is left out of the hash
        out = {k: v for k, v in self.values.items() if k not in ("workers", "model")}
        out["u_grid"] = self.u_grid
        return out


def expand_grid(spec) -> list[float]:
    """A list, ``{start, stop, step}`` (stop included) or a CLI string.

    Strings take ``"5,6,...,10"`` (arithmetic continuation), ``"5:10:0.5"``
    or a plain comma list.
    """
    if isinstance(spec, str):
        spec = spec.strip()
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) != 3:
                raise ValueError(f"grid {spec!r} must be start:stop:step")
            return expand_grid(dict(zip(("start", "stop", "step"), map(float, parts))))
        items = [s.strip() for s in spec.split(",") if s.strip()]
        if "..." in items:
            i = items.index("...")
            if i < 2 or i != len(items) - 2:
                raise ValueError(f"grid {spec!r}: '...' needs two leading values and one final value")
            a, b, stop = float(items[i - 2]), float(items[i - 1]), float(items[-1])
            head = [float(x) for x in items[: i - 2]]
            return head + expand_grid({"start": a, "stop": stop, "step": b - a})
        return [float(x) for x in items]
    if isinstance(spec, dict):
        start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        if step <= 0:
            raise ValueError("grid step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9))
        if n < 0:
            raise ValueError("grid stop is below start")
        return [round(start + i * step, 12) for i in range(n + 1)]
    return [float(x) for x in spec]


def parse_config(text: str, base_dir: str = ".", overrides: dict | None = None) -> ExperimentConfig:
    """Validate a JSON config and fill defaults; raises :class:`ConfigError`."""
    try:
        obj = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError([("$", f"malformed JSON: {exc}")]) from None
    if overrides:
        obj = {**obj, **{k: v for k, v in overrides.items() if v is not None}}
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = [(e.json_path, e.message) for e in sorted(validator.iter_errors(obj), key=lambda e: e.json_path)]
    grid: list[float] = []
    if "u_grid" in obj and not any(p.startswith("$.u_grid") for p, _ in errors):
        try:
            grid = expand_grid(obj["u_grid"])
        except ValueError as exc:
            errors.append(("$.u_grid", str(exc)))
        else:
            if not grid:
                errors.append(("$.u_grid", "grid is empty"))
            elif any(b <= a for a, b in zip(grid, grid[1:])):
                errors.append(("$.u_grid", "grid must be strictly increasing"))
    if errors:
        raise ConfigError(errors)
    values = {**json.loads(json.dumps(DEFAULTS)), **obj}
    values.setdefault("workers", default_workers())
    return ExperimentConfig(values, base_dir, grid)


# ---------------------------------------------------------------------------
# io helpers


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def load_model(path: str) -> tuple[ModelSpec, dict]:
    obj = json.loads(_read(path))
    return ModelSpec.from_json(obj), obj


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def provenance(seed: int | None, payload: dict) -> dict:
    return {"seed": seed, "config_hash": config_hash(payload), "version": __version__}


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        raise ValueError("refusing to write a non-finite number to CSV")
    return repr(v)


def csv_text(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path: str, columns, rows, meta: dict) -> None:
    _write(path, csv_text(columns, rows))
    if path != "-":
        _write(path + ".meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_json(path: str, obj: dict) -> None:
    _write(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


# ---------------------------------------------------------------------------
# commands


def _config_from_args(args) -> ExperimentConfig:
    text, base = "", "."
    if getattr(args, "config", None):
        text, base = _read(args.config), os.path.dirname(os.path.abspath(args.config))
    over = {
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
        "n_paths": _count(getattr(args, "paths", None)),
        "tau_stop": getattr(args, "tau", None),
        "u_grid": _grid_arg(getattr(args, "u", None)),
        "n_blocks": getattr(args, "blocks", None),
        "block_size": getattr(args, "block_size", None),
        "x0": getattr(args, "x0", None),
        "theorem": getattr(args, "theorem", None),
    }
    if getattr(args, "model", None):
        over["model"] = os.path.abspath(args.model)
    return parse_config(text, base, over)


def _grid_arg(v):
    if v is None:
        return None
    try:
        return expand_grid(v)
    except ValueError as exc:
        raise ConfigError([("$.u_grid", str(exc))]) from None


def _count(v):
    if v is None:
        return None
    x = float(v)
    if x != int(x):
        raise ConfigError([("$.n_paths", f"{v!r} is not an integer")])
    return int(x)


def _model(cfg: ExperimentConfig) -> tuple[ModelSpec, dict]:
    path = cfg.model_path()
    if path is None:
        raise ConfigError([("$.model", "a model file is required (--model)")])
    return load_model(path)


def _require(cfg: ExperimentConfig, *keys: str) -> None:
    missing = [k for k in keys if k not in cfg.values and not (k == "u_grid" and cfg.u_grid)]
    if missing:
        raise ConfigError([(f"$.{k}", "required") for k in missing])


def cmd_model_info(args) -> int:
    cfg = _config_from_args(args)
    model, mobj = _model(cfg)
    z = model.tilted() if model.regime != "subcritical" else None
    info: dict[str, Any] = {
        "model": mobj,
        "alpha": model.alpha,
        "rho": None if math.isnan(model.rho) else model.rho,
        "regime": model.regime,
        "E_log_A": model.a.mean_log,
        "arb": model.arb_holds,
    }
    if z is not None:
        info["tilted"] = {"family": z.family, "params": z.params, "mean": z.mean, "second_moment": z.second_moment}
        info["strongly_nonlattice"] = z.strongly_nonlattice
    else:
        info["E_A_alpha"] = model.a.moment(model.alpha)
    if model.regime == "critical":
        info["tilde_b"] = {str(u): model.tilde_b(float(u)) for u in (cfg.u_grid or [0.0, 5.0, 10.0])}
    info["provenance"] = provenance(None, {"model": mobj})
    write_json(args.out, info)
    return EXIT_OK


def cmd_renewal(args) -> int:
    from .renewal import renewal_histogram_mc, renewal_lattice_oracle

    cfg = _config_from_args(args)
    _require(cfg, "u_grid", "n_paths", "seed")
    model, mobj = _model(cfg)
    z = model.tilted()
    edges = cfg.u_grid
    if len(edges) < 2:
        raise ConfigError([("$.u_grid", "renewal needs at least two bin edges")])
    hist = renewal_histogram_mc(z, edges, cfg["n_paths"], cfg["seed"], cfg.workers)
    columns = ["lo", "hi", "mass", "stderr"]
    rows = [[a, b, m, s] for a, b, m, s in zip(edges[:-1], edges[1:], hist.mass, hist.stderr)]
    if args.oracle_h:
        lo = min(edges[0], 0.0) - 40.0 / z.return_rate
        tab = renewal_lattice_oracle(z, args.oracle_h, lo, edges[-1])
        columns.append("oracle")
        for r in rows:
            r.append(tab.mass(r[0], r[1]))
    payload = {"command": "renewal", "model": mobj, "config": cfg.hashable(), "oracle_h": args.oracle_h}
    write_csv(args.out, columns, rows, provenance(cfg["seed"], payload))
    return EXIT_OK


def cmd_tail(args) -> int:
    from .prw import curve_counts, min_moment_alpha, tail_curve, TailCurve

    cfg = _config_from_args(args)
    _require(cfg, "u_grid", "n_paths", "seed")
    model, mobj = _model(cfg)
    seed, workers = cfg["seed"], cfg.workers
    c_hat = None
    if model.regime == "critical":
        mm = min_moment_alpha(model, cfg["n_blocks"], cfg["block_size"], cfg["tau_stop"], seed, workers)
        c_hat = mm.estimate / (model.alpha * model.rho)
    counts = curve_counts(model, cfg.u_grid, cfg["n_paths"], cfg["tau_stop"], seed=seed, workers=workers)
    curve = tail_curve(model, cfg.u_grid, cfg["n_paths"], cfg["tau_stop"], seed, workers, c_hat=c_hat, counts=counts)
    payload = {"command": "tail", "model": mobj, "config": cfg.hashable()}
    meta = provenance(seed, payload)
    meta.update(c_hat=curve.c_hat, n_truncated=curve.n_truncated, mean_steps=curve.mean_steps)
    write_csv(args.out, TailCurve.COLUMNS, curve.rows(), meta)
    return EXIT_OK


def run_theorem(theorem: str, cfg: ExperimentConfig, model: ModelSpec):
    from . import verify as V
    from .sv import SlowlyVaryingSpec

    seed, workers = cfg["seed"], cfg.workers
    ctl = cfg["controls"]
    tol = cfg["tolerances"] or None
    scale = ctl.get("theory_scale", 1.0)
    grid = cfg.u_grid
    n = cfg["n_paths"]
    if theorem == "corl":
        sv = SlowlyVaryingSpec.from_json(cfg["sv"]) if cfg.get("sv") else getattr(model.b, "sv", None)
        if sv is None:
            raise ConfigError([("$.sv", "corl needs a slowly varying function")])
        return V.verify_corl(model.tilted(), sv, cfg["x0"], grid, n, seed, workers, scale, tol)
    if theorem == "lth":
        return V.verify_lth(model, grid, n, seed, workers, scale, tol)
    tau = cfg["tau_stop"]
    if theorem == "pert1":
        return V.verify_pert_first(model, grid, n, tau, seed, workers, scale, tol)
    if theorem == "pert2":
        from .prw import min_moment_alpha

        mm = min_moment_alpha(model, cfg["n_blocks"], cfg["block_size"], tau, seed, workers)
        return V.verify_pert_second(
            model, grid, n, tau, seed, workers, ctl.get("include_second_order", True), tol,
            min_moment=mm, renewal_paths=cfg["renewal_paths"], shift_paths=cfg["shift_paths"],
        )
    if theorem == "goldie":
        return V.verify_goldie_regime(model, grid, n, tau, seed, workers, cfg["n_plugin"], ctl.get("rho_scale", 1.0), tol)
    if theorem == "subcritical":
        return V.verify_subcritical_regime(model, grid, n, tau, seed, workers, scale, tol)
    raise ConfigError([("$.theorem", f"unknown theorem {theorem!r}")])


def cmd_verify(args) -> int:
    cfg = _config_from_args(args)
    _require(cfg, "theorem", "u_grid", "n_paths")
    model, mobj = _model(cfg)
    report = run_theorem(cfg["theorem"], cfg, model)
    payload = {"command": "verify", "model": mobj, "config": cfg.hashable()}
    out = report.to_json()
    out["provenance"] = provenance(cfg["seed"], payload)
    write_json(args.out, out)
    if args.csv:
        cols = list(report.points[0].keys()) if report.points else []
        write_csv(args.csv, cols, [[p[c] for c in cols] for p in report.points], out["provenance"])
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_sv_check(args) -> int:
    from .sv import SlowlyVaryingSpec, dehaan_ratio, karamata_ratio, potter_check, tilde_log

    if args.sv.strip().startswith("{"):
        obj = json.loads(args.sv)
    else:
        obj = json.loads(_read(args.sv))
    sv = SlowlyVaryingSpec.from_json(obj)
    grid = expand_grid(args.u)
    rows = []
    for u in grid:
        rows.append(
            {
                "u": u,
                "ell": float(sv.ell(u)),
                "tilde": tilde_log(sv, args.x0, u).value if u >= math.log(args.x0) else None,
                "dehaan": dehaan_ratio(sv, args.lam, u),
                "karamata": karamata_ratio(sv, args.alpha, args.x0, u) if u > math.log(args.x0) else None,
            }
        )
    pot = potter_check(sv, args.delta, grid)
    out = {
        "sv": sv.to_json(),
        "x0": args.x0,
        "lambda": args.lam,
        "alpha": args.alpha,
        "points": rows,
        "potter": {"delta": pot.delta, "A": pot.A, "A_by_width": pot.A_by_width, "growing": pot.growing},
        "provenance": provenance(None, {"command": "sv-check", "sv": sv.to_json(), "u": grid}),
    }
    write_json(args.out, out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prwtail", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_required: bool = False):
        sp.add_argument("--model", help="model JSON file")
        sp.add_argument("--config", help="experiment config JSON file")
        sp.add_argument("--seed", type=int, required=seed_required)
        sp.add_argument("--workers", type=int, help=f"worker threads (default ${WORKERS_ENV} or all cores)")
        sp.add_argument("--out", default="-", help="output file ('-' for stdout)")

    sp = sub.add_parser("model-info", help="critical exponent, rho, regime and tilted law")
    common(sp)
    sp.add_argument("--u", help="levels for Ltilde_B")
    sp.set_defaults(func=cmd_model_info)

    sp = sub.add_parser("renewal", help="renewal masses on consecutive bins")
    common(sp)
    sp.add_argument("--u", help="bin edges, e.g. 0:30:1")
    sp.add_argument("--paths")
    sp.add_argument("--oracle-h", type=float, dest="oracle_h", help="add lattice oracle masses with this step")
    sp.set_defaults(func=cmd_renewal)

    sp = sub.add_parser("tail", help="tail curve of R with theory columns")
    common(sp)
    sp.add_argument("--u", help="levels u = log x, e.g. 5,6,...,10")
    sp.add_argument("--paths")
    sp.add_argument("--tau", type=float)
    sp.add_argument("--blocks", type=int, help="blocks for the second-order constant")
    sp.add_argument("--block-size", type=int, dest="block_size")
    sp.set_defaults(func=cmd_tail)

    sp = sub.add_parser("verify", help="run a theorem check; exit 1 on FAIL")
    common(sp, seed_required=True)
    sp.add_argument("--theorem", choices=["corl", "lth", "pert1", "pert2", "goldie", "subcritical"])
    sp.add_argument("--u")
    sp.add_argument("--paths")
    sp.add_argument("--tau", type=float)
    sp.add_argument("--x0", type=float)
    sp.add_argument("--csv", help="write the per-point table here")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sv-check", help="de Haan, Karamata and Potter diagnostics of a slowly varying function")
    sp.add_argument("--sv", required=True, help="JSON object or file")
    sp.add_argument("--u", default="1:20:1")
    sp.add_argument("--x0", type=float, default=1.0)
    sp.add_argument("--lam", type=float, default=2.0)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_sv_check)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, PreconditionError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
