"""Command-line experiment runner.

Usage::

    feasops <command> --config <path> [--out <dir>] [--seed <u64>]

Every command reads a flat JSON config, validates it, runs, and writes its
outputs atomically into the output directory.  Each file embeds the fully
resolved config (seed included).  Exit codes: 0 pass, 1 invalid config,
2 runtime failure, 3 an empirical check violated its bound.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .errors import BoundViolation, FeasopsError, PreconditionError
from .ergodic import (PipelineCounts, SmoothingPlan, plan_violations, run_pipeline_dr,
                      run_pipeline_family, run_pipeline_vn)
from .kirszbraun import build_F
from .lipschitz import (dr_bound, empirical_lipschitz, family_bound, sphere_projection_bound,
                        sphere_reflection_bound)
from .operators import (DR, FamilyParams, StopReason, check_sign_invariance, dr_step,
                        family_step, iterate, vn_step)
from .sets import Line, UnitSphere, set_from_dict
from .space import Ball, SamplerConfig, Shell, norm

log = logging.getLogger(__name__)

COMMANDS = ("trajectory", "lipschitz-table", "ergodic-dr", "ergodic-family", "ergodic-vn",
            "sign-invariance", "extension-check")
PIPELINE_KIND = {"ergodic-dr": "dr", "ergodic-family": "family", "ergodic-vn": "vn"}

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_VIOLATION = 0, 1, 2, 3

# defaults filled in before validation, so outputs record every value used
DEFAULTS = {
    "trajectory": {"dim": 2, "lam": 0.5, "x0": [3.0, 4.0], "max_n": 5000, "conv_tol": 1e-6,
                   "operator": "dr"},
    "lipschitz-table": {"dims": [2], "betas": [0.1, 0.5, 0.9], "pairs": 20000,
                        "operators": ["reflection", "projection", "family"],
                        "families": [[0.5, 0.0, 0.0]], "lam": 0.5, "outer_radius": 3.0},
    "ergodic-dr": {"beta": 0.5, "alpha": 0.9, "r": 4.0, "n_max": 60},
    "ergodic-family": {"beta": 0.5, "alpha": 0.9, "r": 4.0, "n_max": 60,
                       "family": [0.5, 0.0, 0.0]},
    "ergodic-vn": {"beta": 0.5, "alpha": 0.9, "r": 2.0, "n_max": 60},
    "sign-invariance": {"dim": 2, "lam": 0.5, "count": 10000, "radius": 5.0, "hole": 0.01},
    "extension-check": {"beta": 0.5, "r": 4.0, "pairs": 1500, "anchors": 512,
                        "family": [0.5, 0.0, 0.0]},
}
PIPELINE_COMMON = {"dim": 2, "lam": 0.5}
EMPIRICAL_SLACK = {"reflection": 1e-9, "projection": 1e-9, "family": 1e-6}
EXTENSION_SLACK = 1e-3


def resolve(config: dict, seed: int | None = None) -> dict:
    """Fill defaults and apply a ``--seed`` override."""
    cmd = config.get("command")
    out = {}
    if cmd in PIPELINE_KIND:
        out.update(PIPELINE_COMMON)
    if cmd == "extension-check":
        out.update(PIPELINE_COMMON)
    out.update(DEFAULTS.get(cmd, {}))
    out.update(config)
    out.setdefault("seed", 0)
    if seed is not None:
        out["seed"] = seed
    if cmd in PIPELINE_KIND or cmd == "extension-check":
        if "x0" not in out:
            out["x0"] = _default_x0(out)
    return out


def _default_x0(cfg):
    """A point of S ∩ C for the configured line, when one exists."""
    dim, lam = int(cfg["dim"]), float(cfg.get("lam", 0.5))
    x0 = np.zeros(dim)
    if "set" not in cfg and 0 <= lam <= 1 and dim >= 2:
        x0[0], x0[1] = np.sqrt(1.0 - lam * lam), lam
    else:
        x0[0] = 1.0
    return x0.tolist()


def _constraint_set(cfg):
    if "set" in cfg:
        return set_from_dict(cfg["set"])
    return Line(int(cfg["dim"]), float(cfg["lam"]))


def _plan(cfg):
    fam = FamilyParams(*cfg.get("family", DR.as_tuple()))
    return SmoothingPlan(beta=float(cfg["beta"]), alpha=float(cfg["alpha"]), r=float(cfg["r"]),
                         x0=cfg["x0"], theta=cfg.get("theta"), family=fam,
                         n_max=int(cfg["n_max"]))


def validate(config: dict) -> list:
    """Violations of the selected command's preconditions; empty if the config is usable."""
    cmd = config.get("command")
    if cmd not in COMMANDS:
        return [f"command must be one of {', '.join(COMMANDS)}: got {cmd!r}"]
    seed = config.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        return [f"seed must be an unsigned 64-bit integer: got {seed!r}"]
    try:
        if cmd in PIPELINE_KIND:
            return plan_violations(PIPELINE_KIND[cmd], _plan(config), _constraint_set(config))
        if cmd == "trajectory":
            out = []
            if len(config["x0"]) != int(config["dim"]):
                out.append(f"len(x0) = dim: {len(config['x0'])} ≠ {config['dim']}")
            if int(config["max_n"]) < 1:
                out.append(f"max_n ≥ 1: {config['max_n']} < 1")
            if config["operator"] not in ("dr", "vn", "family"):
                out.append(f"operator ∈ {{dr, vn, family}}: got {config['operator']!r}")
            _constraint_set(config)
            return out
        if cmd == "lipschitz-table":
            out = [f"0 ≤ β < 1: β = {b}" for b in config["betas"] if not 0 <= b < 1]
            bad = set(config["operators"]) - {"reflection", "projection", "family"}
            if bad:
                out.append(f"operators ⊆ {{reflection, projection, family}}: got {sorted(bad)}")
            for f in config["families"]:
                FamilyParams(*f)
            if int(config["pairs"]) < 2:
                out.append(f"pairs ≥ 2: {config['pairs']} < 2")
            return out
        if cmd == "sign-invariance":
            out = []
            if config["lam"] < 0:
                out.append(f"λ ≥ 0: λ = {config['lam']}")
            if not 0 < config["hole"] < config["radius"]:
                out.append(f"0 < hole < radius: {config['hole']}, {config['radius']}")
            return out
        if cmd == "extension-check":
            out = []
            if not 0 <= config["beta"] < 1:
                out.append(f"0 ≤ β < 1: β = {config['beta']}")
            FamilyParams(*config["family"])
            if len(config["x0"]) != int(config["dim"]):
                out.append(f"len(x0) = dim: {len(config['x0'])} ≠ {config['dim']}")
            if not config["r"] > 0:
                out.append(f"r > 0: r = {config['r']}")
            return out
    except (KeyError, TypeError, ValueError) as exc:
        return [f"malformed config: {exc}"]
    return []


class Outputs:
    """Buffers output files and commits them by atomic rename.

    On failure the buffered files are still written, with a ``.partial``
    suffix, next to an ``error.partial.json`` describing the failure.
    """

    def __init__(self, out_dir: Path, config: dict):
        self.dir = Path(out_dir)
        self.config = config
        self.files = {}

    def csv(self, name):
        fh = io.StringIO()
        fh.write(f"# config: {json.dumps(self.config, sort_keys=True)}\n")
        self.files[name] = fh
        return fh

    def json(self, name, payload: dict):
        fh = io.StringIO()
        json.dump({"config": self.config, **payload}, fh, indent=2, default=_json_default)
        fh.write("\n")
        self.files[name] = fh

    def _write(self, name, text):
        self.dir.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, self.dir / name)

    def commit(self):
        for name, fh in self.files.items():
            self._write(name, fh.getvalue())

    def fail(self, exc):
        for name, fh in self.files.items():
            self._write(name + ".partial", fh.getvalue())
        err = {"config": self.config, "error": type(exc).__name__, "message": str(exc)}
        self._write("error.partial.json", json.dumps(err, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, StopReason):
        return o.value
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def cmd_trajectory(cfg, out: Outputs) -> int:
    dim = int(cfg["dim"])
    S, C = UnitSphere(dim), _constraint_set(cfg)
    op = cfg["operator"]
    if op == "dr":
        def step(x):
            return dr_step(S, C, x)
    elif op == "vn":
        def step(x):
            return vn_step(C, x)
    else:
        p = FamilyParams(*cfg.get("family", DR.as_tuple()))

        def step(x):
            return family_step(p, S, C, x)
    trace = iterate(step, cfg["x0"], int(cfg["max_n"]), float(cfg["conv_tol"]))
    trace.to_csv(out.csv("trajectory.csv"),
                 header_lines=[f"stop_reason: {trace.stop_reason.value}"])
    log.info("trajectory: %d steps, %s", trace.points.shape[0] - 1, trace.stop_reason.value)
    return EXIT_OK


def _table_rows(cfg):
    root = SamplerConfig(int(cfg["seed"]), int(cfg["pairs"]))
    for dim in cfg["dims"]:
        S = UnitSphere(dim)
        C = _constraint_set({**cfg, "dim": dim, "set": cfg["set"]} if "set" in cfg
                            else {"dim": dim, "lam": cfg["lam"]})
        for beta in cfg["betas"]:
            cut = 1.0 - beta
            region = Shell(Ball(np.zeros(dim), float(cfg["outer_radius"])), cut)
            cells = []
            if "reflection" in cfg["operators"]:
                cells.append(("reflection", "", sphere_reflection_bound(beta),
                              lambda X: 2.0 * S.project(X) - X))
            if "projection" in cfg["operators"]:
                cells.append(("projection", "", sphere_projection_bound(beta), S.project))
            if "family" in cfg["operators"]:
                for f in cfg["families"]:
                    p = FamilyParams(*f)
                    bound = dr_bound(beta) if p == DR else family_bound(p, beta)
                    cells.append(("family", " ".join(f"{v:.17g}" for v in f), bound,
                                  lambda X, p=p, C=C: family_step(p, S, C, X)))
            for name, params, bound, f in cells:
                # stable across processes, unlike hash()
                tag = zlib.crc32(f"{name}|{params}|{dim}|{beta!r}".encode())
                est = empirical_lipschitz(f, region, root.child(tag), tangential_radius=cut)
                yield {"operator": name, "params": params, "dim": dim, "beta": beta,
                       "theoretical": bound.value, "empirical": est.sup_ratio,
                       "pairs": est.pairs_tested, "seed": est.seed,
                       "ok": est.sup_ratio <= bound.value + EMPIRICAL_SLACK[name]}


def cmd_lipschitz_table(cfg, out: Outputs) -> int:
    fh = out.csv("bounds.csv")
    cols = ["operator", "params", "dim", "beta", "theoretical", "empirical", "slack", "ok",
            "pairs", "seed"]
    fh.write(",".join(cols) + "\n")
    ok = True
    for row in _table_rows(cfg):
        ok &= row["ok"]
        fh.write(",".join([row["operator"], row["params"], str(row["dim"]),
                           f"{row['beta']:.17g}", f"{row['theoretical']:.17g}",
                           f"{row['empirical']:.17g}",
                           f"{EMPIRICAL_SLACK[row['operator']]:.17g}",
                           str(row["ok"]).lower(), str(row["pairs"]),
                           str(row["seed"])]) + "\n")
        if not row["ok"]:
            log.warning("bound violated: %s", row)
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_ergodic(cfg, out: Outputs) -> int:
    kind = PIPELINE_KIND[cfg["command"]]
    run = {"dr": run_pipeline_dr, "family": run_pipeline_family, "vn": run_pipeline_vn}[kind]
    counts = PipelineCounts(**cfg.get("counts", {}))
    report = run(_constraint_set(cfg), _plan(cfg), SamplerConfig(int(cfg["seed"])), counts)
    out.json("report.json", report.to_dict())
    report.write_decay_csv(out.csv("decay.csv"))
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_sign_invariance(cfg, out: Outputs) -> int:
    rep = check_sign_invariance(float(cfg["lam"]), SamplerConfig(int(cfg["seed"]),
                                int(cfg["count"])), dim=int(cfg["dim"]),
                                radius=float(cfg["radius"]), hole=float(cfg["hole"]))
    out.json("sign_invariance.json", {
        "lam": rep.lam, "samples": rep.samples, "violations": rep.violations,
        "zero_starts": rep.zero_starts, "zero_max_abs": rep.zero_max_abs,
        "zero_tol": rep.zero_tol, "pass": rep.ok})
    return EXIT_OK if rep.ok else EXIT_VIOLATION


def cmd_extension_check(cfg, out: Outputs) -> int:
    dim, beta, r = int(cfg["dim"]), float(cfg["beta"]), float(cfg["r"])
    p = FamilyParams(*cfg["family"])
    C = _constraint_set(cfg)
    x0 = np.asarray(cfg["x0"], dtype=float)
    region = Ball(x0, r)
    root = SamplerConfig(int(cfg["seed"]), int(cfg["pairs"]))
    L = dr_bound(beta).value if p == DR else family_bound(p, beta).value
    F = build_F(C, beta, p, root.child(1), region, n_anchors=int(cfg["anchors"]), L=L)
    S = UnitSphere(dim)
    X = region.sample(root.child(2))
    X = X[norm(X) >= 1.0 - beta]
    bitwise = bool(np.array_equal(F(X), family_step(p, S, C, X)))
    est = empirical_lipschitz(F, region, root.child(3))
    inner = empirical_lipschitz(F, Ball(np.zeros(dim), 1.0 - beta + 0.1),
                                root.child(4, max(int(cfg["pairs"]) // 4, 2)))
    sup = max(est.sup_ratio, inner.sup_ratio)
    ok = bitwise and sup <= L + EXTENSION_SLACK
    out.json("extension_check.json", {
        "L": L, "empirical": sup, "empirical_region": est.sup_ratio,
        "empirical_inner": inner.sup_ratio, "slack": EXTENSION_SLACK,
        "outside_bitwise": bitwise, "outside_points": int(X.shape[0]),
        "solves": F.extension.solves, "worst_h": F.extension.worst_h,
        "anchors_final": len(F.extension.sample), "pass": ok})
    return EXIT_OK if ok else EXIT_VIOLATION


HANDLERS = {
    "trajectory": cmd_trajectory,
    "lipschitz-table": cmd_lipschitz_table,
    "ergodic-dr": cmd_ergodic,
    "ergodic-family": cmd_ergodic,
    "ergodic-vn": cmd_ergodic,
    "sign-invariance": cmd_sign_invariance,
    "extension-check": cmd_extension_check,
}


def run(config: dict, out_dir, seed: int | None = None) -> int:
    """Validate and execute one config; returns the exit code."""
    cfg = resolve(config, seed)
    problems = validate(cfg)
    if problems:
        for p in problems:
            print(f"precondition violated: {p}", file=sys.stderr)
        return EXIT_INVALID
    out = Outputs(Path(out_dir), cfg)
    try:
        code = HANDLERS[cfg["command"]](cfg, out)
    except PreconditionError as exc:
        for p in exc.violations:
            print(f"precondition violated: {p}", file=sys.stderr)
        return EXIT_INVALID
    except BoundViolation as exc:
        # the operator's own data breaks the bound the run relies on
        log.error("%s: bound violated: %s", cfg["command"], exc)
        out.fail(exc)
        return EXIT_VIOLATION
    except (FeasopsError, ArithmeticError, ValueError, RuntimeError) as exc:
        log.error("%s failed: %s", cfg["command"], exc)
        out.fail(exc)
        return EXIT_RUNTIME
    out.commit()
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="feasops", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path, default=Path("."))
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = json.loads(args.config.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if config.get("command", args.command) != args.command:
        print(f"config command {config['command']!r} does not match {args.command!r}",
              file=sys.stderr)
        return EXIT_INVALID
    config["command"] = args.command
    return run(config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
