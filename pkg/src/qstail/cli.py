"""Command-line front end.

Subcommands: ``mesh-bound``, ``tail-table``, ``simulate``, ``level-bound`` and
``verify``.  Exit status is 0 on success, 1 when ``verify`` finds a failing
invariant, 2 on usage errors, 3 on an internal inconsistency and 4 when a
resource cap is hit.

Every report carries a run manifest (command, effective parameters, seed,
version, timestamp): as trailing ``#`` lines in CSV files and as a
``manifest`` key in JSON.  Passing a manifest back through ``--config``
reruns the same command with the same parameters.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, chernoff, levelcount, mesh, simulator, verify
from ._backend import BACKEND, default_threads

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_INCONSISTENT = 3
EXIT_RESOURCE = 4

log = logging.getLogger("qstail")


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunManifest:
    command: str
    parameters: dict
    seed: int | None = None
    artifact_version: str = __version__
    timestamp: str = field(
        default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def comment_lines(self) -> tuple[str, ...]:
        return (f"manifest {self.to_json()}",)


# ---------------------------------------------------------------- config merging

DEFAULTS = {
    "mesh-bound": {"A": 10.0, "N": 100, "M": 100, "iterations": 50, "out": None,
                   "trace": None, "profiles": None, "snapshots": "0,1,5,50"},
    "tail-table": {"t_min": 8.0, "t_max": 200.0, "t_step": 1.0, "out": None},
    "simulate": {"kind": None, "n": None, "m": None, "replicates": 1000, "seed": 0,
                 "prune_epsilon": 0.0, "table_cutoff": simulator.DEFAULT_TABLE_CUTOFF,
                 "out": None, "binary_out": None, "summary": None,
                 "memory_cap": simulator.DEFAULT_MEMORY_CAP},
    "level-bound": {"t": None, "j": None},
    "verify": {"level": "quick", "seed": 0},
}


def _load_config(path: str | None, command: str) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    # a CSV report works too: take the manifest from its comment lines
    for line in text.splitlines():
        if line.startswith("# manifest "):
            text = line[len("# manifest "):]
            break
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    if "parameters" in data and "command" in data:
        if data["command"] != command:
            raise UsageError(f"manifest is for {data['command']!r}, not {command!r}")
        data = data["parameters"]
    unknown = set(data) - set(DEFAULTS[command])
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
    return data


def _effective(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    params = dict(DEFAULTS[args.command])
    params.update(_load_config(args.config, args.command))
    for key in DEFAULTS[args.command]:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    return params


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ---------------------------------------------------------------- commands


def cmd_mesh_bound(params: dict, threads: int) -> int:
    config = mesh.MeshConfig(A=float(params["A"]), N=int(params["N"]), M=int(params["M"]),
                             iterations=int(params["iterations"]))
    snapshots = tuple(int(s) for s in str(params["snapshots"]).split(",") if s.strip())
    trace = mesh.iterate(config, threads=threads, snapshot_at=snapshots)
    manifest = RunManifest("mesh-bound", params)
    log.info("L1 >= L0 on the grid: %s", trace.l1_dominates_l0)
    if params["out"]:
        trace.final.to_csv(params["out"], manifest.comment_lines())
    if params["trace"]:
        trace.to_csv(params["trace"], manifest.comment_lines())
    if params["profiles"]:
        _write_profiles(params["profiles"], trace, manifest)
    final = trace.u_bounds[-1] if trace.u_bounds.size else trace.u_initial
    print(f"U_{config.iterations} = {final:.6g}")
    return EXIT_OK


def _write_profiles(path: str, trace: mesh.IterationTrace, manifest: RunManifest) -> None:
    ms = sorted(trace.snapshots)
    xs = trace.final.x_grid[:-1]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(["x"] + [f"L_{m}" for m in ms]) + "\n")
        for k, x in enumerate(xs.tolist()):
            row = [repr(x)] + [repr(float(trace.snapshots[m][k])) for m in ms]
            fh.write(",".join(row) + "\n")
        for line in manifest.comment_lines():
            fh.write(f"# {line}\n")


TAIL_COLUMNS = ("t", "rate_lower", "rate_upper_numeric", "rate_upper_asymptote", "majorant", "j_star")


def tail_rows(t_min: float, t_max: float, t_step: float) -> list[tuple]:
    if not (2.0 < t_min <= t_max) or t_step <= 0:
        raise UsageError(f"need 2 < t_min <= t_max and t_step > 0, got {t_min}, {t_max}, {t_step}")
    count = int(math.floor((t_max - t_min) / t_step + 1e-9)) + 1
    rows = []
    for i in range(count):
        t = t_min + i * t_step
        row = chernoff.chernoff_majorant(t)
        numeric = asym = j_star = ""
        if t >= 8.0:
            bound = levelcount.optimize_level(t)
            if row.rate_lower > bound.rate_upper_numeric:
                raise mesh.InternalInconsistency(
                    f"rate_lower {row.rate_lower} > rate_upper_numeric {bound.rate_upper_numeric} at t={t}"
                )
            numeric, asym, j_star = bound.rate_upper_numeric, bound.rate_upper_asymptote, bound.j_star
        rows.append((t, row.rate_lower, numeric, asym, row.majorant, j_star))
    return rows


def cmd_tail_table(params: dict, threads: int) -> int:
    rows = tail_rows(float(params["t_min"]), float(params["t_max"]), float(params["t_step"]))
    manifest = RunManifest("tail-table", params)
    lines = [",".join(TAIL_COLUMNS)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    lines += [f"# {c}" for c in manifest.comment_lines()]
    text = "\n".join(lines) + "\n"
    if params["out"]:
        Path(params["out"]).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(params: dict, threads: int) -> int:
    if params["kind"] not in ("tn", "truncs"):
        raise UsageError("--kind must be 'tn' or 'truncs'")
    config = simulator.SimConfig(
        kind=params["kind"], replicates=int(params["replicates"]), seed=int(params["seed"]),
        n=None if params["n"] is None else int(params["n"]),
        m=None if params["m"] is None else int(params["m"]),
        prune_epsilon=float(params["prune_epsilon"]), table_cutoff=int(params["table_cutoff"]),
    )
    batch = simulator.run_batch(config, threads=threads, memory_cap=int(params["memory_cap"]))
    manifest = RunManifest("simulate", params, seed=config.seed)
    if params["out"]:
        simulator.write_samples_csv(params["out"], batch.samples, manifest.comment_lines())
    if params["binary_out"]:
        simulator.write_samples_binary(params["binary_out"], batch.samples)
    summary = batch.summary()
    if batch.exact is not None:
        summary["all_exact"] = bool(batch.exact.all())
    summary["manifest"] = json.loads(manifest.to_json())
    _write_json(params["summary"], summary)
    return EXIT_OK


def cmd_level_bound(params: dict, threads: int) -> int:
    if params["t"] is None:
        raise UsageError("--t is required")
    t = float(params["t"])
    out: dict = {"t": t}
    if params["j"] is not None:
        j = int(params["j"])
        out["level"] = asdict(levelcount.mu_sandwich(j, t))
        out["level"]["hitting_lower"] = levelcount.hitting_lower(j, t)
    if t >= 8.0:
        out["bound"] = asdict(levelcount.optimize_level(t))
        out["bound"]["rate_lower"] = chernoff.rate_lower(t)
    elif params["j"] is None:
        raise UsageError("optimize_level needs t >= 8; pass --j for a single-level dump")
    out["manifest"] = json.loads(RunManifest("level-bound", params).to_json())
    _write_json(None, out)
    return EXIT_OK


def cmd_verify(params: dict, threads: int) -> int:
    results = verify.run(params["level"], int(params["seed"]), emit=print)
    failed = [r.name for r in results if not r.passed]
    print(f"{'FAIL' if failed else 'PASS'} overall ({len(results) - len(failed)}/{len(results)} groups)")
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {
    "mesh-bound": cmd_mesh_bound,
    "tail-table": cmd_tail_table,
    "simulate": cmd_simulate,
    "level-bound": cmd_level_bound,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of parameters or a run manifest; flags override it")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $QST_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qstail", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-bound", parents=[common], help="iterate the mesh scheme and print U_m")
    p.add_argument("--A", type=float)
    p.add_argument("--N", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--out", help="final step CDF as CSV (x,value)")
    p.add_argument("--trace", "--trace-path", dest="trace", help="U_m sequence as CSV (m,U_m)")
    p.add_argument("--profiles", help="CSV of L_m(x) for the --snapshots iterations")
    p.add_argument("--snapshots", help="comma-separated iteration numbers for --profiles")

    p = sub.add_parser("tail-table", parents=[common], help="rate-function bounds over a t grid")
    p.add_argument("--t-min", dest="t_min", type=float)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--t-step", dest="t_step", type=float)
    p.add_argument("--out")

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo batch of T_n/n or S^(m)")
    p.add_argument("--kind", choices=("tn", "truncs"))
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--prune-epsilon", dest="prune_epsilon", type=float)
    p.add_argument("--table-cutoff", dest="table_cutoff", type=int,
                   help="draw subtrees of at most this size from their exact law (0 = full tree)")
    p.add_argument("--out", help="samples as CSV")
    p.add_argument("--binary-out", dest="binary_out", help="samples as LE float64 with a u64 count prefix")
    p.add_argument("--summary", help="JSON summary path (default: stdout)")
    p.add_argument("--memory-cap", dest="memory_cap", type=int, help="bytes")

    p = sub.add_parser("level-bound", parents=[common], help="dump level-count bounds for (j, t)")
    p.add_argument("--t", type=float)
    p.add_argument("--j", type=int)

    p = sub.add_parser("verify", parents=[common], help="run the invariant suites")
    p.add_argument("--level", choices=("quick", "full"))
    p.add_argument("--seed", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = default_threads() if args.threads is None else args.threads
    try:
        if threads < 1:
            raise UsageError("--threads must be >= 1")
        params = _effective(args)
        return COMMANDS[args.command](params, threads)
    except mesh.InternalInconsistency as exc:
        print(f"internal inconsistency: {exc}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except simulator.ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
