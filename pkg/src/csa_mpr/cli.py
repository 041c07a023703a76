"""Command-line front end: threshold, bound, coupled-chain and simulation runs.

Every command validates its inputs first, computes, then writes outputs
atomically (temp file + rename) together with a manifest sidecar recording
the command, parameters, seed, tool version and output checksums.  Numeric
CSV fields use a fixed 10-significant-digit format so identical runs give
byte-identical files.

Exit codes: 0 success, 2 validation error, 3 numerical non-convergence.
"""

import argparse
import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .bound import BoundQuery, converse_bound
from .de_core import Ensemble, load_threshold, repetition_ensemble
from .errors import ConvergenceError, ValidationError
from .sc_de import CoupledConfig, coupled_threshold
from .simulator import SimConfig, run_trials

THREADS_ENV = "CSA_MPR_THREADS"

TABLE_CELLS = tuple((d, k) for d in (3, 4) for k in (1, 2, 3))


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    return max(1, n)


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_with_manifest(command: str, params: dict, out: Path, text: str) -> Path:
    out = Path(out)
    _atomic_write(out, text)
    digest = hashlib.sha256(text.encode()).hexdigest()
    manifest = {
        "command": command,
        "params": params,
        "seed": params.get("seed"),
        "version": __version__,
        "outputs": {out.name: digest},
    }
    manifest_path = out.with_name(out.name + ".manifest.json")
    _atomic_write(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _csv(header: list[str], rows: list[list[str]]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _parse_int_list(raw: str, name: str) -> list[int]:
    try:
        values = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"--{name} must be a comma-separated integer list, got {raw!r}")
    if not values:
        raise ValidationError(f"--{name} must not be empty")
    return values


def _parse_float_list(raw: str, name: str) -> list[float]:
    try:
        values = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"--{name} must be a comma-separated number list, got {raw!r}")
    if not values:
        raise ValidationError(f"--{name} must not be empty")
    return values


def _load_ensemble(path: str) -> Ensemble:
    try:
        with open(path) as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise ValidationError(f"ensemble file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"ensemble file {path} is not valid JSON: {exc}")
    return Ensemble.from_dict(data)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_bound(args) -> int:
    k_list = _parse_int_list(args.K, "K")
    params = {"rate": args.rate, "grid": args.grid, "K": k_list, "tol": args.tol}
    if args.grid is not None:
        if args.grid < 1:
            raise ValidationError(f"--grid must be >= 1, got {args.grid}")
        step = 0.99 / args.grid
        rates = [0.005 + i * step for i in range(1, args.grid + 1)]
        rows = []
        for rate in rates:
            for k in sorted(k_list):
                res = converse_bound(BoundQuery(rate=rate, k_mpr=k, tol=args.tol))
                rows.append([_fmt(rate), str(k), _fmt(res.normalized)])
        out = Path(args.out or "bound.csv")
        manifest = _write_with_manifest(
            "bound", params, out, _csv(["R", "K", "bound_normalized"], rows)
        )
    else:
        if args.rate is None:
            raise ValidationError("bound needs --rate or --grid")
        if len(k_list) != 1:
            raise ValidationError("single-rate bound takes exactly one K")
        res = converse_bound(BoundQuery(rate=args.rate, k_mpr=k_list[0], tol=args.tol))
        out = Path(args.out or "bound.json")
        manifest = _write_with_manifest("bound", params, out, _json_text(res.to_dict()))
        print(f"normalized bound: {_fmt(res.normalized)}"
              + (" (degenerate)" if res.degenerate else ""))
    print(f"manifest: {manifest}")
    return 0


def cmd_threshold(args) -> int:
    ensemble = _load_ensemble(args.ensemble)
    params = {"ensemble": args.ensemble, "K": args.K, "tol": args.tol}
    result = load_threshold(ensemble, k_mpr=args.K, tol=args.tol)
    out = Path(args.out or "threshold.json")
    manifest = _write_with_manifest(
        "threshold", params, out, _json_text(result.to_dict())
    )
    print(f"load threshold: {_fmt(result.g_star)}")
    print(f"manifest: {manifest}")
    return 0


def cmd_sc_threshold(args) -> int:
    lengths = tuple(_parse_int_list(args.L, "L"))
    config = CoupledConfig(
        degree=args.d,
        chain_length=max(lengths),
        k_mpr=args.K,
        width=args.w,
        randomized=args.randomized,
    )
    params = {
        "d": args.d,
        "K": args.K,
        "w": config.width,
        "L": list(lengths),
        "tol": args.tol,
        "randomized": args.randomized,
    }
    result = coupled_threshold(config, tol=args.tol, chain_lengths=lengths)
    out = Path(args.out or "sc_threshold.json")
    manifest = _write_with_manifest(
        "sc-threshold", params, out, _json_text(result.to_dict())
    )
    print(f"coupled threshold (L={max(lengths)}): {_fmt(result.g_star)}")
    print(f"manifest: {manifest}")
    return 0


def cmd_table1(args) -> int:
    lengths = tuple(_parse_int_list(args.L, "L"))
    largest = max(lengths)
    params = {"L": list(lengths), "tol": args.tol}
    rows = []
    for d, k in sorted(TABLE_CELLS, key=lambda cell: (1.0 / cell[0], cell[1])):
        sc = coupled_threshold(
            CoupledConfig(degree=d, chain_length=largest, k_mpr=k),
            tol=args.tol,
            chain_lengths=(largest,),
        )
        res = converse_bound(BoundQuery(rate=1.0 / d, k_mpr=k))
        rows.append(
            [
                _fmt(1.0 / d),
                str(k),
                str(d),
                str(largest),
                _fmt(sc.normalized),
                _fmt(res.normalized),
                _fmt(res.normalized - sc.normalized),
            ]
        )
    out = Path(args.out or "table1.csv")
    manifest = _write_with_manifest(
        "table1",
        params,
        out,
        _csv(["R", "K", "d", "L", "sc_normalized", "bound_normalized", "delta"], rows),
    )
    print(f"manifest: {manifest}")
    return 0


def _simulate_point(payload: tuple) -> dict:
    config = SimConfig(**payload[0])
    return run_trials(config).to_dict()


def cmd_simulate(args) -> int:
    loads = sorted(_parse_float_list(args.G, "G"))
    if args.ensemble:
        ensemble = _load_ensemble(args.ensemble)
    else:
        ensemble = repetition_ensemble(args.repetition)
    if args.trials < 1:
        raise ValidationError(f"--trials must be >= 1, got {args.trials}")
    params = {
        "ensemble": args.ensemble or f"repetition({args.repetition})",
        "K": args.K,
        "M": args.M,
        "G": loads,
        "trials": args.trials,
        "seed": args.seed,
    }
    configs = []
    for load in loads:
        n_users = round(load * args.M)
        if n_users < 1:
            raise ValidationError(f"load {load} gives no users at M={args.M}")
        configs.append(
            dict(
                n_users=n_users,
                n_slots=args.M,
                slices_per_slot=ensemble.n_info_segments,
                ensemble=ensemble,
                k_mpr=args.K,
                seed=args.seed,
                trials=args.trials,
            )
        )
    threads = _threads()
    if threads > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            stats = list(pool.map(_simulate_point, [(c,) for c in configs]))
    else:
        stats = [_simulate_point((c,)) for c in configs]
    rows = [
        [
            _fmt(s["G"]),
            str(s["K"]),
            str(s["M"]),
            str(s["trials"]),
            _fmt(s["PLR"]),
            _fmt(s["PLR_ci_lo"]),
            _fmt(s["PLR_ci_hi"]),
            _fmt(s["throughput"]),
        ]
        for s in stats
    ]
    out = Path(args.out or "simulate.csv")
    manifest = _write_with_manifest(
        "simulate",
        params,
        out,
        _csv(
            ["G", "K", "M", "trials", "PLR", "PLR_ci_lo", "PLR_ci_hi", "throughput"],
            rows,
        ),
    )
    print(f"manifest: {manifest}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csa-mpr",
        description="Load thresholds, converse bounds and simulations for "
        "coded slotted ALOHA with multi-packet reception.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="converse bound on the load threshold")
    p.add_argument("--rate", type=float, help="code rate in (0, 1]")
    p.add_argument("--grid", type=int, help="emit a CSV over N rates in (0.005, 0.995]")
    p.add_argument("--K", default="1", help="reception capability (comma list in grid mode)")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("threshold", help="density-evolution load threshold of an ensemble")
    p.add_argument("--ensemble", required=True, help="ensemble JSON file")
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("sc-threshold", help="spatially-coupled chain threshold")
    p.add_argument("--d", type=int, required=True, help="replica degree")
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--w", type=int, help="coupling width (default: d)")
    p.add_argument("--L", default="50,100,200,400", help="chain lengths, comma list")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--randomized", action="store_true", help="uniform window placement")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sc_threshold)

    p = sub.add_parser(
        "table1",
        help="coupled thresholds vs converse for rate-1/3 and 1/4 repetition schemes",
    )
    p.add_argument("--L", default="50,100,200,400")
    p.add_argument("--tol", type=float, default=5e-4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("simulate", help="finite-frame Monte Carlo sweep")
    p.add_argument("--ensemble", help="ensemble JSON file")
    p.add_argument(
        "--repetition",
        type=int,
        default=3,
        help="use an (n,1) repetition ensemble when no file is given",
    )
    p.add_argument("--G", required=True, help="loads to sweep, comma list")
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--M", type=int, required=True, help="slots per frame")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
