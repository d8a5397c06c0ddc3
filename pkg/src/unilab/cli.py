"""Command line entry point: ``lab verify | train | sweep | metrics``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness, verification
from .config import load_config
from .errors import LabError
from .metrics import DEFAULT_T, global_uniformity, local_uniformity
from .textio import load_named, read_text, write_text


def cmd_verify(args) -> int:
    results = verification.run_suite(perturb=args.perturb, seed=args.seed)
    text = verification.report_csv(results)
    if args.out:
        write_text(args.out, text)
    sys.stdout.write(text)
    failed = [r.check for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    res = harness.train(cfg, args.out)
    f = res.final
    print(f"step {f.step}: loss_total={f.loss_total:.6g} unif_local_image={f.unif_local_image:.6g} "
          f"unif_local_report={f.unif_local_report:.6g} ({res.seconds:.1f}s) -> {args.out}")
    return 0


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    grid = harness.parse_grid(read_text(args.grid)) if args.grid else None
    rows = harness.sweep(base, grid, args.out, jobs=args.jobs)
    failed = sum(1 for _, _, err in rows if err)
    print(f"{len(rows)} cells, {failed} failed -> {Path(args.out) / harness.SWEEP_FILE}")
    return 0


def cmd_metrics(args) -> int:
    named = load_named(read_text(args.reps), header="REPS")
    values = {
        "unif_local_image": local_uniformity(named["y_s"], args.tau),
        "unif_local_report": local_uniformity(named["y_r"], args.tau),
        "unif_global_image": global_uniformity(named["ybar_s"], args.t),
        "unif_global_report": global_uniformity(named["ybar_r"], args.t),
    }
    print(",".join(values))
    print(",".join(repr(float(v)) for v in values.values()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description="Contrastive-loss decomposition and uniformity lab")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run the identity and gradient check suite")
    v.add_argument("--perturb", type=float, default=0.0, metavar="EPS",
                   help="add noise of this scale to the dist component (fault injection)")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="also write the CSV report here")
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("train", help="train one configuration")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="train every cell of a grid")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", help="grid file (key = v1, v2, ...); default: the variant's standard grid")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("metrics", help="recompute uniformity metrics from a reps dump")
    m.add_argument("--reps", required=True)
    m.add_argument("--tau", type=float, required=True)
    m.add_argument("--t", type=float, default=DEFAULT_T)
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LabError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
