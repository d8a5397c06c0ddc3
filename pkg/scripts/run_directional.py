"""Train the lovt_uni_gauss and global_only configurations and compare their uniformities.

    python scripts/run_directional.py [--out runs/directional] [--seeds 0 1 2]

Each seed trains both objectives from the same initial parameters and
mini-batch order; the table lists the final metrics and the per-seed gains.
"""

import argparse
from pathlib import Path

from unilab import harness
from unilab.config import load_config

HERE = Path(__file__).resolve().parent
METRICS = ("unif_local_image", "unif_local_report", "unif_global_image", "unif_global_report", "align_global")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--uni", default=str(HERE / "configs" / "directional_uni_gauss.cfg"))
    ap.add_argument("--base", default=str(HERE / "configs" / "directional_global_only.cfg"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--out", help="write each run's outputs under this directory")
    args = ap.parse_args(argv)

    uni_cfg, base_cfg = load_config(args.uni), load_config(args.base)
    print("seed,objective," + ",".join(METRICS) + ",seconds")
    gains = []
    for seed in args.seeds:
        finals = {}
        for cfg in (uni_cfg.with_values(seed=seed), base_cfg.with_values(seed=seed)):
            out = None if args.out is None else Path(args.out) / f"{cfg.objective}_seed{seed}"
            res = harness.train(cfg, out)
            finals[cfg.objective] = res.final
            print(f"{seed},{cfg.objective}," + ",".join(f"{getattr(res.final, m):.4f}" for m in METRICS)
                  + f",{res.seconds:.1f}")
        u, b = finals[uni_cfg.objective], finals[base_cfg.objective]
        gains.append({m: getattr(u, m) - getattr(b, m) for m in METRICS})
    print()
    print("seed," + ",".join(f"gain_{m}" for m in METRICS))
    for seed, g in zip(args.seeds, gains):
        print(f"{seed}," + ",".join(f"{g[m]:+.4f}" for m in METRICS))


if __name__ == "__main__":
    main()
