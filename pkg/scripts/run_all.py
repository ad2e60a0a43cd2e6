"""Run the CLI over every shipped config and print one status line per run.

    python scripts/run_all.py [--out runs] [--threads 4]
"""

import argparse
import time
from pathlib import Path

from cauchytime.cli import main

ROOT = Path(__file__).resolve().parents[1]

RUNS = [
    ("diamond.toml", ["build"]),
    ("diamond.toml", ["geroch"]),
    ("carved.toml", ["geroch", "--expect-noncauchy", "tplus"]),
    ("minkowski.toml", ["steep"]),
    ("minkowski.toml", ["adapt"]),
    ("minkowski.toml", ["export"]),
    ("cyl_z4.toml", ["invariant", "--steep"]),
    ("warp.toml", ["invariant"]),
]


def run():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs"))
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    worst = 0
    for cfg, cmd in RUNS:
        out = args.out / f"{Path(cfg).stem}-{cmd[0]}"
        t0 = time.perf_counter()
        code = main([*cmd, "--config", str(ROOT / "configs" / cfg), "--out", str(out),
                     "--threads", str(args.threads)])
        print(f"{' '.join(cmd):40s} {cfg:16s} exit {code}  {time.perf_counter() - t0:6.1f}s  -> {out}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    raise SystemExit(run())
