#!/usr/bin/env python3
"""Bar plots of per-topic delta nDCG, one panel per number of fused variants.

    python scripts/plot_delta_ndcg.py OUTPUT_DIR --strategy P2 -o delta.png

Reads ``OUTPUT_DIR/analysis/delta-<strategy>-m<m>.tsv`` as written by
``qvfuse analyze``. Needs matplotlib (``pip install .[plot]``).
"""

import argparse
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_deltas(path: Path) -> list[float]:
    values = []
    for line in path.read_text("utf-8").splitlines():
        if line.strip():
            values.append(float(line.split("\t")[1]))
    return values


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("output_dir", type=Path)
    ap.add_argument("--strategy", default="P2")
    ap.add_argument("-o", "--out", type=Path, default=Path("delta-ndcg.png"))
    args = ap.parse_args()

    pattern = re.compile(rf"delta-{re.escape(args.strategy)}-m(\d+)\.tsv$")
    files = sorted(
        ((int(m.group(1)), p) for p in (args.output_dir / "analysis").glob("delta-*.tsv") if (m := pattern.search(p.name))),
    )
    if not files:
        raise SystemExit(f"no delta files for {args.strategy} under {args.output_dir / 'analysis'}")

    fig, axes = plt.subplots(1, len(files), figsize=(3.2 * len(files), 2.8), sharey=True, squeeze=False)
    for ax, (m, path) in zip(axes[0], files):
        deltas = read_deltas(path)
        colors = ["tab:green" if d > 0 else "tab:red" for d in deltas]
        ax.bar(range(len(deltas)), deltas, width=1.0, color=colors)
        ax.axhline(0, color="black", linewidth=0.5)
        ax.set_title(f"m = {m}")
        ax.set_xticks([])
        ax.set_xlabel("topics")
    axes[0][0].set_ylabel("delta nDCG")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
