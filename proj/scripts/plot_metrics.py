#!/usr/bin/env python3
"""Plot per-epoch training curves from one or more metrics CSV files.

The pipeline writes CSVs with columns ``epoch,loss,accuracy,recall0,...``.
This renders loss and accuracy side by side (recalls optional) so runs can
be compared at a glance:

    python3 scripts/plot_metrics.py runs/train.csv runs/pretrain_eye.csv \
        --recalls -o curves.png
"""

import argparse
import csv
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_metrics(path: pathlib.Path) -> dict[str, list[float]]:
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "epoch" not in reader.fieldnames:
            raise SystemExit(f"{path}: not a metrics CSV (no 'epoch' column)")
        columns: dict[str, list[float]] = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name, value in row.items():
                columns[name].append(float(value))
    return columns


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv", nargs="+", type=pathlib.Path, help="metrics CSV file(s)")
    parser.add_argument("-o", "--output", type=pathlib.Path, default=pathlib.Path("metrics.png"),
                        help="output image (default: metrics.png)")
    parser.add_argument("--recalls", action="store_true",
                        help="add a third panel with per-class recall curves")
    args = parser.parse_args()

    panels = 3 if args.recalls else 2
    fig, axes = plt.subplots(1, panels, figsize=(5 * panels, 4))

    for path in args.csv:
        columns = read_metrics(path)
        epochs = columns["epoch"]
        if not epochs:
            print(f"{path}: no epochs recorded, skipping", file=sys.stderr)
            continue
        label = path.stem
        axes[0].plot(epochs, columns["loss"], label=label)
        axes[1].plot(epochs, columns["accuracy"], label=label)
        if args.recalls:
            for name in columns:
                if name.startswith("recall"):
                    axes[2].plot(epochs, columns[name], label=f"{label} {name}")

    axes[0].set_title("training loss")
    axes[1].set_title("training accuracy")
    axes[1].set_ylim(0.0, 1.05)
    if args.recalls:
        axes[2].set_title("per-class recall")
        axes[2].set_ylim(0.0, 1.05)
    for ax in axes:
        ax.set_xlabel("epoch")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize="small")

    fig.tight_layout()
    fig.savefig(args.output, dpi=120)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
