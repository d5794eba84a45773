"""Render figures from the CSV files the smpl CLI writes.

    python scripts/plot.py boundary grid.csv --out boundary.png
    python scripts/plot.py trajectory trajectory.csv --out trajectory.png
    python scripts/plot.py metrics runs/moons-smpl-seed0/metrics.csv --out losses.png

Optional: nothing in the crate depends on it. Needs matplotlib.
"""

import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def boundary(rows, ax):
    xs = sorted({float(r["x"]) for r in rows})
    ys = sorted({float(r["y"]) for r in rows})
    col = {v: i for i, v in enumerate(xs)}
    row = {v: i for i, v in enumerate(ys)}
    grid = [[0.0] * len(xs) for _ in ys]
    for r in rows:
        # Signed confidence: blue for class 0, red for class 1.
        p = float(r["max_prob"])
        grid[row[float(r["y"])]][col[float(r["x"])]] = p if r["class"] == "1" else 1.0 - p
    ax.imshow(grid, origin="lower", extent=(xs[0], xs[-1], ys[0], ys[-1]),
              cmap="coolwarm", vmin=0.0, vmax=1.0, aspect="auto")
    ax.contour(xs, ys, grid, levels=[0.5], colors="k", linewidths=1)
    ax.set_xlabel("x")
    ax.set_ylabel("y")


def trajectory(rows, ax):
    # Draws every point in file order so each step shows its two moves.
    pts = [(float(r["x"]), float(r["y"]), r["phase"]) for r in rows]
    ax.plot([p[0] for p in pts], [p[1] for p in pts], color="0.7", lw=0.6, zorder=1)
    for phase, colour in (("step_one", "tab:orange"), ("step_two", "tab:blue")):
        sel = [p for p in pts if p[2] == phase]
        ax.scatter([p[0] for p in sel], [p[1] for p in sel], s=6, c=colour, label=phase, zorder=2)
    start = [p for p in pts if p[2] == "init"]
    if start:
        ax.scatter([start[0][0]], [start[0][1]], marker="*", s=80, c="k", label="init", zorder=3)
    ax.set_xlabel("projection 1")
    ax.set_ylabel("projection 2")
    ax.legend()


def metrics(rows, ax):
    steps = [int(r["step"]) for r in rows]
    for key in ("labeled_ce_before", "l1", "l2", "delta_ce"):
        ax.plot(steps, [float(r[key]) for r in rows], lw=0.8, label=key)
    ax.set_xlabel("step")
    ax.legend()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("kind", choices=["boundary", "trajectory", "metrics"])
    ap.add_argument("csv")
    ap.add_argument("--out", default="figure.png")
    args = ap.parse_args()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    {"boundary": boundary, "trajectory": trajectory, "metrics": metrics}[args.kind](read(args.csv), ax)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
