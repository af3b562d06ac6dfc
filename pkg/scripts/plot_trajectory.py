"""
Plot an optimization run: SS, Ioff, Ion and the on-off ratio against the
iteration index, with the specification limits as dashed lines.
Non-convergent iterations are left out of the lines, so they show as gaps.

Usage:
    python scripts/plot_trajectory.py runs/surrogate_baseline
    python scripts/plot_trajectory.py runs/llm_quantitative --out trajectory.png
"""

import argparse
from pathlib import Path

from tcadloop.orchestrator import CONFIG_FILE, TRAJECTORY_FILE, load_config, load_trajectory
from tcadloop.params import SpecTargets
from tcadloop.plots import trajectory_figure


def main():
    parser = argparse.ArgumentParser(description="Plot the metric trajectory of a run.")
    parser.add_argument("run", help="Run directory")
    parser.add_argument("--out", default=None, help="Image file (default: <run>/trajectory.png)")
    parser.add_argument("--dpi", type=int, default=150)
    args = parser.parse_args()

    run = Path(args.run)
    history = load_trajectory(run / TRAJECTORY_FILE)
    targets = load_config(run / CONFIG_FILE).targets if (run / CONFIG_FILE).is_file() else SpecTargets()

    out = Path(args.out) if args.out else run / "trajectory.png"
    fig = trajectory_figure(history, targets, title=f"Optimization trajectory: {run.name}")
    fig.savefig(out, dpi=args.dpi)
    print(f"Wrote: {out}")


if __name__ == "__main__":
    main()
