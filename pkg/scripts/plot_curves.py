"""
Plot suboptimality curves from one or more experiment output directories.

    python scripts/plot_curves.py results/rep_ucb results/eps_greedy --out curves.png

Each directory contributes the median suboptimality with the interquartile
band, recomputed from its per-seed CSV files. Requires the ``plot`` extra.
"""

import argparse
import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from replearn.harness.experiment import aggregate_curves  # noqa: E402
from replearn.harness.models import Algorithm, ExperimentSpec  # noqa: E402
from replearn.harness.serialization import read_csv  # noqa: E402

logger = logging.getLogger(__name__)


def load_curve(directory: Path) -> tuple[str, str, list[dict[str, float]]]:
    """
    Recompute the curve from the per-seed CSV files, with the optimal value
    taken from ``metadata.json``.
    """
    metadata = json.loads((directory / "metadata.json").read_text())
    spec = ExperimentSpec.model_validate(metadata["config"])
    offline = spec.algorithm is Algorithm.REP_LCB
    key, value = ("n", "value") if offline else ("episode", "value_pin")
    frames = {
        seed: read_csv(directory / f"seed_{seed}.csv") for seed in spec.seeds
    }
    summaries = metadata["seed_summaries"]
    optimal = summaries[str(spec.seeds[0])]["optimal_value"]
    return spec.algorithm.value, key, aggregate_curves(frames, key, value, optimal)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("directories", type=Path, nargs="+")
    parser.add_argument("--out", type=Path, default=Path("curves.png"))
    parser.add_argument("--log-x", action="store_true")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    fig, ax = plt.subplots(figsize=(7.2, 4.0))
    key = "episode"
    for directory in args.directories:
        algorithm, key, curve = load_curve(directory)
        if not curve:
            logger.warning("Empty curve in %s.", directory)
            continue
        xs = [point[key] for point in curve]
        ax.plot(xs, [point["median"] for point in curve], label=algorithm)
        ax.fill_between(
            xs,
            [point["q25"] for point in curve],
            [point["q75"] for point in curve],
            alpha=0.25,
        )
    ax.set_xlabel("dataset size" if key == "n" else "episode")
    ax.set_ylabel("suboptimality")
    if args.log_x:
        ax.set_xscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, bbox_inches="tight")
    plt.close(fig)
    logger.info("Wrote %s.", args.out)


if __name__ == "__main__":
    main()
