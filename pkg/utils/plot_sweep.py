#!/usr/bin/env python3
"""
Render a sweep CSV written by `dris_sim.py analyze|simulate` to a PNG.

    python utils/plot_sweep.py asr.csv asr.png --series e_ar,e_an
    python utils/plot_sweep.py fake.csv fake.png --series p2,p_r --log
"""
import argparse
import csv
import logging
import math
import os
import sys
from typing import Dict, List, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

logging.basicConfig(
    level=os.getenv('DRIS_LOG_LEVEL', 'INFO').upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("plot_sweep")

LABELS = {
    "e_ar": "E_ar (reciprocal)",
    "e_an": "E_an (non-reciprocal)",
    "e_d": "E_d (direct)",
    "c_a": "C_a",
    "c_e": "C_e",
    "p2": "P_2 (reciprocal baseline)",
    "p_r": "P_r (non-reciprocal)",
    "emp_p2": "P_2 Monte Carlo",
}


def read_sweep(path: str) -> Tuple[Dict[str, str], List[Dict[str, str]]]:
    """Metadata lines and data rows of a sweep CSV"""
    meta = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = []
        for line in f:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    return meta, list(csv.DictReader(lines))


def _number(text: str) -> float:
    return float(text) if text not in ("", None) else math.nan


def plot_sweep(source: str, destination: str, series: List[str], log_scale: bool = False) -> str:
    meta, rows = read_sweep(source)
    if not rows:
        raise ValueError(f"{source} has no data rows")
    missing = [name for name in series if name not in rows[0]]
    if missing:
        raise ValueError(f"{source} has no columns {missing}")
    axis = rows[0].get("axis", "value")
    x = [_number(r["value"]) for r in rows]

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name in series:
        y = [_number(r[name]) for r in rows]
        ci = f"{name}_ci"
        if ci in rows[0] and all(r[ci] for r in rows):
            ax.errorbar(x, y, yerr=[_number(r[ci]) for r in rows], marker="o", capsize=3,
                        label=LABELS.get(name, name))
        else:
            ax.plot(x, y, marker="o", label=LABELS.get(name, name))
    if log_scale:
        ax.set_yscale("log")
    ax.set_xlabel(axis)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    ax.set_title(f"seed {meta.get('seed', '?')}, {rows[0].get('trials', '0')} trials")
    fig.tight_layout()
    fig.savefig(destination, dpi=150)
    plt.close(fig)
    logger.info(f"Saved {destination}")
    return destination


def main() -> int:
    parser = argparse.ArgumentParser(description="Plot a D-RIS sweep CSV")
    parser.add_argument("source")
    parser.add_argument("destination")
    parser.add_argument("--series", default="e_ar,e_an", help="comma-separated column names")
    parser.add_argument("--log", action="store_true", help="logarithmic y axis")
    args = parser.parse_args()
    try:
        plot_sweep(args.source, args.destination, [s.strip() for s in args.series.split(",") if s.strip()], args.log)
    except (OSError, ValueError) as e:
        logger.error(f"Plot failed: {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
