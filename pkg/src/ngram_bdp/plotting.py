"""Matplotlib figures for sweep and attack results (files only, Agg backend)."""

from __future__ import annotations

import collections
import re
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SUFFIX = re.compile(r"^(?P<metric>[^\[]+)(\[(?P<param>[^=]+)=(?P<value>[^\]]+)\])?$")


def _x_value(row: Dict[str, str], parameter: str):
    m = _SUFFIX.match(row["metric"])
    if m.group("value") is not None:
        return float(m.group("value"))
    if parameter == "epsilon":
        # non-private rows carry no epsilon; they plot as a flat reference line
        return float(row["epsilon"]) if row["epsilon"] else float("nan")
    raise ValueError(f"row does not carry a {parameter} value: {row}")


def sweep_medians(rows: Sequence[Dict[str, str]], parameter: str, metric: str):
    """``{mechanism: (xs, medians)}`` with medians taken over seeds."""
    groups = collections.defaultdict(list)
    for row in rows:
        m = _SUFFIX.match(row["metric"])
        if m is None or m.group("metric") != metric:
            continue
        x = _x_value(row, parameter)
        groups[(row["mechanism"], x)].append(float(row["value"]))
    out: Dict[str, List] = collections.defaultdict(lambda: ([], []))
    def order(item):
        mech, x = item[0]
        return mech, -np.inf if np.isnan(x) else x

    for (mech, x), values in sorted(groups.items(), key=order):
        out[mech][0].append(x)
        out[mech][1].append(float(np.median(values)))
    return dict(out)


def plot_sweep(rows, parameter: str, metric: str, path):
    series = sweep_medians(rows, parameter, metric)
    log_y = metric in ("kl", "perplexity")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    finite_x = []
    for i, (mech, (xs, ys)) in enumerate(sorted(series.items())):
        xs, ys = np.asarray(xs), np.asarray(ys)
        colour = f"C{i % 10}"
        if log_y and np.all(ys <= 0):
            # e.g. the private reference against itself; cannot sit on a log axis
            ax.plot([], [], color=colour, ls="--", label=f"{mech} (= 0)")
        elif len(xs) == 1 or np.all(np.isnan(xs) | (xs <= 0)):
            # not a function of the swept value (non-private or zero budget)
            ax.axhline(ys[0], color=colour, ls="--", lw=1, label=mech)
        else:
            ax.plot(xs, ys, color=colour, marker="o", label=mech)
            finite_x.extend(xs[~np.isnan(xs)])
    if parameter in ("epsilon", "num_users", "public_noise") and finite_x and \
            min(finite_x) > 0:
        ax.set_xscale("log")
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel(parameter)
    ax.set_ylabel(f"median {metric}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_attack(reports, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for rep in reports:
        ax.plot(rep.epsilons, rep.inference_probabilities, marker="o", label=rep.mechanism)
    ax.axhline(0.5, color="grey", lw=0.8, ls=":")
    ax.set_xscale("log")
    ax.set_ylim(0, 1)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("membership inference probability")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
