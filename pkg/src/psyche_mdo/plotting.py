"""Figure-ready CSV emission and PNG rendering for solved runs.

The CSVs are the primary product; the PNGs are drawn from those same files
so that what is rendered is exactly what an external tool would read.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .propagate import PropagationResult
from .transcription import Solution

PLOT_FILES = {
    "polar_nodes": ("plot_polar_nodes.csv", ("t", "x", "y", "r", "theta")),
    "polar_propagated": ("plot_polar_propagated.csv", ("t", "x", "y", "r", "theta")),
    "radius_nodes": ("plot_radius_nodes.csv", ("t", "r")),
    "radius_propagated": ("plot_radius_propagated.csv", ("t", "r")),
    "controls": ("plot_controls.csv", ("t", "alpha", "P_E", "P_avail")),
    "mass_nodes": ("plot_mass_nodes.csv", ("t", "m")),
    "mass_propagated": ("plot_mass_propagated.csv", ("t", "m")),
}


def _write(path: Path, header, columns) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])
    return path


def emit_plot_data(solution: Solution, propagation: PropagationResult | None, out_dir) -> list[Path]:
    """Write one CSV per figure panel; propagated files are skipped without a propagation."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t, X = solution.t, solution.states
    r, th = X[:, 0], X[:, 1]
    data = {
        "polar_nodes": (t, r * np.cos(th), r * np.sin(th), r, th),
        "radius_nodes": (t, r),
        "controls": (t, solution.alpha, solution.P_E, solution.P_avail),
        "mass_nodes": (t, X[:, 4]),
    }
    if propagation is not None:
        tp, Y = propagation.t, propagation.states
        data["polar_propagated"] = (tp, Y[:, 0] * np.cos(Y[:, 1]), Y[:, 0] * np.sin(Y[:, 1]),
                                    Y[:, 0], Y[:, 1])
        data["radius_propagated"] = (tp, Y[:, 0])
        data["mass_propagated"] = (tp, Y[:, 4])
    written = []
    for key, cols in data.items():
        name, header = PLOT_FILES[key]
        written.append(_write(out / name, header, cols))
    return written


def _read(path: Path):
    if not path.is_file():
        return None
    data = np.genfromtxt(path, delimiter=",", names=True, encoding="utf-8")
    return {n: np.atleast_1d(data[n]) for n in data.dtype.names}


def render_figures(run_dir, body_radius: float | None = None) -> list[Path]:
    """Render PNGs from the plot CSVs in ``run_dir``; returns the files written."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run = Path(run_dir)
    d = {key: _read(run / name) for key, (name, _) in PLOT_FILES.items()}
    if d["polar_nodes"] is None:
        raise FileNotFoundError(f"no plot data in {run}")
    written = []

    fig, ax = plt.subplots(figsize=(6, 6))
    if d["polar_propagated"] is not None:
        p = d["polar_propagated"]
        ax.plot(p["x"] / 1e3, p["y"] / 1e3, "-", lw=1.0, label="propagated")
    n = d["polar_nodes"]
    ax.plot(n["x"] / 1e3, n["y"] / 1e3, "o", ms=3, mfc="none", label="collocation nodes")
    if body_radius:
        ax.add_patch(plt.Circle((0, 0), body_radius / 1e3, color="0.6"))
    ax.set_aspect("equal")
    ax.set_xlabel("x [km]")
    ax.set_ylabel("y [km]")
    ax.legend(loc="upper right")
    written.append(_save(fig, run / "fig_trajectory.png"))

    fig, ax = plt.subplots(figsize=(7, 4))
    if d["radius_propagated"] is not None:
        p = d["radius_propagated"]
        ax.plot(p["t"] / 3600, p["r"] / 1e3, "-", lw=1.0, label="propagated")
    n = d["radius_nodes"]
    ax.plot(n["t"] / 3600, n["r"] / 1e3, "o", ms=3, mfc="none", label="nodes")
    ax.set_xlabel("time [h]")
    ax.set_ylabel("radius [km]")
    ax.legend()
    written.append(_save(fig, run / "fig_radius.png"))

    c = d["controls"]
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    a1.plot(c["t"] / 3600, np.degrees(c["alpha"]), ".-", ms=3)
    a1.set_ylabel("steering angle [deg]")
    a2.plot(c["t"] / 3600, c["P_E"], ".-", ms=3, label="commanded P_E")
    a2.plot(c["t"] / 3600, c["P_avail"], "--", label="available")
    a2.set_xlabel("time [h]")
    a2.set_ylabel("power [W]")
    a2.legend()
    written.append(_save(fig, run / "fig_controls.png"))

    fig, ax = plt.subplots(figsize=(7, 4))
    if d["mass_propagated"] is not None:
        p = d["mass_propagated"]
        ax.plot(p["t"] / 3600, p["m"], "-", lw=1.0, label="propagated")
    n = d["mass_nodes"]
    ax.plot(n["t"] / 3600, n["m"], "o", ms=3, mfc="none", label="nodes")
    ax.set_xlabel("time [h]")
    ax.set_ylabel("mass [kg]")
    ax.legend()
    written.append(_save(fig, run / "fig_mass.png"))
    return written


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    import matplotlib.pyplot as plt
    plt.close(fig)
    return path
