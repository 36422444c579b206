"""Matplotlib rendering of the delimited outputs (PNG next to each CSV)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_MODE_STYLE = {
    "lp-galerkin": dict(color="tab:red", marker="o"),
    "lp-minres": dict(color="tab:purple", marker="v"),
    "lp-explicit": dict(color="tab:red", marker="o"),
    "pod": dict(color="tab:blue", marker="s"),
    "learning": dict(color="tab:green", marker="^"),
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(Path(path), dpi=130)
    plt.close(fig)


def spectrum_figure(path, spectra: dict) -> None:
    """Semilog singular-value decay, one line per labelled spectrum."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for label, sigma in spectra.items():
        sigma = np.asarray(sigma, dtype=float)
        n = np.arange(1, sigma.size + 1)
        positive = sigma > 0
        ax.semilogy(n[positive], sigma[positive], marker=".", lw=1, label=label)
    ax.set_xlabel("n")
    ax.set_ylabel(r"$\sigma_n$")
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path)


def error_vs_r_figure(path, rows) -> None:
    """rows of (r, mode, e_average) -> one line per mode."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    modes = sorted({m for _, m, _ in rows})
    for mode in modes:
        pts = sorted((r, e) for r, m, e in rows if m == mode)
        ax.semilogy([p[0] for p in pts], [p[1] for p in pts],
                    label=mode, lw=1.2, **_MODE_STYLE.get(mode, {}))
    ax.set_xlabel("reduced order r")
    ax.set_ylabel("average relative error")
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path)


def error_history_figure(path, histories: dict) -> None:
    """histories keyed by (r, mode, tag) -> (times, relative errors)."""
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    for (r, mode, tag), (t, e) in sorted(histories.items()):
        style = dict(_MODE_STYLE.get(mode, {}))
        style.pop("marker", None)
        ax.semilogy(t, np.maximum(e, 1e-16), lw=0.9, alpha=0.7,
                    label=f"{mode} r={r}" if tag.endswith("mu0") or tag == "errors" else None,
                    **style)
    ax.set_xlabel("t")
    ax.set_ylabel("relative error")
    handles, labels = ax.get_legend_handles_labels()
    if labels:
        ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path)


def basis_profiles_figure(path, nodes, columns: dict) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    for name, vals in columns.items():
        ax.plot(nodes, vals, lw=1, label=name)
    ax.set_xlabel("x")
    ax.set_ylabel("basis value")
    if len(columns) <= 10:
        ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    _save(fig, path)


def solution_overlay_figure(path, nodes, columns: dict) -> None:
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    for name, vals in columns.items():
        style = {"lw": 1.4, "ls": "-"} if name.startswith("full") else {"lw": 1.0, "ls": "--"}
        ax.plot(nodes, vals, label=name, **style)
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, path)


def timing_figure(path, rows) -> None:
    """rows of dicts with nx, basis_eval_s, projection_solve_s, fom_solve_s."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    nx = [row["nx"] for row in rows]
    for key, label in (
        ("basis_eval_s", "basis evaluation"),
        ("projection_solve_s", "projection solve"),
        ("fom_solve_s", "full-order solve"),
    ):
        ax.loglog(nx, [row[key] for row in rows], marker="o", lw=1.2, label=label)
    ax.set_xlabel("online nodes")
    ax.set_ylabel("seconds per step")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    _save(fig, path)
