"""Discrete error norms, spectra, and the CSV emitters behind all tables."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .linalg import thin_svd


def l2_error(u_red, u_full, weights) -> float:
    """Weighted discrete L2 norm sqrt(sum (u_red - u_full)^2 * w).

    ``weights`` is a scalar spacing or a per-node weight vector (nonuniform
    meshes use dual cell widths).
    """
    u_red = np.asarray(u_red, dtype=float)
    u_full = np.asarray(u_full, dtype=float)
    if u_red.shape != u_full.shape:
        raise ValueError(f"length mismatch: {u_red.shape} vs {u_full.shape}")
    w = np.asarray(weights, dtype=float)
    if w.ndim and w.shape != u_red.shape:
        raise ValueError(f"weights shape {w.shape} does not match {u_red.shape}")
    diff = u_red - u_full
    return float(np.sqrt(np.sum(diff * diff * w)))


def relative_error(u_red, u_full, weights) -> float:
    """l2_error normalized by the weighted norm of the full solution."""
    u_full = np.asarray(u_full, dtype=float)
    w = np.asarray(weights, dtype=float)
    ref = float(np.sqrt(np.sum(u_full * u_full * w)))
    if ref == 0.0:
        raise ValueError("relative error against a zero-norm reference is undefined")
    return l2_error(u_red, u_full, weights) / ref


def average_relative_error(histories, n0: int, nm: int) -> float:
    """Mean over parameters of the windowed maximum relative error.

    ``histories`` is an iterable of per-parameter relative-error series;
    the window is the inclusive index range [n0, nm].
    """
    maxima = []
    for h in histories:
        h = np.asarray(h, dtype=float)
        window = h[n0 : nm + 1]
        if window.size == 0:
            raise ValueError(f"empty window [{n0}, {nm}] for a series of length {h.size}")
        maxima.append(float(window.max()))
    if not maxima:
        raise ValueError("no error histories given")
    return float(np.mean(maxima))


def singular_spectrum(S) -> np.ndarray:
    """Full nonincreasing singular-value spectrum of a snapshot matrix."""
    matrix = S.matrix if hasattr(S, "matrix") else np.asarray(S, dtype=float)
    return thin_svd(matrix).singular_values


# ---------------------------------------------------------------------------
# CSV emitters


def write_spectrum_csv(path, sigma) -> None:
    with open(Path(path), "w") as fh:
        fh.write("n,sigma_n\n")
        for i, s in enumerate(np.asarray(sigma, dtype=float), start=1):
            fh.write(f"{i},{float(s)!r}\n")


def write_error_history_csv(path, times, l2, rel) -> None:
    with open(Path(path), "w") as fh:
        fh.write("step,t,l2,relative\n")
        for n, (t, a, b) in enumerate(zip(times, l2, rel)):
            fh.write(f"{n},{float(t)!r},{float(a)!r},{float(b)!r}\n")


def write_error_table_csv(path, rows) -> None:
    """Rows of (r, mode, E_average)."""
    with open(Path(path), "w") as fh:
        fh.write("r,mode,e_average\n")
        for r, mode, e in rows:
            fh.write(f"{r},{mode},{float(e)!r}\n")


def write_solutions_csv(path, nodes, columns: dict) -> None:
    """Nodal profiles side by side; ``columns`` maps name -> value array."""
    names = list(columns)
    with open(Path(path), "w") as fh:
        fh.write("x," + ",".join(names) + "\n")
        for i, x in enumerate(np.asarray(nodes, dtype=float)):
            fh.write(f"{float(x)!r}," + ",".join(repr(float(columns[c][i])) for c in names) + "\n")
