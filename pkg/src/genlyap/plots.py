"""Convergence figures written next to the CSV reports."""

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _semilogy(ax, x, y, **kw):
    y = np.asarray(y, dtype=float)
    mask = np.isfinite(y) & (y > 0)
    if mask.any():
        ax.semilogy(np.asarray(x)[mask], y[mask], **kw)


def plot_convergence(reports, out_dir, svd_errors=None, title=""):
    """Write ``residual.png`` and, when errors are known, ``error.png``.

    Parameters
    ----------
    reports : list of SolveReport
        One curve per report, plotted against its ``dim`` column.
    out_dir : path-like
        Directory for the figures.
    svd_errors : tuple of (ranks, errors), optional
        Best rank-k relative errors drawn as a dashed reference curve.

    Returns
    -------
    list of Path
        Files written.
    """
    plt = _pyplot()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for rep in reports:
        _semilogy(ax, rep.dims, rep.rel_residuals, marker=".", label=rep.method)
    ax.set_xlabel("dimension / iteration")
    ax.set_ylabel("relative residual")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    if reports:
        ax.legend(fontsize="small")
    fig.tight_layout()
    path = out_dir / "residual.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    have_errors = any(np.isfinite(rep.rel_errors).any() for rep in reports)
    if have_errors or svd_errors is not None:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for rep in reports:
            _semilogy(ax, rep.dims, rep.rel_errors, marker=".", label=rep.method)
        if svd_errors is not None:
            _semilogy(ax, svd_errors[0], svd_errors[1], color="black", linestyle="--", label="SVD")
        ax.set_xlabel("dimension / iteration")
        ax.set_ylabel("relative error")
        ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize="small")
        fig.tight_layout()
        path = out_dir / "error.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def plot_singular_values(s, path):
    """Semilog plot of a singular value profile."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    _semilogy(ax, np.arange(1, len(s) + 1), s, marker=".")
    ax.set_xlabel("index")
    ax.set_ylabel("singular value")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
