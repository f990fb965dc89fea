"""Matplotlib renderings of spectra, flows and Lyapunov profiles (PNG bytes)."""

from __future__ import annotations

import io
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def complex_spectrum_png(values: np.ndarray, curves: Optional[list] = None, title: str = "",
                         real_mask: Optional[np.ndarray] = None) -> bytes:
    """Eigenvalues in the complex plane, real ones highlighted, optional level curves on top."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    values = np.asarray(values)
    if real_mask is None:
        real_mask = np.zeros(values.size, bool)
    ax.plot(values[~real_mask].real, values[~real_mask].imag, "o", ms=3, color="tab:blue", label="non-real")
    ax.plot(values[real_mask].real, values[real_mask].imag, "o", ms=3, color="tab:red", label="real")
    for k, line in enumerate(curves or []):
        ax.plot(line.real, line.imag, "-", lw=1, color="k", label="level curve" if k == 0 else None)
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _png(fig)


def flow_png(flow, profile=None, title: str = "") -> bytes:
    """Curves (lambda_j(g), g) over the g-range where lambda_j(g) is real."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for j in range(flow.n):
        x = np.where(flow.is_real[:, j], flow.trajectories[:, j].real, np.nan)
        ax.plot(x, flow.g_grid, "-", lw=0.8, color="tab:blue")
    if profile is not None:
        ax.plot(profile.grid, profile.value, "-", lw=1.5, color="tab:red", label="gamma(E)")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("E")
    ax.set_ylabel("g")
    ax.set_ylim(0, flow.g_grid[-1] * 1.05)
    ax.set_title(title)
    fig.tight_layout()
    return _png(fig)


def profile_png(profile, title: str = "") -> bytes:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.errorbar(profile.grid, profile.value, yerr=profile.stderr, fmt="-", lw=1, color="tab:blue")
    ax.set_xlabel("E")
    ax.set_ylabel("gamma")
    ax.set_title(title)
    fig.tight_layout()
    return _png(fig)


def field_png(fld, curve=None, title: str = "") -> bytes:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    m = ax.pcolormesh(fld.re, fld.im, fld.value, shading="auto", cmap="viridis")
    fig.colorbar(m, ax=ax, label="gamma")
    if curve is not None:
        for line in curve.polylines:
            ax.plot(line.real, line.imag, "-", lw=1, color="w")
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title(title)
    fig.tight_layout()
    return _png(fig)


def xy_png(x, y, xlabel: str, ylabel: str, title: str = "", logy: bool = False, style: str = "o-") -> bytes:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(x, y, style, ms=3)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    return _png(fig)
