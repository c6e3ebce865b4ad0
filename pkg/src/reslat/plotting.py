"""Rendering of resonance lattices (matplotlib, non-interactive backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def render_lattice(lattices, path, title=None):
    """Scatter ``Re E`` against ``Im E`` with one series per ``h``; saves to ``path``."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for lat in lattices:
        E = lat.energies
        ax.scatter(E.real, E.imag, s=4, label=f"h = {lat.input.h:g}")
    ax.set_xlabel("Re E")
    ax.set_ylabel("Im E")
    ax.axhline(0.0, color="0.6", lw=0.6)
    if title:
        ax.set_title(title)
    if lattices:
        ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    # fixed metadata keeps the PNG stable between runs
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
