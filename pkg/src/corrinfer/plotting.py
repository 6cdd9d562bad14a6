"""PNG rendering of the entropy-versus-alpha figure (matplotlib, Agg backend)."""

from __future__ import annotations

from itertools import groupby
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def entropy_figure(replica_rows: list[dict], tap_rows: list[dict], path: str | Path,
                   title: str | None = None) -> Path:
    """Replica curve (line) and TAP sample means with standard errors (markers)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.0, 3.6), dpi=150)
    labelled = set()
    for flag, group in groupby(replica_rows, key=lambda r: bool(r["rs_unstable"])):
        seg = list(group)
        style, name = ("k--", "replica (RS unstable)") if flag else ("k-", "replica (RS)")
        ax.plot([r["alpha"] for r in seg], [r["entropy"] for r in seg], style, lw=1.1,
                label=None if name in labelled else name)
        labelled.add(name)
    pts = [r for r in tap_rows if r["n_converged"] > 0]
    if pts:
        ax.errorbar([r["alpha"] for r in pts], [r["entropy"] for r in pts],
                    yerr=[r["stderr"] for r in pts], fmt="o", ms=4, mfc="white", mec="C3",
                    ecolor="C3", capsize=2, label="TAP (sample mean)")
    ax.axhline(0.0, color="0.6", lw=0.6)
    ax.set_xlabel(r"$\alpha$")
    ax.set_ylabel("entropy per element")
    ax.set_xlim(0.0, 1.0)
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path
