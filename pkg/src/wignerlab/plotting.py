"""Deterministic SVG plots of campaign output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["emit_plot"]

_RC = {"svg.hashsalt": "wignerlab", "svg.fonttype": "none", "path.simplify": False}


def emit_plot(series, kind: str, path, title: str = "", fit=None) -> Path:
    """Write labeled ``(x, y)`` series as an SVG at ``path``.

    Parameters
    ----------
    series : mapping of label to ``(x, y)``
        At least one nonempty series.
    kind : {"loglog", "overlay"}
        ``loglog`` draws markers on log axes; ``overlay`` draws step/line
        curves on linear axes (ESD against the semicircle cdf).
    fit : ScalingFit, optional
        Fitted line drawn and annotated on a ``loglog`` plot.

    Identical inputs give byte-identical files: ids are salted with a
    fixed string and the date metadata is dropped.
    """
    if kind not in ("loglog", "overlay"):
        raise ValueError(f"kind must be 'loglog' or 'overlay', got {kind!r}")
    items = list(dict(series).items())
    if not items or any(np.size(xy[0]) == 0 for _, xy in items):
        raise ValueError("emit_plot needs at least one nonempty series")
    path = Path(path)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.75))
        for label, (x, y) in items:
            x = np.atleast_1d(np.asarray(x, dtype=float))
            y = np.atleast_1d(np.asarray(y, dtype=float))
            if kind == "loglog":
                ax.loglog(x, y, "o", label=str(label))
            else:
                ax.plot(x, y, "-", drawstyle="steps-post" if x.size > 1 else "default",
                        marker="o" if x.size == 1 else None, label=str(label))
        if fit is not None and kind == "loglog":
            xs = np.geomspace(min(np.min(xy[0]) for _, xy in items), max(np.max(xy[0]) for _, xy in items), 2)
            ax.loglog(xs, np.exp(fit.intercept) * xs**fit.slope, "--", color="gray",
                      label=f"slope {fit.slope:.3f} ± {fit.slope_stderr:.3f}")
        if title:
            ax.set_title(title)
        ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
