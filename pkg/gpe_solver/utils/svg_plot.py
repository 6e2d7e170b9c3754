# ===================================
# utils/svg_plot.py
# ===================================
import logging
from pathlib import Path
from typing import Dict, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)


def plot_series_svg(
    path: Union[str, Path],
    series: Dict[str, Sequence[float]],
    xlabel: str = "n",
    ylabel: str = "energy error",
    logy: bool = True,
) -> Path:
    """Self-contained line plot (one line per series) saved as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in series.items():
        y = np.abs(np.asarray(values, dtype=float)) if logy else np.asarray(values, dtype=float)
        x = np.arange(1, len(y) + 1)
        if logy:
            keep = y > 0
            ax.semilogy(x[keep], y[keep], label=label)
        else:
            ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.debug(f"Wrote plot {path}")
    return path
