"""Report figures. Rendered headless; PNG metadata is stripped so reruns match byte for byte."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .refinement import band_center, gaussian_density  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_prf_sweep(report, path, title="IoU sweep"):
    """Precision, recall and F1 against the IoU threshold."""
    t = [r.threshold for r in report.per_threshold]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(t, [r.precision for r in report.per_threshold], "o-", label=f"precision ({report.precision:.3f})")
    ax.plot(t, [r.recall for r in report.per_threshold], "s-", label=f"recall ({report.recall:.3f})")
    ax.plot(t, [r.f1 for r in report.per_threshold], "^-", label=f"F1 ({report.f1:.3f})")
    ax.set_xlabel("IoU threshold")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.legend(loc="lower left", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_band_weights(model, path):
    """Band influence curves over vertical position, next to each band's (w, h) correlation."""
    y = np.linspace(0.0, 1.0, 201)
    fig, (left, right) = plt.subplots(1, 2, figsize=(8, 3.5))
    for j in range(model.n_bands):
        w = [gaussian_density(abs(v - band_center(j, model.n_bands)), model.sigma, model.mu) for v in y]
        left.plot(y, w, label=f"band {j}")
    left.set_xlabel("box center y (normalized)")
    left.set_ylabel("weight")
    left.legend(fontsize=8)
    right.bar(range(model.n_bands), model.matrices[:, 2, 3])
    right.set_xlabel("band")
    right.set_ylabel("corr(w, h) mapped to [0, 1]")
    right.set_ylim(0, 1)
    fig.tight_layout()
    return _save(fig, path)
