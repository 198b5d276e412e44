"""Network-quality metrics, sparsity, input-sensitivity maps, embedding.

AUC here is the area under the ROC curve of the trained network as a hard
classifier: rank statistics of the predicted class labels over the four
training points (ties count half), equivalently (TPR - FPR + 1) / 2. The
attainable values are multiples of 0.25, which is what distinguishes the
all-ties trivial network (0.5), a three-of-four fit (0.75), and a perfect
fit (1.0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .database import LandscapeDB
from .model import (
    Layout,
    LossConfig,
    XorLoss,
    XOR_INPUTS,
    XOR_LABELS,
    grad_rms,
    matrix_spectrum,
    probabilities,
    validate_weights,
)


class AnalysisError(RuntimeError):
    pass


def predicted_classes(w, layout: Layout) -> np.ndarray:
    """Hard class decision (argmax of the softmax pair) per training point."""
    w = validate_weights(w, layout)
    out = np.empty(4, dtype=np.int64)
    for d in range(4):
        p0, p1 = probabilities(w, layout, XOR_INPUTS[d])
        out[d] = 1 if p1 > p0 else 0
    return out


def auc(w, layout: Layout) -> float:
    """Rank AUC of the predicted class labels (2 positives, 2 negatives)."""
    scores = predicted_classes(w, layout).astype(float)
    pos = scores[XOR_LABELS == 1]
    neg = scores[XOR_LABELS == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            total += 1.0 if sp > sn else (0.5 if sp == sn else 0.0)
    return total / (len(pos) * len(neg))


SPARSITY_THRESHOLD = 1e-10


@dataclass
class SparsityMask:
    weight_mask: np.ndarray = field(repr=False)
    node_connected: np.ndarray = field(repr=False)
    connected_count: int
    zero_weight_count: int


def sparsity(w, layout: Layout, edge_threshold: float = SPARSITY_THRESHOLD) -> SparsityMask:
    """Which weights are numerically nonzero, and which hidden nodes remain
    connected (any incident non-bias weight above the threshold)."""
    w = validate_weights(w, layout)
    mask = np.abs(w) > edge_threshold
    w1, w2, _, _ = layout.split(w)
    node_connected = np.array(
        [
            bool(np.any(np.abs(w1[:, j]) > edge_threshold) or np.any(np.abs(w2[j, :]) > edge_threshold))
            for j in range(layout.n_hidden)
        ]
    )
    return SparsityMask(
        weight_mask=mask,
        node_connected=node_connected,
        connected_count=int(node_connected.sum()),
        zero_weight_count=int((~mask).sum()),
    )


GRID_LO = -0.5
GRID_STEP = 0.015
GRID_N = 134  # last sample at -0.5 + 133*0.015 = 1.495


@dataclass
class SensitivityGrid:
    offsets: np.ndarray = field(repr=False)
    p1: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    @property
    def robustness_score(self) -> float:
        """Fraction of grid points classified per the stability rule:
        output 0 where |x - y| <= 0.5, output 1 elsewhere."""
        xs = self.offsets[None, :]
        ys = self.offsets[:, None]
        desired = (np.abs(xs - ys) > 0.5).astype(np.int64)
        return float(np.mean(self.labels == desired))


def sensitivity(w, layout: Layout) -> SensitivityGrid:
    """Class-1 probability and hard label over the input square grid."""
    w = validate_weights(w, layout)
    offsets = GRID_LO + GRID_STEP * np.arange(GRID_N)
    p1 = np.empty((GRID_N, GRID_N))
    _kernels.prob1_grid(w, layout.n_hidden, offsets, p1)
    labels = (p1 > 0.5).astype(np.int64)
    return SensitivityGrid(offsets=offsets, p1=p1, labels=labels)


def sensitivity_csv(grid: SensitivityGrid, provenance: dict | None = None) -> str:
    """Delimited dump: one row per grid point, x,y,p1,class."""
    import json

    lines = []
    if provenance is not None:
        lines.append("# provenance: " + json.dumps(provenance, sort_keys=True))
    lines.append("x,y,p1,class")
    for iy, y in enumerate(grid.offsets):
        for ix, x in enumerate(grid.offsets):
            lines.append(
                f"{float(x)!r},{float(y)!r},{float(grid.p1[iy, ix])!r},{int(grid.labels[iy, ix])}"
            )
    return "\n".join(lines) + "\n"


def sensitivity_pgm(grid: SensitivityGrid, provenance: dict | None = None) -> bytes:
    """8-bit grayscale PGM of the class-1 probability."""
    import json

    comment = ""
    if provenance is not None:
        comment = "# provenance: " + json.dumps(provenance, sort_keys=True) + "\n"
    header = f"P5\n{comment}{GRID_N} {GRID_N}\n255\n"
    data = np.clip(np.rint(grid.p1 * 255.0), 0, 255).astype(np.uint8)
    return header.encode() + data.tobytes()


def sensitivity_figure(grid: SensitivityGrid, path: str, title: str = "") -> None:
    """Red/blue sensitivity map with the training points overlaid (white
    triangles for desired output 0, white squares for desired 1)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    lo = grid.offsets[0]
    hi = grid.offsets[-1]
    ax.imshow(
        grid.labels,
        origin="lower",
        extent=(lo, hi, lo, hi),
        cmap="bwr",
        vmin=0,
        vmax=1,
        interpolation="nearest",
    )
    for d in range(4):
        marker = "^" if XOR_LABELS[d] == 0 else "s"
        ax.plot(XOR_INPUTS[d, 0], XOR_INPUTS[d, 1], marker, color="white",
                markeredgecolor="black", markersize=9)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def embed(w, layout: Layout) -> tuple[np.ndarray, Layout]:
    """Grow the network by one hidden node with all its weights zero.

    The added node contributes tanh(0) * 0 to every logit, so outputs,
    probabilities, loss, and gradient stationarity are preserved exactly
    (products with zero are exact in floating point).
    """
    w1, w2, bh, bo = layout.split(validate_weights(w, layout))
    new_layout = Layout(layout.n_hidden + 1)
    w1n = np.hstack([w1, np.zeros((2, 1))])
    w2n = np.vstack([w2, np.zeros((1, 2))])
    bhn = np.concatenate([bh, [0.0]])
    return new_layout.pack(w1n, w2n, bhn, bo), new_layout


def embed_to(w, layout: Layout, nh_target: int) -> tuple[np.ndarray, Layout]:
    if nh_target < layout.n_hidden:
        raise AnalysisError(f"cannot embed {layout.n_hidden} hidden nodes into {nh_target}")
    while layout.n_hidden < nh_target:
        w, layout = embed(w, layout)
    return w, layout


def best_fit_minimum(db: LandscapeDB):
    """Lowest-loss minimum with a perfect hard-classifier AUC."""
    layout = Layout(db.n_hidden)
    perfect = [p for p in db.minima if auc(p.params, layout) == 1.0]
    if not perfect:
        raise AnalysisError(
            f"database (nh={db.n_hidden}, lambda={db.lam:g}) has no AUC=1 minimum"
        )
    return min(perfect, key=lambda p: p.loss)


def embedding_report(w, layout: Layout, config: LossConfig, nh_target: int) -> dict:
    """Embed a stationary point into a larger network and classify it.

    Reports the Hessian index before and after, the gradient RMS after
    embedding, and the zero-eigenvalue count (at cutoff 1e-9).
    """
    surface = XorLoss(layout, config)
    spec_before = matrix_spectrum(surface.hessian(w))
    w_new, layout_new = embed_to(w, layout, nh_target)
    surface_new = XorLoss(layout_new, config)
    f, g = surface_new.value_and_grad(w_new)
    spec_after = matrix_spectrum(surface_new.hessian(w_new))
    return {
        "lambda": config.lam,
        "nh_from": layout.n_hidden,
        "nh_to": nh_target,
        "loss": f,
        "grad_rms_after": grad_rms(g),
        "index_before": spec_before.index,
        "index_after": spec_after.index,
        "zero_count": spec_after.zero_count,
    }


def minimal_config_check(db2: LandscapeDB, nh_target: int) -> dict:
    """Embed the best two-node solution into a larger network and verify it
    stays a nondegenerate stationary point, reporting its saddle index."""
    if db2.n_hidden != 2:
        raise AnalysisError("minimal_config_check requires a 2-hidden-node database")
    best = best_fit_minimum(db2)
    report = embedding_report(
        best.params, Layout(2), LossConfig(db2.lam), nh_target
    )
    report["source_min_id"] = best.id
    report["source_loss"] = best.loss
    return report
