"""XOR network model: exact loss, probabilities, and analytic derivatives.

The network is 2 inputs -> nh tanh hidden units -> 2 linear outputs, read
as two-class softmax probabilities. The training objective is the mean
cross-entropy over the four XOR pairs plus an L2 penalty on every
parameter (weights and biases alike).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

# The four XOR input pairs and their class labels, in fixed order.
XOR_INPUTS = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_LABELS = np.array([0, 1, 1, 0], dtype=np.int64)

LN2 = float(np.log(2.0))

#: Default cutoff below which a Hessian eigenvalue magnitude counts as zero.
ZERO_EIGENVALUE_CUTOFF = 1e-9
#: Tighter cutoff used by the verification re-check mode.
ZERO_EIGENVALUE_RECHECK = 1e-10


class ModelError(ValueError):
    """Invalid weights or configuration."""


@dataclass(frozen=True)
class Layout:
    """Index map of the flat parameter vector for nh hidden units.

    Order is fixed everywhere (files included): w1 rows (output x hidden),
    w2 rows (hidden x input), bh, bo.
    """

    n_hidden: int

    def __post_init__(self):
        if self.n_hidden < 1:
            raise ModelError(f"n_hidden must be >= 1, got {self.n_hidden}")

    @property
    def dim(self) -> int:
        return 5 * self.n_hidden + 2

    @property
    def w1_offset(self) -> int:
        return 0

    @property
    def w2_offset(self) -> int:
        return 2 * self.n_hidden

    @property
    def bh_offset(self) -> int:
        return 4 * self.n_hidden

    @property
    def bo_offset(self) -> int:
        return 5 * self.n_hidden

    def split(self, w: np.ndarray):
        """Views (w1 (2, nh), w2 (nh, 2), bh (nh,), bo (2,)) of a flat vector."""
        nh = self.n_hidden
        w = np.asarray(w)
        return (
            w[: 2 * nh].reshape(2, nh),
            w[2 * nh : 4 * nh].reshape(nh, 2),
            w[4 * nh : 5 * nh],
            w[5 * nh :],
        )

    def pack(self, w1, w2, bh, bo) -> np.ndarray:
        w1 = np.asarray(w1, dtype=float).reshape(2, self.n_hidden)
        w2 = np.asarray(w2, dtype=float).reshape(self.n_hidden, 2)
        bh = np.asarray(bh, dtype=float).reshape(self.n_hidden)
        bo = np.asarray(bo, dtype=float).reshape(2)
        return np.concatenate([w1.ravel(), w2.ravel(), bh, bo])


@dataclass(frozen=True)
class LossConfig:
    """Regularization strength; the penalty always covers all parameters."""

    lam: float
    regularize_all: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ModelError(f"lambda must be >= 0, got {self.lam}")
        if not self.regularize_all:
            raise ModelError("only full regularization is supported")


def validate_weights(w, layout: Layout) -> np.ndarray:
    """Return w as a contiguous float64 vector, checking length and finiteness."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    if w.shape != (layout.dim,):
        raise ModelError(f"weight vector has shape {w.shape}, expected ({layout.dim},)")
    if not np.all(np.isfinite(w)):
        raise ModelError("weight vector contains non-finite entries")
    return w


def forward(w, layout: Layout, x) -> tuple[float, float]:
    """Two raw logits of the network at input point x = (x0, x1)."""
    w = validate_weights(w, layout)
    y0, y1 = _kernels.net_outputs(w, layout.n_hidden, float(x[0]), float(x[1]))
    return float(y0), float(y1)


def probabilities(w, layout: Layout, x) -> tuple[float, float]:
    """Softmax class probabilities at input x (max-shifted, overflow safe)."""
    w = validate_weights(w, layout)
    y0, y1 = _kernels.net_outputs(w, layout.n_hidden, float(x[0]), float(x[1]))
    p0, p1 = _kernels.softmax_pair(y0, y1)
    return float(p0), float(p1)


def loss(w, layout: Layout, config: LossConfig) -> float:
    w = validate_weights(w, layout)
    return float(_kernels.loss(w, layout.n_hidden, config.lam))


def gradient(w, layout: Layout, config: LossConfig) -> np.ndarray:
    w = validate_weights(w, layout)
    g = np.empty(layout.dim)
    _kernels.loss_grad(w, layout.n_hidden, config.lam, g)
    return g


def hessian(w, layout: Layout, config: LossConfig) -> np.ndarray:
    w = validate_weights(w, layout)
    h = np.empty((layout.dim, layout.dim))
    _kernels.hessian(w, layout.n_hidden, config.lam, h)
    return h


def grad_rms(g: np.ndarray) -> float:
    """Root-mean-square of a gradient vector."""
    g = np.asarray(g)
    return float(np.linalg.norm(g) / np.sqrt(g.size))


@dataclass(frozen=True)
class Spectrum:
    """Full eigenvalue spectrum of a Hessian with its index classification."""

    eigenvalues: np.ndarray = field(repr=False)
    index: int
    zero_count: int

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])


class EigensolveError(RuntimeError):
    """Dense symmetric eigensolve failed; carries a matrix checksum."""

    def __init__(self, checksum: float):
        super().__init__(f"eigensolve did not converge (matrix checksum {checksum:.17g})")
        self.checksum = checksum


def classify_spectrum(eigenvalues: np.ndarray, zero_cutoff: float = ZERO_EIGENVALUE_CUTOFF) -> Spectrum:
    if zero_cutoff <= 0:
        raise ModelError("zero_cutoff must be positive")
    ev = np.sort(np.asarray(eigenvalues, dtype=float))
    index = int(np.count_nonzero(ev < -zero_cutoff))
    zero_count = int(np.count_nonzero(np.abs(ev) <= zero_cutoff))
    return Spectrum(eigenvalues=ev, index=index, zero_count=zero_count)


def matrix_spectrum(h: np.ndarray, zero_cutoff: float = ZERO_EIGENVALUE_CUTOFF) -> Spectrum:
    """Eigenvalues (ascending) of a symmetric matrix with index counts."""
    try:
        ev = np.linalg.eigvalsh(h)
    except np.linalg.LinAlgError:
        raise EigensolveError(float(np.sum(h))) from None
    return classify_spectrum(ev, zero_cutoff)


def spectrum(w, layout: Layout, config: LossConfig, zero_cutoff: float = ZERO_EIGENVALUE_CUTOFF) -> Spectrum:
    """Hessian spectrum at w: eigenvalues ascending, negative and zero counts."""
    return matrix_spectrum(hessian(w, layout, config), zero_cutoff)


class XorLoss:
    """The XOR training loss as a smooth surface over the flat weight vector.

    Exposes the generic surface interface used by the optimizer and the
    transition-state machinery (value / gradient / hessian), plus a jitted
    L-BFGS fast path.
    """

    def __init__(self, layout: Layout, config: LossConfig):
        self.layout = layout
        self.config = config
        self.dim = layout.dim

    def value(self, x: np.ndarray) -> float:
        return float(_kernels.loss(x, self.layout.n_hidden, self.config.lam))

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        g = np.empty(self.dim)
        f = _kernels.loss_grad(x, self.layout.n_hidden, self.config.lam, g)
        return float(f), g

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.value_and_grad(x)[1]

    def hessian(self, x: np.ndarray) -> np.ndarray:
        h = np.empty((self.dim, self.dim))
        _kernels.hessian(x, self.layout.n_hidden, self.config.lam, h)
        return h

    def spectrum(self, x: np.ndarray, zero_cutoff: float = ZERO_EIGENVALUE_CUTOFF) -> Spectrum:
        return matrix_spectrum(self.hessian(x), zero_cutoff)

    def fast_lbfgs(self, x0, tol, max_iters, history, max_step, proj):
        """Jitted L-BFGS; proj is a unit direction to exclude, or None."""
        if proj is None:
            proj = np.zeros(self.dim)
        return _kernels.lbfgs(
            np.ascontiguousarray(x0, dtype=np.float64),
            self.layout.n_hidden,
            self.config.lam,
            tol,
            max_iters,
            history,
            max_step,
            np.ascontiguousarray(proj, dtype=np.float64),
        )


def correct_class_probabilities(w, layout: Layout) -> np.ndarray:
    """Probability assigned to the correct class for each of the 4 pairs."""
    w = validate_weights(w, layout)
    out = np.empty(4)
    for d in range(4):
        p = probabilities(w, layout, XOR_INPUTS[d])
        out[d] = p[XOR_LABELS[d]]
    return out


def permute_hidden(w, layout: Layout, perm) -> np.ndarray:
    """Apply a hidden-unit permutation consistently to all weight blocks."""
    perm = np.asarray(perm)
    w1, w2, bh, bo = layout.split(validate_weights(w, layout).copy())
    return layout.pack(w1[:, perm], w2[perm, :], bh[perm], bo)


def flip_hidden_sign(w, layout: Layout, j: int) -> np.ndarray:
    """Negate hidden unit j's incoming weights, bias, and outgoing weights.

    tanh is odd, so the network function is unchanged; the penalty uses
    squares, so the loss is unchanged too.
    """
    w1, w2, bh, bo = layout.split(validate_weights(w, layout).copy())
    w1[:, j] *= -1.0
    w2[j, :] *= -1.0
    bh[j] *= -1.0
    return layout.pack(w1, w2, bh, bo)


def canonicalize(w, layout: Layout) -> np.ndarray:
    """Canonical representative of the hidden-unit symmetry orbit of w.

    Fixes each unit's sign (first nonzero of (bh, w2 row, w1 column)
    made positive), then sorts units lexicographically. Debug aid for
    checking whether two equal-loss points are distinct orbits.
    """
    w = validate_weights(w, layout).copy()
    w1, w2, bh, bo = layout.split(w)
    nh = layout.n_hidden
    for j in range(nh):
        key = np.concatenate([[bh[j]], w2[j, :], w1[:, j]])
        nz = key[np.abs(key) > 0]
        if nz.size and nz[0] < 0:
            w1[:, j] *= -1.0
            w2[j, :] *= -1.0
            bh[j] *= -1.0
    keys = [tuple(np.concatenate([[bh[j]], w2[j, :], w1[:, j]])) for j in range(nh)]
    order = sorted(range(nh), key=lambda j: keys[j])
    return permute_hidden(layout.pack(w1, w2, bh, bo), layout, order)
