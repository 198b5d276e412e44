"""Deterministic local minimization with a tight convergence contract.

Two interchangeable engines run the same algorithm (two-loop L-BFGS,
backtracking Armijo line search, capped step norm): a jitted fast path for
the XOR loss and a plain numpy path for any other surface. Surfaces only
need value_and_grad(x); the projected variant excludes one direction from
every gradient and step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels


class NumericalError(RuntimeError):
    """A non-finite value appeared where the algorithm cannot recover."""


@dataclass(frozen=True)
class MinimizeSettings:
    grad_rms_tol: float = 1e-9
    max_iters: int = 20000
    history_size: int = 10
    max_step_norm: float = 0.5

    def __post_init__(self):
        if self.grad_rms_tol <= 0 or self.max_iters < 1 or self.history_size < 1:
            raise ValueError(f"invalid minimize settings: {self}")


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray = field(repr=False)
    loss: float
    grad_rms: float
    iterations: int
    converged: bool


def _project_out(a: np.ndarray, v: np.ndarray | None) -> np.ndarray:
    if v is None:
        return a
    return a - np.dot(a, v) * v


def _minimize_numpy(surface, x0, settings: MinimizeSettings, forbidden=None) -> MinimizeResult:
    dim = x0.size
    sqd = math.sqrt(dim)
    x = x0.copy()
    f, g = surface.value_and_grad(x)
    if not math.isfinite(f):
        raise NumericalError("objective is non-finite at the starting point")
    g = _project_out(g, forbidden)

    hist = settings.history_size
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    rho: list[float] = []
    gamma = 1.0
    iterations = 0
    converged = False

    for it in range(settings.max_iters):
        rms = np.linalg.norm(g) / sqd
        if rms <= settings.grad_rms_tol:
            converged = True
            break
        q = g.copy()
        alpha = []
        for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
            a = r * np.dot(s, q)
            alpha.append(a)
            q -= a * y
        q *= gamma
        for s, y, r, a in zip(S, Y, rho, reversed(alpha)):
            b = r * np.dot(y, q)
            q += (a - b) * s
        d = _project_out(-q, forbidden)
        dg = np.dot(d, g)
        if dg >= 0.0:
            S.clear()
            Y.clear()
            rho.clear()
            gamma = 1.0
            d = -g
            dg = -np.dot(g, g)
        dn = np.linalg.norm(d)
        if dn > settings.max_step_norm:
            scale = settings.max_step_norm / dn
            d = d * scale
            dg *= scale

        step = 1.0
        accepted = False
        while step >= 1e-14:
            xt = x + step * d
            ft = surface.value(xt)
            if math.isfinite(ft) and ft <= f + 1e-4 * step * dg:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break

        fnew, gnew = surface.value_and_grad(xt)
        if not math.isfinite(fnew) or not np.all(np.isfinite(gnew)):
            raise NumericalError(f"non-finite loss or gradient at iteration {it}")
        gnew = _project_out(gnew, forbidden)

        s = xt - x
        y = gnew - g
        sy = float(np.dot(s, y))
        yy = float(np.dot(y, y))
        if sy > 1e-10 * math.sqrt(np.dot(s, s) * yy) and yy > 0.0:
            S.append(s)
            Y.append(y)
            rho.append(1.0 / sy)
            gamma = sy / yy
            if len(S) > hist:
                S.pop(0)
                Y.pop(0)
                rho.pop(0)
        x, f, g = xt, fnew, gnew
        iterations = it + 1

    rms = float(np.linalg.norm(g) / sqd)
    return MinimizeResult(
        x=x,
        loss=float(f),
        grad_rms=rms,
        iterations=iterations,
        converged=converged or rms <= settings.grad_rms_tol,
    )


def _minimize_fast(surface, x0, settings: MinimizeSettings, forbidden=None) -> MinimizeResult:
    x, f, rms, iters, status = surface.fast_lbfgs(
        x0,
        settings.grad_rms_tol,
        settings.max_iters,
        settings.history_size,
        settings.max_step_norm,
        forbidden,
    )
    if status == _kernels.LBFGS_NAN:
        raise NumericalError(f"non-finite loss or gradient at iteration {iters}")
    return MinimizeResult(
        x=x,
        loss=float(f),
        grad_rms=float(rms),
        iterations=int(iters),
        converged=status == _kernels.LBFGS_CONVERGED,
    )


def minimize(surface, x0, settings: MinimizeSettings | None = None) -> MinimizeResult:
    """Minimize the surface from x0; converged means grad RMS <= tol.

    Exhausting max_iters returns converged=False rather than raising; a
    NaN during iteration raises NumericalError naming the iteration.
    """
    settings = settings or MinimizeSettings()
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise NumericalError("starting point contains non-finite entries")
    if hasattr(surface, "fast_lbfgs"):
        return _minimize_fast(surface, x0, settings)
    return _minimize_numpy(surface, x0, settings)


def minimize_projected(surface, x0, settings: MinimizeSettings | None, forbidden_direction) -> MinimizeResult:
    """Minimize in the subspace orthogonal to one unit direction.

    The reported gradient RMS is that of the projected gradient; the
    component along forbidden_direction is unconstrained.
    """
    settings = settings or MinimizeSettings()
    v = np.ascontiguousarray(forbidden_direction, dtype=np.float64)
    nv = np.linalg.norm(v)
    if abs(nv - 1.0) > 1e-12:
        raise ValueError(f"forbidden_direction must be a unit vector (norm {nv})")
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise NumericalError("starting point contains non-finite entries")
    if hasattr(surface, "fast_lbfgs"):
        return _minimize_fast(surface, x0, settings, v)
    return _minimize_numpy(surface, x0, settings, v)


def polish_stationary(
    surface,
    x0,
    *,
    target_rms: float = 1e-13,
    max_steps: int = 8,
    step_cap: float = 0.1,
) -> np.ndarray:
    """Newton-polish a near-stationary point to machine-level gradient RMS.

    Loss keys must resolve gaps near 1e-11, which plain L-BFGS at tol 1e-9
    does not guarantee on the softest directions; a few full Newton steps
    do. Works for any nondegenerate stationary point (any index). Bails out
    (returning the best point so far) if the Hessian is numerically
    singular or the step is too large to trust.
    """
    x = np.ascontiguousarray(x0, dtype=np.float64).copy()
    sqd = math.sqrt(x.size)
    best_x = x
    best_rms = float(np.linalg.norm(surface.gradient(x)) / sqd)
    for _ in range(max_steps):
        g = surface.gradient(x)
        rms = float(np.linalg.norm(g) / sqd)
        if rms < best_rms:
            best_x, best_rms = x, rms
        if best_rms <= target_rms:
            break
        if rms > 10.0 * best_rms:
            # near-singular Hessian sent the iteration astray
            break
        h = surface.hessian(x)
        try:
            dx = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(dx)) or np.linalg.norm(dx) > step_cap:
            break
        x = x + dx
    return best_x
