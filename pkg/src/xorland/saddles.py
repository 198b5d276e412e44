"""Transition-state search and minimum-to-minimum connections.

Candidates come from a doubly-nudged elastic band between two minima;
each candidate is refined to an index-1 saddle by hybrid
eigenvector-following (uphill along the softest Hessian eigenvector,
minimizing in its orthogonal complement); the two connected minima come
from approximate steepest-descent paths traced with a second-order
corrector. Everything here is potential-agnostic: any surface exposing
value / value_and_grad / gradient / hessian runs through the same code
path as the XOR loss.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .database import (
    CandidatePoint,
    LandscapeDB,
    certify_point,
    same_loss,
    tag_trivial,
)
from .model import Layout, LossConfig, XorLoss, classify_spectrum, grad_rms
from .optimize import (
    MinimizeSettings,
    NumericalError,
    minimize,
    minimize_projected,
)

log = logging.getLogger(__name__)


class SaddleError(RuntimeError):
    pass


class WrongIndexError(SaddleError):
    """Refinement converged to a stationary point that is not index 1.

    Carries the certified point so callers can keep it (a minimum or a
    higher-index record).
    """

    def __init__(self, point: CandidatePoint):
        super().__init__(
            f"converged to index {point.index} (zero_count {point.zero_count}), not a transition state"
        )
        self.point = point


class RefinementError(SaddleError):
    pass


class PathError(SaddleError):
    pass


@dataclass(frozen=True)
class BandSettings:
    n_images: int = 15
    spring_k: float = 1.0
    dneb_fraction: float = 0.1
    band_iters: int = 2000
    step_size: float = 0.05
    max_image_step: float = 0.1
    force_rms_tol: float = 1e-8

    def __post_init__(self):
        if self.n_images < 3:
            raise ValueError("n_images must be >= 3")
        if not 0.0 <= self.dneb_fraction <= 1.0:
            raise ValueError("dneb_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class EFSettings:
    uphill_trust_radius: float = 0.1
    max_ef_iters: int = 500
    ts_grad_tol: float = 1e-9
    # L-BFGS iterations allowed per subspace-minimization cycle; a cap keeps
    # the point near the followed mode instead of sliding along the frozen
    # projection plane into a distant basin
    subspace_iters: int = 30
    # abort valves: regularized landscapes have saturated directions whose
    # curvature is pinned at 2*lambda > 0, so uphill mode-following can walk
    # to infinity without ever finding negative curvature
    escape_radius: float = 25.0
    max_positive_streak: int = 60

    def __post_init__(self):
        if min(self.uphill_trust_radius, self.max_ef_iters, self.ts_grad_tol, self.subspace_iters) <= 0:
            raise ValueError(f"EF settings must be positive: {self}")


@dataclass
class PathResult:
    ts: CandidatePoint
    minus: CandidatePoint
    plus: CandidatePoint
    path_minus: list = field(repr=False, default_factory=list)
    path_plus: list = field(repr=False, default_factory=list)

    @property
    def minus_minimum_loss(self) -> float:
        return self.minus.loss

    @property
    def plus_minimum_loss(self) -> float:
        return self.plus.loss


def dneb_candidates(
    surface,
    wa: np.ndarray,
    wb: np.ndarray,
    settings: BandSettings | None = None,
    dedupe_tol: float = 1e-9,
) -> list[np.ndarray]:
    """Relax a doubly-nudged elastic band; return interior loss maxima.

    Interior images feel the perpendicular true gradient, the spring force
    along the discrete tangent, and dneb_fraction of the perpendicular
    spring force. Endpoints stay fixed. Non-convergence is logged and the
    best-effort maxima are still returned.
    """
    settings = settings or BandSettings()
    wa = np.ascontiguousarray(wa, dtype=np.float64)
    wb = np.ascontiguousarray(wb, dtype=np.float64)
    fa = surface.value(wa)
    fb = surface.value(wb)
    if same_loss(fa, fb, dedupe_tol):
        raise ValueError(
            f"band endpoints share a loss-dedupe key ({fa!r} vs {fb!r}); "
            "connection attempts need distinct minima"
        )

    n = settings.n_images
    images = np.array([wa + (wb - wa) * t for t in np.linspace(0.0, 1.0, n + 2)])
    losses = np.empty(n + 2)
    losses[0] = fa
    losses[-1] = fb
    k = settings.spring_k
    converged = False
    # quick-min integration: velocity projected onto the force, zeroed on
    # overshoot; far more stable than plain steepest descent on stiff bands
    vel = np.zeros_like(images)
    dt = settings.step_size
    for _ in range(settings.band_iters):
        grads = []
        for i in range(1, n + 1):
            f, g = surface.value_and_grad(images[i])
            losses[i] = f
            grads.append(g)
        force_sq = 0.0
        forces = np.zeros_like(images)
        for i in range(1, n + 1):
            tau = images[i + 1] - images[i - 1]
            tau /= np.linalg.norm(tau)
            g = grads[i - 1]
            g_perp = g - np.dot(g, tau) * tau
            spring = k * ((images[i + 1] - images[i]) - (images[i] - images[i - 1]))
            s_par = np.dot(spring, tau) * tau
            s_perp = spring - s_par
            forces[i] = -g_perp + s_par + settings.dneb_fraction * s_perp
            force_sq += float(np.dot(forces[i], forces[i]))
        if math.sqrt(force_sq / (n * images.shape[1])) < settings.force_rms_tol:
            converged = True
            break
        for i in range(1, n + 1):
            fv = float(np.dot(vel[i], forces[i]))
            if fv <= 0.0:
                vel[i] = 0.0
            else:
                fn2 = float(np.dot(forces[i], forces[i]))
                vel[i] = forces[i] * (fv / fn2)
            vel[i] += dt * forces[i]
            step = dt * vel[i]
            norm = np.linalg.norm(step)
            if norm > settings.max_image_step:
                step *= settings.max_image_step / norm
            images[i] += step
    for i in range(1, n + 1):
        losses[i] = surface.value(images[i])
    if not converged:
        log.debug("band relaxation hit the iteration cap; returning best-effort maxima")

    cands = [
        images[i].copy()
        for i in range(1, n + 1)
        if losses[i] > losses[i - 1] and losses[i] > losses[i + 1]
    ]
    if not cands:
        top = 1 + int(np.argmax(losses[1 : n + 1]))
        log.debug("band has no strict interior maximum; using highest image")
        cands = [images[top].copy()]
    return cands


def refine_transition_state(
    surface,
    x0: np.ndarray,
    ef: EFSettings | None = None,
    zero_cutoff: float = 1e-9,
) -> CandidatePoint:
    """Hybrid eigenvector-following refinement of a saddle candidate.

    Alternates a trust-capped Newton-like step along the softest Hessian
    eigenvector with minimization in its orthogonal complement, until the
    gradient RMS meets ts_grad_tol with Hessian index exactly 1 and no
    zero eigenvalues. Raises WrongIndexError if it lands on a stationary
    point of a different index, RefinementError on non-convergence.
    """
    ef = ef or EFSettings()
    x = np.ascontiguousarray(x0, dtype=np.float64).copy()
    start = x.copy()
    sub = MinimizeSettings(
        grad_rms_tol=ef.ts_grad_tol,
        max_iters=ef.subspace_iters,
        max_step_norm=min(0.5, ef.uphill_trust_radius),
    )
    uphill_steps = 0
    positive_streak = 0
    for _ in range(ef.max_ef_iters):
        if np.linalg.norm(x - start) > ef.escape_radius:
            raise RefinementError(
                f"refinement escaped (|x - x0| > {ef.escape_radius:g}); "
                "likely following a saturated penalty mode uphill"
            )
        h = surface.hessian(x)
        evals, evecs = np.linalg.eigh(h)
        v = np.ascontiguousarray(evecs[:, 0])
        g = surface.gradient(x)
        rms = grad_rms(g)
        spec = classify_spectrum(evals, zero_cutoff)
        positive_streak = positive_streak + 1 if evals[0] > 0.0 else 0
        if positive_streak > ef.max_positive_streak:
            raise RefinementError(
                f"no negative curvature after {positive_streak} uphill cycles"
            )
        if rms <= ef.ts_grad_tol:
            cand = certify_point(surface, x, zero_cutoff)
            if spec.index == 1 and cand.index == 1 and cand.zero_count == 0:
                return cand
            raise WrongIndexError(cand)
        if spec.index == 1 and spec.zero_count == 0 and rms <= 1e-4:
            # inside an index-1 region: full Newton finishes quadratically,
            # where alternating capped cycles crawl on the softest modes
            cand = certify_point(surface, x, zero_cutoff)
            if (
                cand.index == 1
                and cand.zero_count == 0
                and cand.grad_rms <= ef.ts_grad_tol
            ):
                return cand
        lam_min = float(evals[0])
        gv = float(np.dot(g, v))
        direction = math.copysign(1.0, gv) if gv != 0.0 else 1.0
        denom = abs(lam_min) + math.sqrt(lam_min * lam_min + 4.0 * gv * gv)
        if denom > 0.0 and gv != 0.0:
            hstep = min(2.0 * abs(gv) / denom, ef.uphill_trust_radius)
        else:
            # gradient exactly orthogonal to the softest mode: small nudge
            hstep = 0.1 * ef.uphill_trust_radius
        x = x + direction * hstep * v
        uphill_steps += 1
        res = minimize_projected(surface, x, sub, v)
        x = res.x
    raise RefinementError(
        f"no index-1 convergence within {ef.max_ef_iters} eigenvector-following cycles "
        f"({uphill_steps} uphill steps, grad RMS {rms:.3e})"
    )


def _steepest_descent(
    surface,
    x0: np.ndarray,
    step: float,
    exit_rms: float,
    max_steps: int,
    record_every: int,
    zero_cutoff: float = 1e-9,
) -> tuple[np.ndarray, list]:
    """Second-order steepest-descent path follower.

    Each step moves -h along the gradient unit vector with the curvature
    correction (h^2/2) (I - gg^T) H g / |g|; steps are geometric in length,
    so the follower marches through the near-flat channels these landscapes
    are full of. It stops only where the gradient is small AND the local
    curvature is non-negative (small-gradient saddle neighborhoods are
    walked through, not declared converged). Two consecutive genuine loss
    increases halve the step and rewind; ten cumulative halvings abort.
    """
    x = x0.copy()
    f = surface.value(x)
    path = [(float(f), x.copy())]
    h = step
    h_min = step / 1024.0  # ten halvings
    consec_up = 0
    good = 0
    last_good = (f, x.copy())
    for it in range(max_steps):
        f, g = surface.value_and_grad(x)
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            break
        hess = surface.hessian(x)
        if gn / math.sqrt(x.size) <= exit_rms:
            if float(np.linalg.eigvalsh(hess)[0]) > -zero_cutoff:
                break
        ghat = g / gn
        hg = hess @ ghat
        corr = (hg - float(np.dot(ghat, hg)) * ghat) / gn
        dx = -h * ghat + 0.5 * h * h * corr
        dxn = float(np.linalg.norm(dx))
        if dxn > 2.0 * h:
            dx *= 2.0 * h / dxn
        x_new = x + dx
        f_new = surface.value(x_new)
        if f_new > f + 1e-13 * max(1.0, abs(f)):
            consec_up += 1
            if consec_up >= 2:
                if h <= h_min:
                    raise PathError(f"path diverged: step collapsed at step {it}")
                h *= 0.5
                f, xg = last_good
                x = xg.copy()
                consec_up = 0
                continue
        else:
            consec_up = 0
            last_good = (f_new, x_new.copy())
            good += 1
            if good % 25 == 0 and h < step:
                h = min(2.0 * h, step)
        x = x_new
        if it % record_every == 0:
            path.append((float(f_new), x.copy()))
    path.append((float(surface.value(x)), x.copy()))
    return x, path


def trace_paths(
    surface,
    ts: CandidatePoint,
    min_settings: MinimizeSettings | None = None,
    zero_cutoff: float = 1e-9,
    displacement_magnitudes=(1e-5, 1e-4, 1e-3, 1e-2),
    sd_step: float = 0.02,
    sd_exit_rms: float = 1e-7,
    max_sd_steps: int = 5000,
) -> PathResult:
    """Trace both descent paths from an index-1 saddle to their minima.

    The initial displacement along +/- the softest eigenvector picks, from
    a small magnitude ladder, the size that lowers the loss the most; the
    descent ends with a full minimization and certification of each
    terminal minimum.
    """
    if ts.index != 1:
        raise SaddleError(f"trace_paths requires an index-1 saddle, got index {ts.index}")
    min_settings = min_settings or MinimizeSettings()

    def pushoff(point: CandidatePoint, sign: float) -> np.ndarray:
        """Displacement from a saddle along +/- its softest eigenvector,
        magnitude chosen to maximize the loss decrease."""
        _, evecs = np.linalg.eigh(surface.hessian(point.params))
        v = np.ascontiguousarray(evecs[:, 0])
        trials = [
            (float(surface.value(point.params + sign * m * v)), m)
            for m in displacement_magnitudes
        ]
        _, best_m = min(trials, key=lambda t: (t[0], t[1]))
        return point.params + sign * best_m * v

    record_every = max(1, max_sd_steps // 200)
    sides = []
    for sign in (-1.0, 1.0):
        x = pushoff(ts, sign)
        path = [(ts.loss, ts.params.copy())]
        cand = None
        # a descent may run into another near-flat saddle; push off downhill
        # from it and continue (loss strictly decreases, so this terminates)
        for _ in range(8):
            x_end, seg = _steepest_descent(
                surface, x, sd_step, sd_exit_rms, max_sd_steps,
                record_every=record_every, zero_cutoff=zero_cutoff,
            )
            path.extend(seg)
            res = minimize(surface, x_end, min_settings)
            cand = certify_point(surface, res.x, zero_cutoff)
            if cand.grad_rms >= 1e-9:
                raise PathError(f"descent endpoint is not stationary (side {sign:+.0f})")
            if cand.index == 0 and cand.zero_count == 0:
                break
            better = min(
                (pushoff(cand, s) for s in (-1.0, 1.0)),
                key=lambda p: surface.value(p),
            )
            if not surface.value(better) < cand.loss:
                raise WrongIndexError(cand)
            x = better
            cand = None
        if cand is None or cand.index != 0:
            raise PathError(f"descent never reached a minimum (side {sign:+.0f})")
        if not ts.loss > cand.loss:
            raise PathError(
                f"barrier not positive: ts loss {ts.loss!r} vs minimum {cand.loss!r}"
            )
        path.append((cand.loss, cand.params.copy()))
        sides.append((cand, path))
    return PathResult(ts=ts, minus=sides[0][0], plus=sides[1][0],
                      path_minus=sides[0][1], path_plus=sides[1][1])


@dataclass
class ConnectStats:
    attempts: int = 0
    ts_found: int = 0
    new_ts: int = 0
    new_minima: int = 0
    new_higher: int = 0
    failures: int = 0


def mode_following_seeds(
    surface,
    w: np.ndarray,
    n_modes: int = 6,
    displacements=(1e-4, 1e-3, 1e-2, 5e-2),
) -> list[np.ndarray]:
    """Single-ended saddle-search seeds around a minimum.

    Displaces along the softest Hessian eigenvectors in both directions.
    Finds the near-degenerate saddles a band between distant minima cannot
    resolve (barriers of order 1e-11 a few 1e-3 away from the minimum).
    """
    h = surface.hessian(w)
    _, evecs = np.linalg.eigh(h)
    seeds = []
    for k in range(min(n_modes, w.size)):
        v = evecs[:, k]
        for sign in (1.0, -1.0):
            for d in displacements:
                seeds.append(w + sign * d * v)
    return seeds


def _eligible_pairs(db: LandscapeDB, attempted: set) -> list[tuple[int, int]]:
    """Unattempted minima pairs: cross-component first, then by loss gap."""
    comp_of = {}
    for comp in db.components():
        for mid in comp:
            comp_of[mid] = min(comp)
    loss_of = {p.id: p.loss for p in db.minima}
    pairs = []
    ids = sorted(loss_of)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if (a, b) in attempted:
                continue
            cross = comp_of[a] != comp_of[b]
            pairs.append((not cross, abs(loss_of[a] - loss_of[b]), a, b))
    pairs.sort()
    return [(a, b) for _, _, a, b in pairs]


def connect_all(
    db: LandscapeDB,
    band: BandSettings | None = None,
    ef: EFSettings | None = None,
    min_settings: MinimizeSettings | None = None,
    pair_budget: int = 2000,
    tag_minimum=None,
) -> ConnectStats:
    """Attempt transition-state connections over all pairs of minima.

    Every unattempted pair gets one band + refinement + path-trace attempt
    (cross-component pairs first); minima discovered by path tracing join
    the database and schedule new pairs, until the pair budget runs out or
    no unattempted pair remains.
    """
    band = band or BandSettings()
    ef = ef or EFSettings()
    surface = XorLoss(Layout(db.n_hidden), LossConfig(db.lam))
    stats = ConnectStats()
    attempted: set[tuple[int, int]] = set()
    tag = tag_minimum if tag_minimum is not None else tag_trivial

    def insert_offpath(point: CandidatePoint):
        if point.zero_count != 0 or point.grad_rms >= 1e-9:
            return
        if point.index == 0:
            _, was_new = db.insert(tag(point))
            stats.new_minima += was_new
        elif point.index >= 2:
            _, was_new = db.insert(point)
            stats.new_higher += was_new

    def process_candidate(c: np.ndarray) -> int:
        """Refine one saddle candidate; trace and record if new. Returns 1
        if an index-1 saddle came out of the refinement."""
        try:
            ts = refine_transition_state(surface, c, ef, db.zero_cutoff)
        except WrongIndexError as exc:
            insert_offpath(exc.point)
            return 0
        except (RefinementError, NumericalError):
            stats.failures += 1
            return 0
        stats.ts_found += 1
        ts_id, was_new = db.insert(ts)
        if was_new:
            stats.new_ts += 1
        elif len(db.components()) == 1:
            # lumped saddle, graph already connected: nothing edges can add
            return 1
        # trace even when the saddle lumped into an existing record: members
        # of a lumped saddle family connect different pairs of minima, and
        # the edge list carries one entry per connection
        try:
            pr = trace_paths(surface, ts, min_settings, db.zero_cutoff)
        except WrongIndexError as exc:
            insert_offpath(exc.point)
            stats.failures += 1
            return 1
        except (SaddleError, NumericalError):
            stats.failures += 1
            return 1
        ia, new_a = db.insert(tag(pr.minus))
        ib, new_b = db.insert(tag(pr.plus))
        stats.new_minima += new_a + new_b
        stored = db.point(ts_id)
        if stored.loss >= max(db.minimum(ia).loss, db.minimum(ib).loss):
            db.add_edge(ts_id, ia, ib)
        return 1

    def same_component(a: int, b: int) -> bool:
        for comp in db.components():
            if a in comp:
                return b in comp
        return False

    seeded: set[int] = set()
    while stats.attempts < pair_budget:
        pairs = _eligible_pairs(db, attempted)
        if pairs:
            for a, b in pairs:
                if stats.attempts >= pair_budget:
                    break
                attempted.add((a, b))
                stats.attempts += 1
                pa, pb = db.minimum(a), db.minimum(b)
                try:
                    cands = dneb_candidates(surface, pa.params, pb.params, band, db.dedupe_tol)
                except ValueError:
                    stats.failures += 1
                    continue
                ts_here = sum(process_candidate(c) for c in cands)
                log.info(
                    "pair=%d,%d candidates=%d ts_found=%d connected=%s",
                    a, b, len(cands), ts_here, same_component(a, b),
                )
            continue
        # no unattempted pair left: bands between distant minima cannot
        # resolve near-degenerate barriers (1e-11 high, a few 1e-3 from a
        # minimum), so finish lonely minima with single-ended
        # mode-following searches around them, then rescan for new pairs
        comps = db.components()
        main = max(comps, key=len)
        lonely = sorted(
            mid for comp in comps if comp is not main for mid in comp
            if mid not in seeded
        )
        if not lonely:
            break
        for mid in lonely:
            seeded.add(mid)
            for seed in mode_following_seeds(surface, db.minimum(mid).params):
                process_candidate(seed)
            log.info(
                "single_ended=%d connected=%s", mid, same_component(mid, min(main))
            )
    return stats
