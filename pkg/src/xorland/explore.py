"""Basin-hopping global search over the space of local minima.

A chain perturbs the current minimum uniformly per coordinate, re-minimizes,
and Metropolis-accepts on the loss change scaled by a fictitious
temperature. Every certified minimum encountered is emitted (accepted or
not); saddles, degenerate points, and unconverged quenches are counted and
dropped. Fixed seed => identical visit sequence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .database import (
    CandidatePoint,
    LandscapeDB,
    certify_point,
    kind_for_index,
    same_loss,
    tag_trivial,
)
from .model import Layout, LossConfig, XorLoss
from .optimize import MinimizeSettings, minimize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BasinHoppingSettings:
    steps: int = 5000
    perturbation_scale: float = 1.0
    temperature: float = 1.0
    seed: int = 0
    initial_box: float = 2.0
    minimize: MinimizeSettings = field(default_factory=MinimizeSettings)

    def __post_init__(self):
        if self.steps < 1 or self.perturbation_scale <= 0 or self.temperature <= 0:
            raise ValueError(f"invalid basin-hopping settings: {self}")


@dataclass
class ChainStats:
    emitted: int = 0
    accepted: int = 0
    unconverged: int = 0
    uncertified: int = 0


# saturated minima sit deep in tanh saturation (|w| ~ 6-12) where small
# perturbations quench straight back to the same basin; cycling the
# perturbation scale across chains restores mixing, widest first so the
# saturation window cannot cut off the best-mixing chain
CHAIN_SCALE_FACTORS = (8.0, 1.0, 4.0, 2.0)


def chain_seed(root_seed: int, chain_index: int) -> int:
    """Counter-derived child seed; independent of how chains are scheduled."""
    ss = np.random.SeedSequence(entropy=[int(root_seed), int(chain_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _is_minimum(cand: CandidatePoint) -> bool:
    return cand.index == 0 and cand.zero_count == 0 and cand.grad_rms < 1e-9


class _DistinctTracker:
    """Distinct loss values under the database lumping rule."""

    def __init__(self, tol: float):
        self.tol = tol
        self.losses: list[float] = []

    def add(self, loss: float) -> bool:
        for known in self.losses:
            if same_loss(loss, known, self.tol):
                return False
        self.losses.append(loss)
        return True


def basin_hop(
    config: LossConfig,
    layout: Layout,
    settings: BasinHoppingSettings,
    w0: np.ndarray | None = None,
    zero_cutoff: float = 1e-9,
    dedupe_tol: float = 1e-9,
    stats: ChainStats | None = None,
    on_step: Callable[[int, CandidatePoint | None, bool], bool] | None = None,
    collect: bool = True,
) -> list[CandidatePoint]:
    """Run one chain; returns every certified minimum found, duplicates kept.

    w0 overrides the random start drawn uniformly inside the initial box.
    on_step(step, candidate_or_None, accepted) is called after every step
    (step 0 reports the starting minimum); returning False stops the chain.
    With collect=False the returned list stays empty (streaming callers).
    """
    surface = XorLoss(layout, config)
    rng = np.random.default_rng(np.random.SeedSequence(settings.seed))
    stats = stats if stats is not None else ChainStats()
    distinct = _DistinctTracker(dedupe_tol)
    found: list[CandidatePoint] = []

    def quench(x):
        res = minimize(surface, x, settings.minimize)
        if not res.converged:
            stats.unconverged += 1
            return None
        cand = certify_point(surface, res.x, zero_cutoff)
        if not _is_minimum(cand):
            stats.uncertified += 1
            log.debug(
                "excluded stationary point: kind=%s index=%d zero=%d E=%.15e",
                kind_for_index(cand.index), cand.index, cand.zero_count, cand.loss,
            )
            return None
        if collect:
            found.append(cand)
        stats.emitted += 1
        distinct.add(cand.loss)
        return cand

    start = rng.uniform(-settings.initial_box, settings.initial_box, layout.dim)
    if w0 is not None:
        start = np.ascontiguousarray(w0, dtype=np.float64)
    current = quench(start)
    tries = 0
    while current is None and tries < 50:
        current = quench(rng.uniform(-settings.initial_box, settings.initial_box, layout.dim))
        tries += 1
    if current is None:
        raise RuntimeError("basin hopping failed to find any certified starting minimum")
    if on_step is not None and on_step(0, current, False) is False:
        return found

    scale = settings.perturbation_scale
    for step in range(1, settings.steps + 1):
        trial = current.params + rng.uniform(-scale, scale, layout.dim)
        cand = quench(trial)
        accepted = False
        if cand is not None:
            de = cand.loss - current.loss
            if de <= 0.0 or rng.random() < math.exp(-de / settings.temperature):
                accepted = True
                current = cand
                stats.accepted += 1
        log.info(
            "step=%d accepted=%s E=%.15e distinct=%d",
            step, accepted, current.loss if cand is None else cand.loss, len(distinct.losses),
        )
        if on_step is not None and on_step(step, cand, accepted) is False:
            break
    return found


@dataclass
class SweepCell:
    n_hidden: int
    lam: float
    db: LandscapeDB
    distinct_losses: list[float]
    saturated: bool
    chains: int
    total_steps: int

    @property
    def count(self) -> int:
        return len(self.distinct_losses)

    @property
    def nontrivial_count(self) -> int:
        return len(self.db.nontrivial_minima())


def run_chains(
    db: LandscapeDB,
    settings: BasinHoppingSettings,
    n_chains: int,
    saturation_window: int | None = None,
    include_zero_start: bool = True,
    min_chains: int = 4,
) -> tuple[bool, int]:
    """Run chains with counter-split seeds, inserting minima into db.

    With a saturation window, stops once that many accepted steps pass with
    no new distinct minimum (measured across the merged chain stream);
    returns (saturated, total_steps). At least min_chains chains always run
    so every perturbation scale in the cycle gets a turn. Without a window
    every chain runs in full.
    """
    layout = Layout(db.n_hidden)
    config = LossConfig(db.lam)
    window = saturation_window if saturation_window is not None else float("inf")
    state = {"accepted_since_new": 0, "total_steps": 0, "may_stop": False}

    def on_step(step, cand, accepted):
        if step > 0:
            state["total_steps"] += 1
        if cand is not None:
            _, was_new = db.insert(tag_trivial(cand))
            if was_new:
                state["accepted_since_new"] = 0
        if accepted:
            state["accepted_since_new"] += 1
        return not (state["may_stop"] and state["accepted_since_new"] >= window)

    for c in range(n_chains):
        state["may_stop"] = c >= min_chains - 1
        cseed = chain_seed(settings.seed, c)
        w0 = np.zeros(layout.dim) if (c == 0 and include_zero_start) else None
        chain_settings = replace(
            settings,
            seed=cseed,
            perturbation_scale=settings.perturbation_scale * CHAIN_SCALE_FACTORS[c % 4],
        )
        basin_hop(
            config, layout, chain_settings, w0=w0,
            zero_cutoff=db.zero_cutoff, dedupe_tol=db.dedupe_tol,
            on_step=on_step, collect=False,
        )
        if state["may_stop"] and state["accepted_since_new"] >= window:
            return True, state["total_steps"]
    return state["accepted_since_new"] >= window, state["total_steps"]


def _chain_worker(args) -> list[CandidatePoint]:
    """Top-level worker for process pools: one full chain, collected."""
    nh, lam, settings, chain_index, zero_start = args
    layout = Layout(nh)
    cseed = chain_seed(settings.seed, chain_index)
    scale = settings.perturbation_scale * CHAIN_SCALE_FACTORS[chain_index % 4]
    chain_settings = replace(settings, seed=cseed, perturbation_scale=scale)
    w0 = np.zeros(layout.dim) if zero_start else None
    return basin_hop(LossConfig(lam), layout, chain_settings, w0=w0)


def run_chains_parallel(
    db: LandscapeDB,
    settings: BasinHoppingSettings,
    n_chains: int,
    workers: int,
    include_zero_start: bool = True,
) -> int:
    """All chains in full, merged in chain order.

    Byte-identical to the sequential no-window run for any worker count:
    chains are independent and insertion order is fixed by chain index.
    """
    from concurrent.futures import ProcessPoolExecutor

    jobs = [
        (db.n_hidden, db.lam, settings, c, c == 0 and include_zero_start)
        for c in range(n_chains)
    ]
    if workers <= 1:
        results = map(_chain_worker, jobs)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chain_worker, jobs))
    for found in results:
        for cand in found:
            db.insert(tag_trivial(cand))
    return n_chains * settings.steps


def saturate_cell(
    n_hidden: int,
    lam: float,
    settings: BasinHoppingSettings,
    saturation_window: int = 2000,
    max_chains: int = 32,
    zero_cutoff: float = 1e-9,
    dedupe_tol: float = 1e-9,
) -> SweepCell:
    """Basin-hop one (n_hidden, lambda) cell until the minima set saturates."""
    db = LandscapeDB(n_hidden, lam, zero_cutoff=zero_cutoff, dedupe_tol=dedupe_tol)
    saturated, total_steps = run_chains(
        db, settings, n_chains=max_chains, saturation_window=saturation_window
    )
    if not saturated:
        log.warning(
            "cell nh=%d lambda=%g unsaturated after %d steps", n_hidden, lam, total_steps
        )
    return SweepCell(
        n_hidden=n_hidden,
        lam=lam,
        db=db,
        distinct_losses=db.distinct_losses(),
        saturated=saturated,
        chains=max_chains,
        total_steps=total_steps,
    )


def exhaustive_sweep(
    nh_list,
    lambda_list,
    settings: BasinHoppingSettings,
    saturation_window: int = 2000,
    max_chains: int = 32,
) -> dict[tuple[int, float], SweepCell]:
    """Deduplicated minima counts for every (n_hidden, lambda) cell."""
    cells: dict[tuple[int, float], SweepCell] = {}
    for ci, nh in enumerate(nh_list):
        for cj, lam in enumerate(lambda_list):
            cell_settings = replace(
                settings, seed=chain_seed(settings.seed, 100_000 + 1000 * ci + cj)
            )
            cells[(nh, lam)] = saturate_cell(
                nh, lam, cell_settings,
                saturation_window=saturation_window, max_chains=max_chains,
            )
    return cells
