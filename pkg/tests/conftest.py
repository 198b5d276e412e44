"""Shared fixtures: jit warmup and the session landscape cache.

Building a landscape (basin-hopping plus connections) is the expensive
part of the suite, so each (n_hidden, lambda) cell is built once per
session and shared. Set XORLAND_CACHE_DIR to persist cells across local
runs; without it everything is rebuilt fresh in the session tmp dir.
All budgets and seeds are fixed, so cached and fresh builds are
byte-identical.
"""

import logging
import os
from pathlib import Path

import numpy as np
import pytest

from xorland import database
from xorland.explore import BasinHoppingSettings, run_chains
from xorland.model import Layout, LossConfig, XorLoss
from xorland.optimize import minimize
from xorland.saddles import connect_all

ROOT_SEED = 424242

# per-cell basin-hopping budgets: (steps, window, max_chains).
# Most cells saturate under an accepted-steps window; weakly regularized
# landscapes with many hidden nodes have basins with ~1e-4 hit rates that
# defeat window-based stopping, so those cells run a large fixed budget.
_WINDOWED = {
    1: (2000, 4000, 24),
    2: (2000, 4000, 24),
    3: (2000, 4000, 24),
    4: (2500, 5000, 24),
    5: (2500, 6000, 28),
    6: (2500, 8000, 32),
}


def _budget(nh, lam):
    if nh >= 4 and lam <= 1.5e-5:
        return (1500, None, 96 if nh == 6 else 64)
    return _WINDOWED[nh]


def explore_cell(nh, lam, seed=ROOT_SEED, budgets=None):
    import os

    steps, window, chains = budgets or _budget(nh, lam)
    db = database.LandscapeDB(nh, lam)
    settings = BasinHoppingSettings(steps=steps, seed=seed)
    if window is None:
        from xorland.explore import run_chains_parallel

        run_chains_parallel(
            db, settings, n_chains=chains, workers=min(2, os.cpu_count() or 1)
        )
    else:
        run_chains(db, settings, n_chains=chains, saturation_window=window)
    return db


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    env = os.environ.get("XORLAND_CACHE_DIR")
    if env:
        path = Path(env)
        path.mkdir(parents=True, exist_ok=True)
        return path
    return tmp_path_factory.mktemp("landscapes")


@pytest.fixture(scope="session")
def landscapes(cache_dir):
    """Lazy landscape builder shared by the whole session."""
    return LandscapeCache(cache_dir)


class LandscapeCache:
    def __init__(self, root: Path):
        self.root = root

    def _get(self, name: str, builder) -> database.LandscapeDB:
        path = self.root / name
        if (path / "meta.json").is_file():
            return database.load(path)
        db = builder()
        database.save(db, path)
        return db

    def explored_path(self, nh, lam, seed=ROOT_SEED) -> Path:
        self.explored(nh, lam, seed)
        return self.root / f"explore_nh{nh}_lam{lam:g}_s{seed}"

    def connected_path(self, nh, lam, seed=ROOT_SEED) -> Path:
        self.connected(nh, lam, seed)
        return self.root / f"connect_nh{nh}_lam{lam:g}_s{seed}"

    def explored(self, nh, lam, seed=ROOT_SEED) -> database.LandscapeDB:
        tag = f"explore_nh{nh}_lam{lam:g}_s{seed}"
        return self._get(tag, lambda: explore_cell(nh, lam, seed))

    def connected(self, nh, lam, seed=ROOT_SEED) -> database.LandscapeDB:
        tag = f"connect_nh{nh}_lam{lam:g}_s{seed}"

        def build():
            db = explore_cell(nh, lam, seed)
            connect_all(db)
            return db

        return self._get(tag, build)

    def ac5_path(self) -> Path:
        self.ac5_db()
        return self.root / "ac5_nh6_lam0.01"

    def ac5_db(self) -> database.LandscapeDB:
        """The prescribed 16-chain, 5000-step run at nh=6, lambda=1e-2."""

        def build():
            db = database.LandscapeDB(6, 1e-2)
            run_chains(
                db,
                BasinHoppingSettings(steps=5000, seed=ROOT_SEED),
                n_chains=16,
                saturation_window=None,
            )
            return db

        return self._get("ac5_nh6_lam0.01", build)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jitted kernels once so timed tests measure the math."""
    surface = XorLoss(Layout(2), LossConfig(1e-3))
    res = minimize(surface, np.full(surface.dim, 0.3))
    surface.hessian(res.x)
    surface.spectrum(res.x)


@pytest.fixture(autouse=True)
def _quiet_logs():
    # per-step progress lines are INFO; keeping them off by default stops
    # pytest's log capture from accumulating 80k records in heavy tests
    logger = logging.getLogger("xorland")
    before = logger.level
    logger.setLevel(logging.WARNING)
    yield
    logger.setLevel(before)
