"""
fast invariant battery behind `python -m src.laboratory selftest`
"""

import logging
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Tuple

import numpy as np

from src.geometry.lie_core import (
    GroupSpec,
    cartan_decompose_batch,
    random_rotations,
    random_unimodular,
)
from src.lattice.enumeration import enumerate_lattice, naive_sweep
from src.lattice.lattice_spec import LatticeSpec
from src.lattice.orbit_cache import load_cache, save_cache

logger = logging.getLogger(__name__)

INEQUALITY_TOLERANCE = 1e-9
SELFTEST_SAMPLES = 100_000


@dataclass(frozen=True)
class SelfCheck:
    name: str
    passed: bool
    detail: str


def _log_singular_values(stack: np.ndarray) -> np.ndarray:
    return np.log(np.linalg.svd(stack, compute_uv=False))


def _sorted_chamber(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    """random interior chamber vectors (descending, trace zero)"""
    x = -np.sort(-rng.standard_normal((count, n)) * 2.0, axis=1)
    return x - x.mean(axis=1, keepdims=True)


def check_round_trip(rng: np.random.Generator, samples: int) -> Tuple[bool, str]:
    worst = 0.0
    for n in (2, 3):
        g = random_unimodular(n, samples, rng)
        k1, a_log, k2 = cartan_decompose_batch(g)
        rebuilt = k1 * np.exp(a_log)[:, None, :] @ k2
        worst = max(worst, float(np.max(np.abs(rebuilt - g))))
    return worst < 1e-8, f"max reconstruction error {worst:.3e}"


def check_distance_symmetry(rng: np.random.Generator, samples: int) -> Tuple[bool, str]:
    worst = 0.0
    for n in (2, 3):
        spec = GroupSpec.sl(n)
        g = random_unimodular(n, samples, rng)
        forward = spec.norm(_log_singular_values(g))
        backward = spec.norm(_log_singular_values(np.linalg.inv(g)))
        worst = max(worst, float(np.max(np.abs(forward - backward))))
    return worst < 1e-9, f"max asymmetry {worst:.3e}"


def check_rotation_inequality(rng: np.random.Generator, samples: int) -> Tuple[bool, str]:
    """d(K a1, K a2) <= d(K a1 k, K a2)"""
    worst = -np.inf
    for n in (2, 3):
        spec = GroupSpec.sl(n)
        t1, t2 = _sorted_chamber(rng, n, samples), _sorted_chamber(rng, n, samples)
        k = random_rotations(n, samples, rng)
        direct = spec.norm(t2 - t1)
        # d(K a1 k, K a2) = |mu(a2 k^-1 a1^-1)|
        h = np.exp(t2)[:, :, None] * np.transpose(k, (0, 2, 1)) * np.exp(-t1)[:, None, :]
        rotated = spec.norm(_log_singular_values(h))
        worst = max(worst, float(np.max(direct - rotated)))
    return worst <= INEQUALITY_TOLERANCE, f"max excess {worst:.3e}"


def check_link_inequality(rng: np.random.Generator, samples: int) -> Tuple[bool, str]:
    """<H1, H2> >= <Ad(k) H1, H2> for H1, H2 in the positive chamber"""
    worst = -np.inf
    for n in (2, 3):
        scale = GroupSpec.sl(n).metric_scale[0] ** 2
        h1, h2 = _sorted_chamber(rng, n, samples), _sorted_chamber(rng, n, samples)
        k = random_rotations(n, samples, rng)
        plain = scale * np.sum(h1 * h2, axis=1)
        # tr(k H1 k^T H2) = sum_ij k_ij^2 h1_j h2_i
        moved = scale * np.einsum("sij,sj,si->s", k * k, h1, h2)
        worst = max(worst, float(np.max(moved - plain)))
    return worst <= INEQUALITY_TOLERANCE, f"max excess {worst:.3e}"


def check_cache_round_trip(rng: np.random.Generator, samples: int) -> Tuple[bool, str]:
    orbit = enumerate_lattice(LatticeSpec.psl2z(), 4.0)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_cache(orbit, Path(tmp) / "selftest.wlct")
        loaded = load_cache(path)
    same = (
        loaded.T == orbit.T
        and np.array_equal(loaded.gammas, orbit.gammas)
        and np.array_equal(loaded.dist, orbit.dist)
        and np.array_equal(loaded.angles, orbit.angles)
    )
    return bool(same), f"{len(orbit)} records"


def check_completeness(rng: np.random.Generator, samples: int) -> Tuple[bool, str]:
    orbit = enumerate_lattice(LatticeSpec.psl2z(), 4.0)
    swept = {tuple(row) for row in naive_sweep(4.0).tolist()}
    found = {tuple(row) for row in orbit.gammas.tolist()}
    missing, extra = len(swept - found), len(found - swept)
    return missing == 0 and extra == 0, f"{len(found)} found, {missing} missing, {extra} extra"


CHECKS: List[Tuple[str, Callable[[np.random.Generator, int], Tuple[bool, str]]]] = [
    ("cartan_round_trip", check_round_trip),
    ("distance_symmetry", check_distance_symmetry),
    ("rotation_inequality", check_rotation_inequality),
    ("link_inequality", check_link_inequality),
    ("cache_round_trip", check_cache_round_trip),
    ("enumeration_completeness", check_completeness),
]


def run_selftest(seed: int = 0, samples: int = SELFTEST_SAMPLES) -> List[SelfCheck]:
    """
    run every check of the battery

    args:
        seed: master seed
        samples: sample count of the sampled suites

    returns:
        one SelfCheck per check, in battery order
    """
    rng = np.random.default_rng(seed)
    results = []
    for name, check in CHECKS:
        passed, detail = check(rng, samples)
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, "%s: %s (%s)", name, "ok" if passed else "FAILED", detail)
        results.append(SelfCheck(name, bool(passed), detail))
    return results
