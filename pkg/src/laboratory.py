"""
batch experiment runner for the lattice laboratory

every subcommand computes its result completely, then writes
<out_dir>/<experiment>.csv and <out_dir>/<experiment>.json (summary plus
provenance). nothing is written when an error is raised.

usage: python -m src.laboratory <subcommand> [--config FILE] [--out-dir DIR] ...
"""

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy

from src.analysis.empirical import CountReport
from src.analysis.experiments import (
    count_ball,
    count_bisector,
    count_boundary,
    count_joint,
    count_sector,
    sector_reach,
)
from src.analysis.patterson_sullivan import (
    critical_exponent,
    minimal_usable_s,
    pole_order_check,
    poincare_partial,
    ps_direction_histogram,
    ps_measure,
)
from src.errors import DomainError, InvalidInputError, LabError, MissingCacheError, UsageError
from src.geometry.boundary import ORIGIN, TWO_PI, Arc, BoundaryPoint
from src.geometry.lie_core import GroupElement, GroupSpec
from src.geometry.root_volume import (
    asymptotic_fit,
    ball_volume,
    cone_volume,
    log_ball_volume,
    root_system,
    volume_ratio,
)
from src.geometry.wavefront import (
    angular_rigidity,
    search_largest_radius,
    wall_failure_probe,
    wavefront_check,
)
from src.lattice.enumeration import OrbitSet, ProductOrbit, stabilizer_order
from src.lattice.homspace import FundamentalDomainBins, reduce, solvable_sweep, translate_equidistribution
from src.lattice.lattice_spec import LatticeKind, LatticeSpec, covolume
from src.lattice.orbit_cache import find_cache, load_cache, load_or_enumerate
from src.selftest import SELFTEST_SAMPLES, run_selftest

logger = logging.getLogger(__name__)

__version__ = "1.0.0"

SCHEMA_VERSION = 1
CACHE_ENV = "LATTICE_LAB_CACHE_DIR"
DEFAULT_OUT_DIR = "results"
DEFAULT_SAMPLES = 10_000

EXPERIMENTS = (
    "enumerate",
    "count-ball",
    "count-sector",
    "count-boundary",
    "count-joint",
    "count-bisector",
    "volume",
    "fit",
    "ps",
    "reduce",
    "translate",
    "solvable",
    "wavefront",
    "wall-probe",
    "rigidity",
    "selftest",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    parameters of one experiment run

    values stay in their json form (lists, numbers, strings) so the config
    can be echoed and hashed; the runner parses them on use
    """

    experiment: str = ""
    lattice: Mapping[str, Any] = field(default_factory=lambda: {"kind": "PSL2Z"})
    T: Optional[float] = None
    arcs: Any = 8
    boundary_arcs: Any = 8
    boundary_point: Any = "cusp"
    omega1: Any = None
    omega2: Any = None
    mode: str = "gamma"
    base: Sequence[float] = (0.0, 1.0)
    s: Optional[float] = None
    s_grid: Sequence[float] = ()
    T_grid: Sequence[float] = ()
    samples: Optional[int] = None
    group: Mapping[str, Any] = field(default_factory=lambda: {"factors": [2]})
    C: float = 1.0
    eps: float = 0.0
    free_exponent: bool = False
    U_radius: float = 0.1
    V_radius: float = 0.1
    O_radius: Optional[float] = None
    margins: Sequence[float] = (2.0, 4.0, 8.0)
    n_bands: int = 10
    cusp_height: float = 4.0
    interior_cutoff: Optional[float] = None
    matrix: Optional[Sequence[Sequence[float]]] = None
    cache_only: bool = False
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "ExperimentConfig":
        """
        build a config, rejecting keys it does not know

        args:
            mapping: parsed json object
        """
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
        config = cls(**mapping)
        if config.threads < 1:
            raise InvalidInputError("threads must be at least 1")
        if config.samples is not None and config.samples < 1:
            raise InvalidInputError("samples must be at least 1")
        return config

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        try:
            mapping = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"config {path} is not valid json: {exc}") from exc
        except OSError as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(mapping, dict):
            raise InvalidInputError("config must be a json object")
        return cls.from_mapping(mapping)

    def to_mapping(self) -> Dict[str, Any]:
        return json.loads(json.dumps(dataclasses.asdict(self), default=_jsonable))

    def require(self, name: str):
        value = getattr(self, name)
        if value is None:
            raise InvalidInputError(f"experiment {self.experiment} needs '{name}'")
        return value


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (Path, LatticeKind)):
        return str(value.value if isinstance(value, LatticeKind) else value)
    if isinstance(value, (tuple, set)):
        return list(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def parse_lattice(mapping: Mapping[str, Any]) -> LatticeSpec:
    """lattice from {"kind", "level", "conjugator"}; product conjugators are a list of two blocks"""
    try:
        kind = LatticeKind(mapping.get("kind", "PSL2Z"))
    except ValueError as exc:
        raise InvalidInputError(f"unknown lattice kind {mapping.get('kind')!r}") from exc
    conjugator = None
    entries = mapping.get("conjugator")
    if entries is not None:
        if kind == LatticeKind.product_psl2z:
            conjugator = GroupElement.from_blocks(entries, GroupSpec.sl(2, 2))
        else:
            conjugator = GroupElement.from_matrix(entries)
    return LatticeSpec(kind, int(mapping.get("level", 1)), conjugator)


def parse_group(mapping: Mapping[str, Any]) -> GroupSpec:
    return GroupSpec(tuple(mapping.get("factors", (2,))), tuple(mapping.get("metric_scale", ())))


def parse_arcs(value) -> List[Arc]:
    """a count of equal arcs, or explicit [start, end] pairs"""
    if isinstance(value, int):
        return Arc.equal_partition(value)
    try:
        return [Arc(float(start), float(end)) for start, end in value]
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"arcs must be a count or a list of [start, end] pairs, got {value!r}") from exc


def parse_box(value, factors: int, default_length: float) -> Tuple[Arc, ...]:
    """one arc per factor; a bare pair stands for a single factor"""
    if value is None:
        return tuple(Arc.from_length(0.0, default_length) for _ in range(factors))
    if len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        value = [value]
    arcs = tuple(parse_arcs(value))
    if len(arcs) != factors:
        raise InvalidInputError(f"need one arc per factor ({factors}), got {len(arcs)}")
    return arcs


def parse_boundary_point(value) -> BoundaryPoint:
    if value in ("cusp", "inf", "infinity"):
        return BoundaryPoint.cusp()
    try:
        return BoundaryPoint(float(value))
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"boundary point must be 'cusp' or an angle, got {value!r}") from exc


def table_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buffer.getvalue()


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write(path: Path, text: str) -> None:
    """write through a temporary file in the same directory and rename"""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ExperimentResult:
    csv_text: str
    summary: Dict[str, Any]
    passed: bool = True


class ExperimentRunner:
    """Runs one configured experiment and emits its artifacts"""

    def __init__(self, config: ExperimentConfig, out_dir: Path = Path(DEFAULT_OUT_DIR), cache_dir: Optional[Path] = None):
        """
        initialize the runner

        args:
            config: parsed experiment parameters
            out_dir: directory for the csv and json artifacts
            cache_dir: orbit cache directory, none disables caching
        """
        if config.experiment not in EXPERIMENTS:
            raise UsageError(f"unknown experiment {config.experiment!r}; choose one of {', '.join(EXPERIMENTS)}")
        self.config = config
        self.out_dir = Path(out_dir)
        self.cache_dir = None if cache_dir is None else Path(cache_dir)
        self.cache_files: List[Path] = []
        self.handlers: Dict[str, Callable[[], ExperimentResult]] = {
            "enumerate": self.run_enumerate,
            "count-ball": self.run_count_ball,
            "count-sector": self.run_count_sector,
            "count-boundary": self.run_count_boundary,
            "count-joint": self.run_count_joint,
            "count-bisector": self.run_count_bisector,
            "volume": self.run_volume,
            "fit": self.run_fit,
            "ps": self.run_ps,
            "reduce": self.run_reduce,
            "translate": self.run_translate,
            "solvable": self.run_solvable,
            "wavefront": self.run_wavefront,
            "wall-probe": self.run_wall_probe,
            "rigidity": self.run_rigidity,
            "selftest": self.run_selftest,
        }

    # orbit access

    def _load(self, lat: LatticeSpec, T: float) -> OrbitSet:
        if self.config.cache_only:
            found = None if self.cache_dir is None else find_cache(self.cache_dir, lat, T)
            if found is None:
                raise MissingCacheError(f"no cache of {lat.descriptor()} reaching T={T} in {self.cache_dir}")
            orbit = load_cache(found)
            path = found
            orbit = orbit if orbit.T == T else orbit.restrict(T)
        else:
            orbit, path = load_or_enumerate(lat, T, self.cache_dir, threads=self.config.threads)
        if path is not None and path not in self.cache_files:
            self.cache_files.append(path)
        return orbit

    def lattice(self) -> LatticeSpec:
        return parse_lattice(self.config.lattice)

    def orbit(self, T: Optional[float] = None):
        """OrbitSet for rank-one lattices, streamed ProductOrbit for the product lattice"""
        lat = self.lattice()
        T = float(self.config.require("T") if T is None else T)
        if lat.is_product:
            return ProductOrbit.from_factors(lat, [self._load(lat.factor(k), T) for k in range(2)])
        return self._load(lat, T)

    def decorated_orbit(self, b: BoundaryPoint) -> OrbitSet:
        if self.lattice().is_product:
            raise DomainError("boundary experiments are rank-one; use count-bisector for the product lattice")
        return self.orbit().with_boundary(b)

    def _samples(self, default: int = DEFAULT_SAMPLES) -> int:
        return default if self.config.samples is None else int(self.config.samples)

    def _base(self) -> complex:
        re, im = self.config.base
        return complex(float(re), float(im))

    # handlers

    def run_enumerate(self) -> ExperimentResult:
        lat = self.lattice()
        T = float(self.config.require("T"))
        orbit = self._load(lat, T)
        rs = root_system(lat.group_spec)
        covol = covolume(lat)
        edges = list(np.arange(1.0, math.floor(T) + 1.0)) + ([T] if T % 1 else [])
        rows, lo = [], 0.0
        for hi in edges:
            if hi <= lo:
                continue
            shell = orbit.count_below(hi) - orbit.count_below(lo)
            rows.append((lo, hi, shell, orbit.count_below(hi), ball_volume(rs, hi) / covol))
            lo = hi
        summary = {
            "T": T,
            "count": len(orbit),
            "covolume": covol,
            "stabilizer_order": stabilizer_order(lat),
            "lattice": lat.descriptor(),
        }
        return ExperimentResult(table_csv(("shell_lo", "shell_hi", "count", "cumulative", "predicted_cumulative"), rows), summary)

    def _report(self, report: CountReport, **extra) -> ExperimentResult:
        summary = report.summary()
        summary.update(extra)
        return ExperimentResult(report.to_csv(), summary)

    def run_count_ball(self) -> ExperimentResult:
        T = float(self.config.require("T"))
        return self._report(count_ball(self.orbit(), T, self.config.threads))

    def run_count_sector(self) -> ExperimentResult:
        T = float(self.config.require("T"))
        base = self._base()
        orbit = self.orbit(sector_reach(base, T)) if base != ORIGIN else self.orbit()
        report = count_sector(orbit, parse_arcs(self.config.arcs), T, base=base,
                              mode=self.config.mode, threads=self.config.threads)
        return self._report(report)

    def run_count_boundary(self) -> ExperimentResult:
        T = float(self.config.require("T"))
        b = parse_boundary_point(self.config.boundary_point)
        orbit = self.decorated_orbit(b)
        return self._report(count_boundary(orbit, b, parse_arcs(self.config.arcs), T, self.config.threads))

    def run_count_joint(self) -> ExperimentResult:
        T = float(self.config.require("T"))
        b = parse_boundary_point(self.config.boundary_point)
        orbit = self.decorated_orbit(b)
        report = count_joint(orbit, b, parse_arcs(self.config.arcs), parse_arcs(self.config.boundary_arcs),
                             T, self.config.threads)
        return self._report(report)

    def run_count_bisector(self) -> ExperimentResult:
        T = float(self.config.require("T"))
        factors = 2 if self.lattice().is_product else 1
        omega1 = parse_box(self.config.omega1, factors, math.pi / 2)
        omega2 = parse_box(self.config.omega2, factors, math.pi / 2)
        return self._report(count_bisector(self.orbit(), omega1, omega2, T, self.config.threads))

    def _T_values(self) -> List[float]:
        values = list(self.config.T_grid) or [self.config.require("T")]
        return [float(t) for t in values]

    def run_volume(self) -> ExperimentResult:
        spec = parse_group(self.config.group)
        rs = root_system(spec)
        C, eps = float(self.config.C), float(self.config.eps)
        rows = []
        for T in self._T_values():
            log_vol = log_ball_volume(rs, T)
            volume = ball_volume(rs, T) if log_vol < 700 else math.inf
            cone = cone_volume(rs, T, C) if C > 0 else math.nan
            cone_ratio = cone / volume if C > 0 and math.isfinite(volume) else math.nan
            shell = volume_ratio(rs, T, eps) if eps > 0 else math.nan
            rows.append((T, volume, log_vol, cone, cone_ratio, shell))
        summary = {
            "factors": list(spec.factors),
            "metric_scale": list(spec.metric_scale),
            "rank": rs.rank_r,
            "delta": rs.delta,
            "C": C,
            "eps": eps,
            "T_grid": [r[0] for r in rows],
        }
        header = ("T", "volume", "log_volume", "cone_volume", "cone_ratio", "shell_ratio")
        return ExperimentResult(table_csv(header, rows), summary)

    def run_fit(self) -> ExperimentResult:
        spec = parse_group(self.config.group)
        rs = root_system(spec)
        fit = asymptotic_fit(rs, self.config.T_grid, free_exponent=bool(self.config.free_exponent))
        rows = list(zip(fit.T_grid, fit.log_volumes, fit.residuals))
        summary = {
            "factors": list(spec.factors),
            "rank": rs.rank_r,
            "delta": rs.delta,
            "C_est": fit.C_est,
            "exponent": fit.exponent,
            "expected_exponent": 0.5 * (rs.rank_r - 1),
            "free_exponent": fit.free_exponent,
        }
        return ExperimentResult(table_csv(("T", "log_volume", "residual"), rows), summary)

    def run_ps(self) -> ExperimentResult:
        lat = self.lattice()
        orbit = self.orbit()
        T_max = float(self.config.require("T"))
        if lat.is_product:
            s = float(self.config.require("s"))
            n_bins = self.config.arcs if isinstance(self.config.arcs, int) else len(self.config.arcs)
            measure = ps_direction_histogram(orbit, s, n_bins, T_max)
            rows = [(b.id, b.lo, b.hi, w) for b, w in zip(measure.bins, measure.weights)]
            return ExperimentResult(table_csv(("bin_id", "lo", "hi", "mass"), rows), {"s": s, "T_max": T_max})

        summary: Dict[str, Any] = {"T_max": T_max, "minimal_usable_s": minimal_usable_s(orbit, T_max)}
        if T_max >= 10.0:
            summary["critical_exponent"] = critical_exponent(orbit)
        if self.config.s_grid:
            entries = pole_order_check(orbit, self.config.s_grid, T_max)
            rows = [(e.s, e.normalized, e.normalized_partial, e.tail_fraction, e.usable) for e in entries]
            header = ("s", "normalized", "normalized_partial", "tail_fraction", "usable")
            summary["s_grid"] = [e.s for e in entries]
            return ExperimentResult(table_csv(header, rows), summary)

        s = float(self.config.require("s"))
        ev = poincare_partial(orbit, s, T_max)
        arcs = parse_arcs(self.config.arcs)
        measure = ps_measure(orbit, s, arcs, base=self._base(), interior_cutoff=self.config.interior_cutoff, T_max=T_max)
        offset = 0 if self.config.interior_cutoff is None else 1
        arc_mass = measure.weights[offset:]
        share = arc_mass / np.sum(arc_mass)
        rows = []
        if offset:
            b = measure.bins[0]
            rows.append((b.id, b.lo, b.hi, measure.weights[0], math.nan, math.nan))
        for b, mass, part in zip(measure.bins[offset:], arc_mass, share):
            uniform = (b.hi - b.lo) / TWO_PI
            rows.append((b.id, b.lo, b.hi, mass, uniform, part / uniform))
        summary.update({
            "s": s,
            "partial_sum": ev.partial_sum,
            "tail_bound": ev.tail_bound,
            "tail_fraction": ev.tail_fraction,
            "growth_constant": ev.growth_constant,
            "interior_cutoff": self.config.interior_cutoff,
            "interior_mass": float(measure.weights[0]) if offset else 0.0,
        })
        return ExperimentResult(table_csv(("bin_id", "lo", "hi", "mass", "uniform", "ratio"), rows), summary)

    def run_reduce(self) -> ExperimentResult:
        g = GroupElement.from_matrix(self.config.require("matrix"))
        point = reduce(g)
        word, rep = point.word.ravel().tolist(), point.rep.matrix.ravel().tolist()
        header = ("w11", "w12", "w21", "w22", "r11", "r12", "r21", "r22", "z_re", "z_im", "frame_angle")
        rows = [tuple(word) + tuple(rep) + (point.z.real, point.z.imag, point.frame_angle)]
        return ExperimentResult(table_csv(header, rows), {"word": word, "z": [point.z.real, point.z.imag]})

    def _bins(self) -> FundamentalDomainBins:
        return FundamentalDomainBins.equal_area(int(self.config.n_bands), float(self.config.cusp_height))

    def _element(self) -> GroupElement:
        if self.config.matrix is None:
            return GroupElement.identity(GroupSpec.sl(2))
        return GroupElement.from_matrix(self.config.matrix)

    def run_translate(self) -> ExperimentResult:
        bins = self._bins()
        U = parse_box(self.config.omega1, 1, TWO_PI)[0]
        a_logs = [[m / 2.0, -m / 2.0] for m in self.config.margins]
        steps = translate_equidistribution(self._element(), a_logs, U, bins, self._samples(),
                                           self.config.seed, self.config.threads)
        rows = []
        for step in steps:
            observed = step.measure.normalized()
            for b, obs, exp in zip(step.measure.bins, observed, step.expected):
                rows.append((step.margin, b.id, b.lo, b.hi, obs, exp, obs / exp))
        summary = {
            "margins": [s.margin for s in steps],
            "max_deviation": [s.max_deviation for s in steps],
            "claimed": [s.claimed for s in steps],
            "U": [U.start, U.start + U.length],
            "samples": self._samples(),
        }
        header = ("margin", "bin_id", "lo", "hi", "observed", "expected", "ratio")
        return ExperimentResult(table_csv(header, rows), summary)

    def run_solvable(self) -> ExperimentResult:
        T = float(self.config.require("T"))
        omega = parse_box(self.config.omega1, 1, math.pi)[0]
        result = solvable_sweep(self._element(), T, omega, self._bins(), self._samples(),
                                self.config.seed, threads=self.config.threads)
        observed = result.measure.normalized()
        rows = [(b.id, b.lo, b.hi, obs, exp, obs / exp)
                for b, obs, exp in zip(result.measure.bins, observed, result.expected)]
        summary = {
            "T": T,
            "omega": [omega.start, omega.start + omega.length],
            "accepted": int(result.dists.size),
            "rho_mass_full": result.rho_mass_full,
            "rho_mass_omega": result.rho_mass_omega,
            "ratio": result.ratio,
            "omega_measure": result.omega_measure,
            "max_deviation": result.max_deviation,
            "samples": self._samples(),
        }
        return ExperimentResult(table_csv(("bin_id", "lo", "hi", "observed", "expected", "ratio"), rows), summary)

    def run_wavefront(self) -> ExperimentResult:
        spec = parse_group(self.config.group)
        cfg = self.config
        O_radius = cfg.O_radius
        searched = O_radius is None
        if searched:
            O_radius = search_largest_radius(spec, cfg.C, cfg.U_radius, cfg.V_radius, self._samples(), cfg.seed)
        report = wavefront_check(spec, cfg.C, cfg.U_radius, cfg.V_radius, O_radius, self._samples(), cfg.seed)
        summary = report.summary()
        summary.update({"searched": searched, "factors": list(spec.factors)})
        header = tuple(k for k in summary if k != "factors")
        return ExperimentResult(table_csv(header, [tuple(summary[k] for k in header)]), summary, report.all_passed)

    def run_wall_probe(self) -> ExperimentResult:
        spec = parse_group(self.config.group)
        witnesses = wall_failure_probe(spec, self.config.U_radius, self._samples(), seed=self.config.seed)
        rows = [(w.radius, w.k2_deviation) for w in witnesses]
        summary = {
            "factors": list(spec.factors),
            "U_radius": self.config.U_radius,
            "witnesses": len(witnesses),
            "witness_elements": [[b.tolist() for b in w.h.blocks] for w in witnesses],
        }
        return ExperimentResult(table_csv(("radius", "k2_deviation"), rows), summary)

    def run_rigidity(self) -> ExperimentResult:
        spec = parse_group(self.config.group)
        report = angular_rigidity(spec, self.config.C, self.config.U_radius, self._samples(), self.config.seed)
        summary = dict(dataclasses.asdict(report), factors=list(spec.factors))
        header = ("C", "U0_radius", "epsilon", "checked", "violations", "violator_count")
        return ExperimentResult(table_csv(header, [tuple(summary[k] for k in header)]), summary,
                                report.violations == 0)

    def run_selftest(self) -> ExperimentResult:
        checks = run_selftest(self.config.seed, self._samples(SELFTEST_SAMPLES))
        rows = [(c.name, c.passed, c.detail) for c in checks]
        passed = all(c.passed for c in checks)
        summary = {"passed": passed, "failed": [c.name for c in checks if not c.passed]}
        return ExperimentResult(table_csv(("check", "passed", "detail"), rows), summary, passed)

    # artifacts

    def provenance(self) -> Dict[str, Any]:
        config_text = json.dumps(self.config.to_mapping(), sort_keys=True)
        return {
            "schema_version": SCHEMA_VERSION,
            "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
            "caches": [{"file": p.name, "sha256": sha256_file(p)} for p in self.cache_files],
            "seed": self.config.seed,
            "versions": {
                "lattice_lab": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }

    def execute(self) -> ExperimentResult:
        logger.info("running %s", self.config.experiment)
        return self.handlers[self.config.experiment]()

    def write(self, result: ExperimentResult) -> Tuple[Path, Path]:
        stem = self.config.experiment
        document = {
            "experiment": stem,
            "config": self.config.to_mapping(),
            "result": result.summary,
            "passed": result.passed,
            "provenance": self.provenance(),
        }
        csv_path, json_path = self.out_dir / f"{stem}.csv", self.out_dir / f"{stem}.json"
        json_text = json.dumps(document, sort_keys=True, indent=2, default=_jsonable) + "\n"
        atomic_write(csv_path, result.csv_text)
        atomic_write(json_path, json_text)
        logger.info("wrote %s and %s", csv_path, json_path)
        return csv_path, json_path

    def run(self, verbose: bool = False) -> ExperimentResult:
        """
        compute, then write both artifacts

        args:
            verbose: print the result table to the console

        returns:
            ExperimentResult of the experiment
        """
        result = self.execute()
        self.write(result)
        if verbose:
            self.print_table(result)
        return result

    def print_table(self, result: ExperimentResult):
        """Print the csv rows as an aligned table"""
        rows = list(csv.reader(io.StringIO(result.csv_text)))
        if not rows:
            return
        widths = [max(len(r[i]) for r in rows if i < len(r)) for i in range(len(rows[0]))]
        widths = [min(w, 24) for w in widths]
        print("\n" + "=" * 80)
        print(f"{self.config.experiment.upper()} ({'passed' if result.passed else 'FAILED'})")
        print("=" * 80)
        print("  ".join(h.ljust(w) for h, w in zip(rows[0], widths)))
        print("-" * 80)
        for row in rows[1:]:
            print("  ".join(v[:w].ljust(w) for v, w in zip(row, widths)))
        print("=" * 80 + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="json file of experiment parameters")
    common.add_argument("--out-dir", type=Path, default=Path(DEFAULT_OUT_DIR))
    common.add_argument("--cache-dir", type=Path, help=f"orbit cache directory (default ${CACHE_ENV})")
    common.add_argument("--cache-only", action="store_true", default=None, help="fail instead of enumerating")
    common.add_argument("--threads", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--T", type=float, dest="T")
    common.add_argument("--s", type=float, dest="s")
    common.add_argument("--arcs", type=int)
    common.add_argument("--mode", choices=("gamma", "point"))
    common.add_argument("--lattice", choices=[k.value for k in LatticeKind])
    common.add_argument("--level", type=int)
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="python -m src.laboratory", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("run",):
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """merge the config file with command-line overrides"""
    mapping: Dict[str, Any] = {}
    if args.config is not None:
        mapping = ExperimentConfig.from_file(args.config).to_mapping()
    configured = mapping.get("experiment") or ""
    if args.command == "run":
        if not configured:
            raise UsageError("'run' needs a config naming its experiment")
        mapping["experiment"] = configured
    elif configured and configured != args.command:
        raise UsageError(f"config is for {configured!r}, not {args.command!r}")
    else:
        mapping["experiment"] = args.command

    for key in ("threads", "seed", "samples", "T", "s", "arcs", "mode", "cache_only"):
        value = getattr(args, key)
        if value is not None:
            mapping[key] = value
    if args.lattice is not None or args.level is not None:
        lattice = dict(mapping.get("lattice", {"kind": "PSL2Z"}))
        if args.lattice is not None:
            lattice["kind"] = args.lattice
        if args.level is not None:
            lattice["level"] = args.level
        mapping["lattice"] = lattice
    return ExperimentConfig.from_mapping(mapping)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )
    cache_dir = args.cache_dir or os.environ.get(CACHE_ENV) or None
    try:
        config = resolve_config(args)
        runner = ExperimentRunner(config, args.out_dir, cache_dir)
        result = runner.run(verbose=args.verbose)
    except LabError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
