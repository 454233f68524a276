"""
persistent orbit cache

file layout (little-endian):
    magic b"WLCT", version u32, kind u8, level u32, conjugator entry count u32,
    conjugator entries f64..., T f64, count u64, covolume f64,
    digest 8 bytes (blake2b of everything else), body
body records: gamma i64 x (4 per factor), dist f64, angles f64 x (3 per factor),
sorted by dist

the checksum is an 8-byte blake2b digest (hashlib) in place of a crc64
"""

import hashlib
import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.errors import (
    CacheChecksumError,
    CacheFormatError,
    CacheTruncatedError,
    CacheValidationError,
    CacheVersionError,
)
from src.geometry.lie_core import GroupElement, GroupSpec
from src.lattice.enumeration import COLUMNS_PER_FACTOR, OrbitSet, enumerate_lattice
from src.lattice.lattice_spec import LatticeKind, LatticeSpec

logger = logging.getLogger(__name__)

MAGIC = b"WLCT"
FORMAT_VERSION = 1
SUFFIX = ".wlct"
VALIDATION_FRACTION = 0.01
VALIDATION_TOLERANCE = 1e-9

_PREFIX = struct.Struct("<4sIBII")
_TAIL = struct.Struct("<dQd")
_DIGEST_SIZE = 8

_KIND_CODES = {
    LatticeKind.psl2z: 0,
    LatticeKind.gamma0: 1,
    LatticeKind.gamma: 2,
    LatticeKind.product_psl2z: 3,
}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}

PathLike = Union[str, os.PathLike]


def record_dtype(factors: int) -> np.dtype:
    return np.dtype([
        ("gamma", "<i8", (4 * factors,)),
        ("dist", "<f8"),
        ("angles", "<f8", (COLUMNS_PER_FACTOR * factors,)),
    ])


def _digest(*chunks: bytes) -> bytes:
    h = hashlib.blake2b(digest_size=_DIGEST_SIZE)
    for chunk in chunks:
        h.update(chunk)
    return h.digest()


def _encode(orbit: OrbitSet) -> bytes:
    lat = orbit.lattice
    conj = np.concatenate([b.ravel() for b in lat.conjugator.blocks]).astype("<f8")
    records = np.zeros(len(orbit), dtype=record_dtype(orbit.factor_count))
    records["gamma"] = orbit.gammas
    records["dist"] = orbit.dist
    records["angles"] = orbit.angles
    header = (
        _PREFIX.pack(MAGIC, FORMAT_VERSION, _KIND_CODES[lat.kind], lat.level, conj.size)
        + conj.tobytes()
        + _TAIL.pack(orbit.T, len(orbit), orbit.covolume)
    )
    body = records.tobytes()
    return header + _digest(header, body) + body


def save_cache(orbit: OrbitSet, path: PathLike) -> Path:
    """
    write an orbit cache file atomically

    args:
        orbit: enumerated orbit (decorations are not stored)
        path: destination file

    returns:
        the written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _encode(orbit)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.info("saved %d orbit points to %s", len(orbit), path)
    return path


def _parse_header(data: bytes) -> Tuple[LatticeSpec, float, int, float, int]:
    if len(data) < _PREFIX.size:
        raise CacheTruncatedError("file shorter than the cache header")
    magic, version, kind_code, level, n_conj = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise CacheFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CacheVersionError(f"cache version {version} unsupported (expected {FORMAT_VERSION})")
    if kind_code not in _CODE_KINDS or n_conj not in (4, 8):
        raise CacheFormatError("malformed lattice descriptor")
    offset = _PREFIX.size
    end = offset + 8 * n_conj + _TAIL.size + _DIGEST_SIZE
    if len(data) < end:
        raise CacheTruncatedError("file shorter than the cache header")
    conj = np.frombuffer(data, dtype="<f8", count=n_conj, offset=offset)
    offset += 8 * n_conj
    T, count, covol = _TAIL.unpack_from(data, offset)
    kind = _CODE_KINDS[kind_code]
    spec = GroupSpec.sl(2, n_conj // 4)
    blocks = tuple(conj[4 * k:4 * k + 4].reshape(2, 2) for k in range(n_conj // 4))
    lat = LatticeSpec(kind, level, GroupElement(spec, blocks))
    return lat, T, count, covol, end


def read_cache_header(path: PathLike) -> Tuple[LatticeSpec, float, int]:
    """(lattice, T, count) without reading the body"""
    with open(path, "rb") as handle:
        data = handle.read(_PREFIX.size + 8 * 8 + _TAIL.size + _DIGEST_SIZE)
    lat, T, count, _, _ = _parse_header(data)
    return lat, T, count


def _recompute_distances(lat: LatticeSpec, gammas: np.ndarray) -> np.ndarray:
    parts = []
    for k, block in enumerate(lat.conjugator.blocks):
        mats = gammas[:, 4 * k:4 * k + 4].astype(float).reshape(-1, 2, 2)
        h = block[None, :, :] @ mats
        s = np.linalg.svd(h, compute_uv=False)
        parts.append(2.0 * np.log(s[:, 0]))
    return np.sqrt(np.sum(np.square(parts), axis=0))


def load_cache(path: PathLike, seed: int = 0) -> OrbitSet:
    """
    read and validate an orbit cache file

    args:
        path: cache file
        seed: seed of the distance re-validation sample

    returns:
        the stored OrbitSet
    """
    data = Path(path).read_bytes()
    lat, T, count, covol, header_end = _parse_header(data)
    factors = 2 if lat.is_product else 1
    dtype = record_dtype(factors)
    body = data[header_end:]
    expected = count * dtype.itemsize
    if len(body) < expected:
        raise CacheTruncatedError(f"body has {len(body)} bytes, header promises {expected}")
    if len(body) > expected:
        raise CacheFormatError("trailing bytes after cache body")
    stored = data[header_end - _DIGEST_SIZE:header_end]
    if _digest(data[:header_end - _DIGEST_SIZE], body) != stored:
        raise CacheChecksumError(f"digest mismatch in {path}")

    records = np.frombuffer(body, dtype=dtype, count=count)
    gammas = records["gamma"].astype(np.int64)
    dist = records["dist"].astype(float)
    angles = records["angles"].astype(float).reshape(count, COLUMNS_PER_FACTOR * factors)

    if count:
        rng = np.random.default_rng(seed)
        sample = rng.choice(count, size=max(1, int(round(VALIDATION_FRACTION * count))), replace=False)
        recomputed = _recompute_distances(lat, gammas[sample])
        worst = float(np.max(np.abs(recomputed - dist[sample])))
        if worst > VALIDATION_TOLERANCE:
            raise CacheValidationError(f"stored distances off by {worst:.3g} in {path}")

    factor_dists = None
    if lat.is_product:
        factor_dists = np.stack(
            [_recompute_distances(lat.factor(k), gammas[:, 4 * k:4 * k + 4]) for k in range(2)], axis=1
        )
    return OrbitSet(lat, float(T), gammas, dist, angles, float(covol), factor_dists)


def cache_path(cache_dir: PathLike, lat: LatticeSpec, T: float) -> Path:
    return Path(cache_dir) / f"{lat.descriptor()}_T{T:.6f}{SUFFIX}"


def find_cache(cache_dir: PathLike, lat: LatticeSpec, T: float) -> Optional[Path]:
    """smallest stored orbit of this lattice reaching at least T"""
    directory = Path(cache_dir)
    if not directory.is_dir():
        return None
    best: Optional[Tuple[float, Path]] = None
    for candidate in sorted(directory.glob(f"{lat.descriptor()}_T*{SUFFIX}")):
        try:
            stored_lat, stored_T, _ = read_cache_header(candidate)
        except (CacheFormatError, CacheVersionError, CacheTruncatedError) as exc:
            logger.warning("ignoring unreadable cache %s: %s", candidate, exc)
            continue
        if stored_lat.same_as(lat) and stored_T >= T and (best is None or stored_T < best[0]):
            best = (stored_T, candidate)
    return None if best is None else best[1]


def load_or_enumerate(
    lat: LatticeSpec,
    T: float,
    cache_dir: Optional[PathLike] = None,
    threads: int = 1,
) -> Tuple[OrbitSet, Optional[Path]]:
    """
    orbit to radius T, reusing any cache that reaches at least T

    returns:
        (orbit restricted to T, cache file used or written, None without a cache dir)
    """
    if cache_dir is not None:
        found = find_cache(cache_dir, lat, T)
        if found is not None:
            logger.info("reusing cache %s for T=%s", found, T)
            orbit = load_cache(found)
            return (orbit if orbit.T == T else orbit.restrict(T)), found
    orbit = enumerate_lattice(lat, T, threads=threads)
    if cache_dir is None:
        return orbit, None
    return orbit, save_cache(orbit, cache_path(cache_dir, lat, T))
