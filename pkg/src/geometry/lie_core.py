"""
matrix-group primitives

group specifications for products of SL(n, R), the Cartan (KAK) and
Iwasawa (KAN) decompositions, the invariant distance on K\\G and weyl
chamber geometry
"""

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import InvalidInputError

DET_TOLERANCE = 1e-9
WALL_TOLERANCE = 1e-8


def default_metric_scale(n: int) -> float:
    """sqrt(2) turns an SL(2) factor into the curvature -1 hyperbolic plane"""
    return math.sqrt(2.0) if n == 2 else 1.0


@dataclass(frozen=True)
class GroupSpec:
    """product of SL(n_i, R) factors with a norm scale per factor"""

    factors: Tuple[int, ...]
    metric_scale: Tuple[float, ...] = ()

    def __post_init__(self):
        factors = tuple(int(n) for n in self.factors)
        if not factors:
            raise InvalidInputError("group spec needs at least one factor")
        if any(n < 2 for n in factors):
            raise InvalidInputError(f"every factor must be SL(n) with n >= 2, got {factors}")
        scale = tuple(float(s) for s in self.metric_scale) or tuple(
            default_metric_scale(n) for n in factors
        )
        if len(scale) != len(factors):
            raise InvalidInputError("metric_scale needs one entry per factor")
        if any(not math.isfinite(s) or s <= 0 for s in scale):
            raise InvalidInputError(f"metric_scale must be positive, got {scale}")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "metric_scale", scale)

    @classmethod
    def sl(cls, n: int, copies: int = 1) -> "GroupSpec":
        """SL(n, R) or a power of it"""
        return cls(factors=(n,) * copies)

    @property
    def rank(self) -> int:
        """real rank, dim of the split cartan subalgebra"""
        return sum(n - 1 for n in self.factors)

    @property
    def dimension(self) -> int:
        """length of a flat a_log vector (diagonal entries of every block)"""
        return sum(self.factors)

    @property
    def offsets(self) -> List[int]:
        """start index of each block inside a flat a_log vector"""
        out, pos = [], 0
        for n in self.factors:
            out.append(pos)
            pos += n
        return out

    def split(self, a_log: np.ndarray) -> List[np.ndarray]:
        """cut a flat a_log vector (or a stack of them) into per-block pieces"""
        a_log = np.asarray(a_log, dtype=float)
        return [a_log[..., o:o + n] for o, n in zip(self.offsets, self.factors)]

    def metric_weights(self) -> np.ndarray:
        """per-coordinate weight scale_i**2 of the quadratic form on a_log"""
        return np.concatenate([np.full(n, s * s) for n, s in zip(self.factors, self.metric_scale)])

    def norm(self, a_log: np.ndarray) -> np.ndarray:
        """scaled euclidean norm on the cartan subalgebra (vectorized over leading axes)"""
        a_log = np.asarray(a_log, dtype=float)
        return np.sqrt(np.sum(self.metric_weights() * a_log * a_log, axis=-1))


@dataclass(frozen=True, eq=False)
class GroupElement:
    """unimodular block-diagonal matrix tagged with its group spec"""

    spec: GroupSpec
    blocks: Tuple[np.ndarray, ...]

    def __post_init__(self):
        blocks = tuple(np.array(b, dtype=float) for b in self.blocks)
        if len(blocks) != len(self.spec.factors):
            raise InvalidInputError(
                f"expected {len(self.spec.factors)} blocks, got {len(blocks)}"
            )
        for n, block in zip(self.spec.factors, blocks):
            if block.shape != (n, n):
                raise InvalidInputError(f"block shape {block.shape} does not match SL({n})")
            if not np.all(np.isfinite(block)):
                raise InvalidInputError("group element has non-finite entries")
            det = np.linalg.det(block)
            if abs(det - 1.0) > DET_TOLERANCE:
                raise InvalidInputError(f"determinant {det!r} is not 1")
            block.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def identity(cls, spec: GroupSpec) -> "GroupElement":
        return cls(spec, tuple(np.eye(n) for n in spec.factors))

    @classmethod
    def from_matrix(cls, matrix: Sequence[Sequence[float]], spec: Optional[GroupSpec] = None) -> "GroupElement":
        """wrap a single SL(n) matrix"""
        block = np.asarray(matrix, dtype=float)
        if block.ndim != 2 or block.shape[0] != block.shape[1]:
            raise InvalidInputError(f"expected a square matrix, got shape {block.shape}")
        return cls(spec or GroupSpec((block.shape[0],)), (block,))

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[Sequence[float]]], spec: Optional[GroupSpec] = None) -> "GroupElement":
        blocks = [np.asarray(b, dtype=float) for b in blocks]
        return cls(spec or GroupSpec(tuple(b.shape[0] for b in blocks)), tuple(blocks))

    @property
    def matrix(self) -> np.ndarray:
        """the single block of a one-factor element"""
        if len(self.blocks) != 1:
            raise InvalidInputError("matrix is only defined for single-factor elements")
        return self.blocks[0]

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        if self.spec.factors != other.spec.factors:
            raise InvalidInputError("cannot multiply elements of different groups")
        return GroupElement(self.spec, tuple(x @ y for x, y in zip(self.blocks, other.blocks)))

    def inverse(self) -> "GroupElement":
        return GroupElement(self.spec, tuple(np.linalg.inv(b) for b in self.blocks))

    def transpose(self) -> "GroupElement":
        return GroupElement(self.spec, tuple(b.T for b in self.blocks))

    def max_abs_diff(self, other: "GroupElement") -> float:
        """largest entrywise difference to another element of the same group"""
        return max(float(np.max(np.abs(x - y))) for x, y in zip(self.blocks, other.blocks))

    def __repr__(self) -> str:
        inner = ", ".join(np.array2string(b, precision=6) for b in self.blocks)
        return f"GroupElement(factors={self.spec.factors}, blocks=[{inner}])"


@dataclass(frozen=True, eq=False)
class CartanTriple:
    """
    g = k1 * exp(a_log) * k2 with a_log in the closed positive chamber

    regular is False when some block sits within WALL_TOLERANCE of a wall;
    the orthogonal factors are then raw svd output
    """

    k1: GroupElement
    a_log: np.ndarray
    k2: GroupElement
    mu_norm: float
    regular: bool

    def reconstruct(self) -> GroupElement:
        return self.k1 @ exp_a(self.k1.spec, self.a_log) @ self.k2


@dataclass(frozen=True, eq=False)
class IwasawaTriple:
    """g = k * exp(a_log) * n with n unit upper triangular"""

    k: GroupElement
    a_log: np.ndarray
    n: GroupElement

    def reconstruct(self) -> GroupElement:
        return self.k @ exp_a(self.k.spec, self.a_log) @ self.n


def exp_a(spec: GroupSpec, a_log: np.ndarray) -> GroupElement:
    """positive diagonal element with the given log entries"""
    a_log = np.asarray(a_log, dtype=float)
    if a_log.shape != (spec.dimension,):
        raise InvalidInputError(f"a_log must have length {spec.dimension}")
    return GroupElement(spec, tuple(np.diag(np.exp(part)) for part in spec.split(a_log)))


def chamber_margin(a_log: np.ndarray, spec: Optional[GroupSpec] = None) -> float:
    """
    minimum simple-root value alpha_j(a) = a_j - a_{j+1} over all blocks

    args:
        a_log: flat diagonal log vector
        spec: group layout; a single block is assumed when omitted

    returns:
        the margin, positive iff a_log is in the open chamber
    """
    a_log = np.asarray(a_log, dtype=float)
    parts = spec.split(a_log) if spec is not None else [a_log]
    return float(min(np.min(part[..., :-1] - part[..., 1:]) for part in parts))


def _block_margins(a_log: np.ndarray) -> np.ndarray:
    """per-row chamber margin of a stack of single-block log vectors"""
    return np.min(a_log[..., :-1] - a_log[..., 1:], axis=-1)


def _canonical_signs(k2_rows: np.ndarray) -> np.ndarray:
    """
    sign vector m (det 1) making the first max-abs entry of rows 1..n-1 of k2 positive

    the last row's sign is forced by the determinant
    """
    rows = k2_rows[..., :-1, :]
    lead_index = np.argmax(np.abs(rows), axis=-1)
    lead = np.take_along_axis(rows, lead_index[..., None], axis=-1)[..., 0]
    eps = np.where(lead < 0, -1.0, 1.0)
    last = np.prod(eps, axis=-1, keepdims=True)
    return np.concatenate([eps, last], axis=-1)


def cartan_decompose_batch(blocks: np.ndarray, canonical: bool = True) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    vectorized KAK for a stack of SL(n) matrices

    args:
        blocks: array of shape (count, n, n)
        canonical: apply the M sign convention to regular rows

    returns:
        (k1, a_log, k2) stacks with k1 @ diag(exp(a_log)) @ k2 == blocks
    """
    blocks = np.asarray(blocks, dtype=float)
    if not np.all(np.isfinite(blocks)):
        raise InvalidInputError("non-finite entries in matrix stack")
    u, s, vt = np.linalg.svd(blocks)
    flip = np.linalg.det(u) < 0
    u[flip, :, -1] *= -1.0
    vt[flip, -1, :] *= -1.0
    a_log = np.log(s)
    if canonical:
        eps = _canonical_signs(vt)
        eps[_block_margins(a_log) <= WALL_TOLERANCE] = 1.0
        u = u * eps[:, None, :]
        vt = eps[:, :, None] * vt
    return u, a_log, vt


def canonical_m_reduce(k1: GroupElement, a_log: np.ndarray, k2: GroupElement) -> CartanTriple:
    """
    pick the deterministic representative of the M-orbit (k1 m, a, m k2)

    blocks whose a sits on a wall are left untouched and the triple is
    flagged as not regular
    """
    spec = k1.spec
    a_log = np.asarray(a_log, dtype=float)
    new_k1, new_k2, regular = [], [], True
    for u, part, vt in zip(k1.blocks, spec.split(a_log), k2.blocks):
        if chamber_margin(part) > WALL_TOLERANCE:
            eps = _canonical_signs(vt)
            new_k1.append(u * eps[None, :])
            new_k2.append(eps[:, None] * vt)
        else:
            regular = False
            new_k1.append(u)
            new_k2.append(vt)
    return CartanTriple(
        k1=GroupElement(spec, tuple(new_k1)),
        a_log=a_log,
        k2=GroupElement(spec, tuple(new_k2)),
        mu_norm=float(spec.norm(a_log)),
        regular=regular,
    )


def cartan_decompose(g: GroupElement) -> CartanTriple:
    """
    canonical cartan decomposition of a group element

    args:
        g: element of a product of SL(n)

    returns:
        CartanTriple with a_log weakly decreasing inside each block
    """
    k1_blocks, logs, k2_blocks = [], [], []
    for block in g.blocks:
        u, a_log, vt = cartan_decompose_batch(block[None, :, :], canonical=False)
        k1_blocks.append(u[0])
        logs.append(a_log[0])
        k2_blocks.append(vt[0])
    spec = g.spec
    return canonical_m_reduce(
        GroupElement(spec, tuple(k1_blocks)),
        np.concatenate(logs),
        GroupElement(spec, tuple(k2_blocks)),
    )


def iwasawa_decompose(g: GroupElement) -> IwasawaTriple:
    """
    iwasawa decomposition by column orthogonalization

    args:
        g: element of a product of SL(n)

    returns:
        IwasawaTriple (k, a_log, n)
    """
    k_blocks, logs, n_blocks = [], [], []
    for block in g.blocks:
        q, r = np.linalg.qr(block)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        q = q * signs[None, :]
        r = signs[:, None] * r
        diag = np.diag(r)
        k_blocks.append(q)
        logs.append(np.log(diag))
        n_blocks.append(r / diag[:, None])
    spec = g.spec
    return IwasawaTriple(
        k=GroupElement(spec, tuple(k_blocks)),
        a_log=np.concatenate(logs),
        n=GroupElement(spec, tuple(n_blocks)),
    )


def distance_to_origin(g: GroupElement) -> float:
    """d(K, Kg) = norm of the cartan projection"""
    logs = []
    for block in g.blocks:
        s = np.linalg.svd(block, compute_uv=False)
        logs.append(np.log(s))
    return float(g.spec.norm(np.concatenate(logs)))


def distance(g: GroupElement, h: GroupElement) -> float:
    """two-point distance d(Kg, Kh) = d(K, K g h^-1)"""
    return distance_to_origin(g @ h.inverse())


def sl2_distances(entries: np.ndarray, scale: float = math.sqrt(2.0)) -> np.ndarray:
    """
    d(K, Kh) for a stack of SL(2) matrices given as rows (a, b, c, d)

    uses d = arccosh(|h|_F^2 / 2) rescaled for non-default metric scales
    """
    entries = np.asarray(entries, dtype=float)
    half_frob = 0.5 * np.sum(entries * entries, axis=-1)
    return np.arccosh(np.maximum(half_frob, 1.0)) * (scale / math.sqrt(2.0))


def sl2_cartan_angles(entries: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    closed-form KAK of SL(2) matrices h = rot(theta1) diag(sigma, 1/sigma) rot(theta2)

    args:
        entries: array (..., 4) of rows (a, b, c, d)

    returns:
        (theta1, theta2, log_sigma) with angles in [0, 2pi); rot(t) = [[cos t, -sin t], [sin t, cos t]]
    """
    entries = np.asarray(entries, dtype=float)
    a, b, c, d = (entries[..., i] for i in range(4))
    e, f = 0.5 * (a + d), 0.5 * (a - d)
    g, h = 0.5 * (c + b), 0.5 * (c - b)
    sigma = np.hypot(e, h) + np.hypot(f, g)
    phi = np.arctan2(h, e)
    psi = np.arctan2(g, f)
    two_pi = 2.0 * np.pi
    return np.mod(0.5 * (phi + psi), two_pi), np.mod(0.5 * (phi - psi), two_pi), np.log(sigma)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def inner_product(spec: GroupSpec, x_blocks: Sequence[np.ndarray], y_blocks: Sequence[np.ndarray]) -> float:
    """scaled trace form sum_i scale_i^2 tr(X_i Y_i) on block lie algebra elements"""
    return float(sum(s * s * np.trace(x @ y) for s, x, y in zip(spec.metric_scale, x_blocks, y_blocks)))


def random_k(spec: GroupSpec, rng: np.random.Generator) -> GroupElement:
    """haar-random element of K = product of SO(n_i)"""
    return GroupElement(spec, tuple(random_rotations(n, 1, rng)[0] for n in spec.factors))


def random_rotations(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """stack of haar-random SO(n) matrices via QR of gaussian matrices"""
    q, r = np.linalg.qr(rng.standard_normal((count, n, n)))
    signs = np.sign(np.diagonal(r, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    q = q * signs[:, None, :]
    flip = np.linalg.det(q) < 0
    q[flip, :, 0] *= -1.0
    return q


def random_unimodular(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """stack of gaussian matrices renormalized to determinant one"""
    m = rng.standard_normal((count, n, n))
    det = np.linalg.det(m)
    m[det < 0, 0, :] *= -1.0
    det = np.abs(det)
    return m / det[:, None, None] ** (1.0 / n)


def random_element(spec: GroupSpec, rng: np.random.Generator) -> GroupElement:
    """gaussian element renormalized to det 1 in every block"""
    return GroupElement(spec, tuple(random_unimodular(n, 1, rng)[0] for n in spec.factors))


def signed_permutations(n: int) -> List[np.ndarray]:
    """signed permutation matrices of determinant one (they normalize A inside K)"""
    out = []
    for perm in itertools.permutations(range(n)):
        base = np.eye(n)[list(perm)]
        for signs in itertools.product((1.0, -1.0), repeat=n):
            w = base * np.array(signs)[:, None]
            if np.linalg.det(w) > 0:
                out.append(w)
    return out


def sign_matrices(n: int) -> List[np.ndarray]:
    """the centralizer M of A in SO(n): diagonal sign matrices with det 1"""
    return [
        np.diag(signs)
        for signs in itertools.product((1.0, -1.0), repeat=n)
        if np.prod(signs) > 0
    ]


def m_group(spec: GroupSpec) -> List[GroupElement]:
    """every element of M for a product group"""
    per_block = [sign_matrices(n) for n in spec.factors]
    return [GroupElement(spec, combo) for combo in itertools.product(*per_block)]
