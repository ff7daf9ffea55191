"""Random streams, elementary samplers and Z^d geometry shared by every simulator.

Sites are plain tuples of ints. Neighbor order is fixed as
``(+e_1, -e_1, +e_2, -e_2, ...)``; direction index ``j`` means coordinate
``j // 2`` with sign ``+1`` if ``j`` is even and ``-1`` otherwise. All
tie-breaking downstream inherits this order.

Randomness is keyed: a :class:`SeededStream` is identified by
``(master_seed, label)`` and backed by a Philox counter-based generator whose
key is a hash of that pair, so per-particle or per-block streams can be
created lazily and independently.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np

Site = tuple

SUPPORTED_DIMS = (1, 2, 3)


def origin(d: int) -> Site:
    return (0,) * d


def unit_vectors(d: int) -> list[Site]:
    """The 2d neighbors of the origin, in the canonical direction order."""
    out = []
    for i in range(d):
        for sgn in (1, -1):
            v = [0] * d
            v[i] = sgn
            out.append(tuple(v))
    return out


def neighbors(x: Site) -> list[Site]:
    """Sites at L1 distance one from ``x``: ``x+e_1, x-e_1, x+e_2, ...``."""
    return [tuple(a + b for a, b in zip(x, z)) for z in unit_vectors(len(x))]


def add(x: Site, z: Site) -> Site:
    return tuple(a + b for a, b in zip(x, z))


def l1(x: Site) -> int:
    return sum(abs(a) for a in x)


def direction(j: int, d: int) -> Site:
    v = [0] * d
    v[j // 2] = 1 if j % 2 == 0 else -1
    return tuple(v)


def _check_dim(d: int) -> None:
    if d not in SUPPORTED_DIMS:
        raise ValueError(f"dimension must be one of {SUPPORTED_DIMS}, got {d}")


# ---------------------------------------------------------------------------
# Streams
# ---------------------------------------------------------------------------


def _philox_key(master_seed: int, label: str) -> int:
    h = hashlib.blake2b(f"{int(master_seed)}\x1f{label}".encode(), digest_size=16)
    return int.from_bytes(h.digest(), "little")


class SeededStream:
    """Reproducible random source named by ``(master_seed, label)``.

    The same pair always yields the same draw sequence; different labels give
    independent Philox keys.
    """

    __slots__ = ("master_seed", "label", "rng")

    def __init__(self, master_seed: int, label: str = ""):
        if not 0 <= int(master_seed) < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        self.master_seed = int(master_seed)
        self.label = label
        self.rng = np.random.Generator(np.random.Philox(key=_philox_key(master_seed, label)))

    def child(self, sublabel: str) -> "SeededStream":
        sep = "/" if self.label else ""
        return SeededStream(self.master_seed, f"{self.label}{sep}{sublabel}")

    def __repr__(self) -> str:
        return f"SeededStream({self.master_seed}, {self.label!r})"


StreamLike = Union[SeededStream, np.random.Generator]


def as_generator(s: StreamLike) -> np.random.Generator:
    if isinstance(s, SeededStream):
        return s.rng
    if isinstance(s, np.random.Generator):
        return s
    if isinstance(s, UniformBuffer):
        return s.rng
    raise TypeError(f"expected SeededStream or numpy Generator, got {type(s).__name__}")


class UniformBuffer:
    """Scalar draws for Python event loops, served from chunked uniforms.

    Scalar calls on a numpy Generator cost about a microsecond each; this
    pulls 4096 uniforms at a time from the wrapped generator instead.
    """

    __slots__ = ("rng", "_buf", "_i")

    CHUNK = 4096

    def __init__(self, s: StreamLike):
        self.rng = as_generator(s)
        self._buf = self.rng.random(self.CHUNK)
        self._i = 0

    def random(self) -> float:
        i = self._i
        if i == self.CHUNK:
            self._buf = self.rng.random(self.CHUNK)
            i = 0
        self._i = i + 1
        return float(self._buf[i])

    def exponential(self, rate: float) -> float:
        return -math.log(1.0 - self.random()) / rate

    def below(self, n: int) -> int:
        """Uniform integer in ``range(n)``."""
        k = int(self.random() * n)
        return k if k < n else n - 1


def as_buffer(s) -> UniformBuffer:
    return s if isinstance(s, UniformBuffer) else UniformBuffer(s)


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def sample_exponential(s: StreamLike, rate: float, size=None):
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    return as_generator(s).exponential(1.0 / rate, size)


def sample_poisson_points(s: StreamLike, rate: float, T: float) -> np.ndarray:
    """Event times of a rate-``rate`` Poisson process on ``[0, T]``, sorted."""
    if T < 0:
        raise ValueError("window length must be nonnegative")
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    rng = as_generator(s)
    n = rng.poisson(rate * T) if T > 0 and rate > 0 else 0
    return np.sort(rng.uniform(0.0, T, n))


def sample_uniform_neighbor(s: StreamLike, d: int) -> Site:
    _check_dim(d)
    return direction(int(as_generator(s).integers(0, 2 * d)), d)


def _short_float(v: float) -> str:
    # shortest text that parses back to the same float; "1" rather than "1.0"
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


@dataclass(frozen=True)
class DistributionSpec:
    """A positive random variable: deterministic, exponential, Pareto or two-point.

    Build with the classmethods or :meth:`parse` (``"det:1"``, ``"exp:1"``,
    ``"pareto:0.5,1"``, ``"two_point:1,0.3,4"``).
    """

    kind: str
    params: tuple

    KINDS = ("deterministic", "exponential", "pareto", "two_point")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        expected = {"deterministic": 1, "exponential": 1, "pareto": 2, "two_point": 3}[self.kind]
        if len(p) != expected:
            raise ValueError(f"{self.kind} takes {expected} parameters, got {len(p)}")
        if not all(math.isfinite(v) and v > 0 for v in p):
            raise ValueError(f"{self.kind} parameters must be positive and finite: {p}")
        if self.kind == "two_point" and not p[1] < 1:
            raise ValueError("two_point probability must lie in (0, 1)")

    @classmethod
    def deterministic(cls, a: float) -> "DistributionSpec":
        return cls("deterministic", (a,))

    @classmethod
    def exponential(cls, rate: float) -> "DistributionSpec":
        return cls("exponential", (rate,))

    @classmethod
    def pareto(cls, shape: float, scale: float = 1.0) -> "DistributionSpec":
        return cls("pareto", (shape, scale))

    @classmethod
    def two_point(cls, v1: float, p: float, v2: float) -> "DistributionSpec":
        return cls("two_point", (v1, p, v2))

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        aliases = {"det": "deterministic", "exp": "exponential", "pareto": "pareto",
                   "two_point": "two_point", "twopoint": "two_point"}
        name, _, args = text.strip().partition(":")
        kind = aliases.get(name.strip().lower(), name.strip().lower())
        try:
            params = tuple(float(a) for a in args.split(",")) if args else ()
        except ValueError as exc:
            raise ValueError(f"cannot parse distribution {text!r}") from exc
        return cls(kind, params)

    def __str__(self) -> str:
        short = {"deterministic": "det", "exponential": "exp"}.get(self.kind, self.kind)
        return f"{short}:" + ",".join(_short_float(v) for v in self.params)

    @property
    def mean(self) -> float:
        p = self.params
        if self.kind == "deterministic":
            return p[0]
        if self.kind == "exponential":
            return 1.0 / p[0]
        if self.kind == "pareto":
            a, c = p
            return math.inf if a <= 1 else a * c / (a - 1)
        v1, q, v2 = p
        return q * v1 + (1 - q) * v2

    @property
    def finite_second_moment(self) -> bool:
        return self.kind != "pareto" or self.params[0] > 2

    def sample(self, s: StreamLike, size=None):
        rng = as_generator(s)
        p = self.params
        if self.kind == "deterministic":
            return p[0] if size is None else np.full(size, p[0])
        if self.kind == "exponential":
            return rng.exponential(1.0 / p[0], size)
        if self.kind == "pareto":
            a, c = p
            # 1 - U lies in (0, 1]; tiny shapes can overflow, so clip to the float range
            with np.errstate(over="ignore"):
                x = c * (1.0 - rng.random(size)) ** (-1.0 / a)
            return np.minimum(x, np.finfo(float).max) if size is not None else min(float(x), np.finfo(float).max)
        v1, q, v2 = p
        u = rng.random(size)
        return np.where(u < q, v1, v2) if size is not None else (v1 if u < q else v2)


def sample_distribution(spec: DistributionSpec, s: StreamLike) -> float:
    return float(spec.sample(s))


# ---------------------------------------------------------------------------
# Estimates and replication
# ---------------------------------------------------------------------------


@dataclass
class EstimateReport:
    """Monte Carlo mean with its standard error ``sd / sqrt(n_reps)``."""

    n_reps: int
    mean: float
    std_error: float
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, samples, **extra) -> "EstimateReport":
        x = np.asarray(samples, dtype=float).ravel()
        n = x.size
        if n < 2:
            raise ValueError("an estimate needs at least two replications")
        return cls(n, float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)), dict(extra))

    @property
    def variance(self) -> float:
        """Sample variance of the underlying replications."""
        return self.std_error**2 * self.n_reps

    def ci(self, z: float = 3.0) -> tuple[float, float]:
        return self.mean - z * self.std_error, self.mean + z * self.std_error

    @staticmethod
    def merge(reports: Sequence["EstimateReport"]) -> "EstimateReport":
        """Pool reports over disjoint replications (order-fixed pairwise merge)."""
        if not reports:
            raise ValueError("nothing to merge")
        n, mean, m2 = 0, 0.0, 0.0
        for r in reports:
            rm2 = r.variance * (r.n_reps - 1)
            tot = n + r.n_reps
            delta = r.mean - mean
            mean += delta * r.n_reps / tot
            m2 += rm2 + delta**2 * n * r.n_reps / tot
            n = tot
        extra = dict(reports[0].extra)
        return EstimateReport(n, mean, math.sqrt(m2 / (n - 1) / n), extra)


def ratio_of_means(x, y) -> tuple[float, float]:
    """``mean(x) / mean(y)`` with a delta-method standard error (paired samples)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    mx, my = x.mean(), y.mean()
    r = mx / my
    c = np.cov(x, y, ddof=1)
    var = (c[0, 0] - 2 * r * c[0, 1] + r * r * c[1, 1]) / (my * my * n)
    return float(r), float(math.sqrt(max(var, 0.0)))


def _run_block(args):
    fn, master_seed, label, j, count, kwargs = args
    stream = SeededStream(master_seed, f"{label}/block/{j}")
    return fn(stream.rng, count, **kwargs)


def replicate(fn: Callable, n_reps: int, s: SeededStream, *, block: int = 4096,
              workers: int = 1, **kwargs) -> np.ndarray:
    """Run ``fn(rng, count, **kwargs)`` over fixed-size replication blocks.

    Block ``j`` always draws from ``s.child(f"block/{j}")`` and results are
    concatenated in block order, so the worker count changes wall time only.
    ``fn`` must return an array whose first axis has length ``count``.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be positive")
    sizes = [min(block, n_reps - k) for k in range(0, n_reps, block)]
    jobs = [(fn, s.master_seed, s.label, j, c, kwargs) for j, c in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    else:
        parts = [_run_block(job) for job in jobs]
    return np.concatenate([np.asarray(p) for p in parts], axis=0)


def warn_once(message: str, category=RuntimeWarning) -> None:
    warnings.warn(message, category, stacklevel=3)


def linear_slope(x: Iterable[float], per_path: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of path-wise curves against ``x``, averaged over paths.

    ``per_path`` has shape ``(n_paths, len(x))``. The slope is linear in the
    data, so it is computed per path and its standard error is exact even
    though the points along one path are correlated.
    """
    x = np.asarray(list(x), dtype=float)
    w = (x - x.mean()) / np.sum((x - x.mean()) ** 2)
    slopes = np.asarray(per_path, dtype=float) @ w
    return float(slopes.mean()), float(slopes.std(ddof=1) / math.sqrt(slopes.size))
