"""Concrete Hadamard spaces: exact distances, geodesics and the CAT(0) check.

Four model spaces are provided:

* ``Euclidean(dim)``   -- points are float arrays of shape ``(dim,)``.
* ``Hyperboloid(dim)`` -- upper sheet of the hyperboloid in Minkowski space,
  points are float arrays of shape ``(dim + 1,)`` with ``<x, x>_M = -1``.
* ``Spider(legs)``     -- ``legs`` half-lines glued at a common origin (an
  R-tree); points are :class:`SpiderPoint` ``(leg, radius)`` with legs numbered
  ``1..legs`` and the origin stored as ``(0, 0.0)``.
* ``Product(spaces)``  -- l2 product; points are tuples of component points.

Space objects carry the fast, unchecked primitives (``dist``, ``geodesic``)
used inside the iteration loops.  The module-level functions
:func:`distance`, :func:`geodesic`, :func:`cn_residual` and
:func:`random_point` validate their arguments first.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, InvalidPointError, TagMismatchError

TOL = 1e-9

# -<x,y>_M below this uses the half-chord formula; arcosh is ill-conditioned near 1
_ACOSH_SWITCH = 2.0


class SpiderPoint(NamedTuple):
    leg: int
    radius: float


SPIDER_ORIGIN = SpiderPoint(0, 0.0)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


class Space:
    """Base class of the model spaces."""

    family: str = ""

    def dist(self, x, y) -> float:
        raise NotImplementedError

    def geodesic(self, x, y, t: float):
        raise NotImplementedError

    def validate(self, x):
        """Return ``x`` in canonical form or raise."""
        raise NotImplementedError

    def base_point(self):
        raise NotImplementedError

    def random_point(self, rng: np.random.Generator, scale: float):
        raise NotImplementedError

    def equal(self, x, y, tol: float = TOL) -> bool:
        return self.dist(x, y) <= tol

    def encode(self, x) -> str:
        raise NotImplementedError

    def decode(self, text: str):
        raise NotImplementedError

    def stack(self, points: Sequence) -> Any:
        """Batch representation consumed by :meth:`dists_many`."""
        return list(points)

    def dists_many(self, x, stacked) -> np.ndarray:
        return np.array([self.dist(x, q) for q in stacked], dtype=float)

    def sq_dists_many(self, x, stacked) -> np.ndarray:
        d = self.dists_many(x, stacked)
        return d * d

    def field_count(self) -> int:
        """Number of comma separated fields in the text encoding."""
        raise NotImplementedError


@dataclass(frozen=True)
class Euclidean(Space):
    dim: int
    family = "euclidean"

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise DomainError(f"euclidean dimension must be a positive integer, got {self.dim!r}")

    def __str__(self):
        return f"euclidean({self.dim})"

    def dist(self, x, y) -> float:
        d = x - y
        return math.sqrt(float(d @ d))

    def geodesic(self, x, y, t: float):
        if t == 1.0:
            return y.copy()
        return x + t * (y - x)

    def validate(self, x):
        if isinstance(x, (SpiderPoint, tuple)):
            raise TagMismatchError(f"{type(x).__name__} is not a point of {self}")
        arr = np.asarray(x, dtype=float)
        if arr.shape != (self.dim,):
            raise TagMismatchError(f"expected shape ({self.dim},) for {self}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidPointError("non-finite coordinate")
        return arr

    def base_point(self):
        return np.zeros(self.dim)

    def random_point(self, rng, scale):
        u = rng.standard_normal(self.dim)
        u /= np.linalg.norm(u)
        r = scale * rng.random() ** (1.0 / self.dim)
        return r * u

    def encode(self, x) -> str:
        return ",".join(_fmt(v) for v in x)

    def decode(self, text: str):
        return self.validate([float(v) for v in text.split(",")])

    def field_count(self) -> int:
        return self.dim

    def stack(self, points):
        return np.array([np.asarray(p, dtype=float) for p in points])

    def dists_many(self, x, stacked):
        return np.sqrt(self.sq_dists_many(x, stacked))

    def sq_dists_many(self, x, stacked):
        d = stacked - x
        return np.einsum("ij,ij->i", d, d)

    # tangent-space helpers (flat case)
    def log(self, x, y):
        return y - x

    def exp(self, x, v):
        return x + v

    def tangent_norm(self, x, v) -> float:
        return math.sqrt(float(v @ v))


def minkowski(x, y) -> float:
    """Lorentzian inner product ``-x0*y0 + sum_i xi*yi``."""
    return float(x[1:] @ y[1:]) - float(x[0] * y[0])


@dataclass(frozen=True)
class Hyperboloid(Space):
    dim: int
    family = "hyperboloid"

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise DomainError(f"hyperboloid dimension must be a positive integer, got {self.dim!r}")

    def __str__(self):
        return f"hyperboloid({self.dim})"

    def dist(self, x, y) -> float:
        c = -minkowski(x, y)
        if c >= _ACOSH_SWITCH:
            return math.acosh(c)
        # chord: <x-y, x-y>_M = 4 sinh^2(d/2)
        q = max(minkowski(x - y, x - y), 0.0)
        return 2.0 * math.asinh(0.5 * math.sqrt(q))

    def geodesic(self, x, y, t: float):
        if t == 0.0:
            return x.copy()
        if t == 1.0:
            return y.copy()
        d = self.dist(x, y)
        if d < 1e-15:
            g = x + t * (y - x)
        else:
            s = math.sinh(d)
            g = (math.sinh((1.0 - t) * d) / s) * x + (math.sinh(t * d) / s) * y
        return _to_sheet(g)

    def validate(self, x):
        if isinstance(x, (SpiderPoint, tuple)):
            raise TagMismatchError(f"{type(x).__name__} is not a point of {self}")
        arr = np.asarray(x, dtype=float)
        if arr.shape != (self.dim + 1,):
            raise TagMismatchError(f"expected shape ({self.dim + 1},) for {self}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidPointError("non-finite coordinate")
        if arr[0] < 1.0 or abs(minkowski(arr, arr) + 1.0) > TOL:
            raise InvalidPointError(f"point is not on the upper sheet: <x,x>_M = {minkowski(arr, arr)!r}")
        return arr

    def base_point(self):
        p = np.zeros(self.dim + 1)
        p[0] = 1.0
        return p

    def random_point(self, rng, scale):
        u = rng.standard_normal(self.dim)
        u /= np.linalg.norm(u)
        r = scale * rng.random() ** (1.0 / self.dim)
        spatial = math.sinh(r) * u
        return np.concatenate(([math.sqrt(1.0 + float(spatial @ spatial))], spatial))

    def encode(self, x) -> str:
        return ",".join(_fmt(v) for v in x)

    def decode(self, text: str):
        return self.validate([float(v) for v in text.split(",")])

    def field_count(self) -> int:
        return self.dim + 1

    def stack(self, points):
        return np.array([np.asarray(p, dtype=float) for p in points])

    def dists_many(self, x, stacked):
        c = stacked[:, 0] * x[0] - stacked[:, 1:] @ x[1:]
        diff = stacked - x
        q = np.maximum(np.einsum("ij,ij->i", diff[:, 1:], diff[:, 1:]) - diff[:, 0] ** 2, 0.0)
        near = 2.0 * np.arcsinh(0.5 * np.sqrt(q))
        far = np.arccosh(np.maximum(c, 1.0))
        return np.where(c >= _ACOSH_SWITCH, far, near)

    def log(self, x, y):
        """Tangent vector at ``x`` pointing to ``y`` with length ``d(x, y)``."""
        ip = minkowski(x, y)
        u = y + ip * x
        n = math.sqrt(max(minkowski(u, u), 0.0))
        if n < 1e-300:
            return np.zeros_like(x)
        return (self.dist(x, y) / n) * u

    def exp(self, x, v):
        n = math.sqrt(max(minkowski(v, v), 0.0))
        if n < 1e-300:
            return x.copy()
        return _to_sheet(math.cosh(n) * x + (math.sinh(n) / n) * v)

    def tangent_norm(self, x, v) -> float:
        return math.sqrt(max(minkowski(v, v), 0.0))


def _to_sheet(g):
    """Renormalise onto the upper sheet to remove floating drift."""
    return g / math.sqrt(-minkowski(g, g))


@dataclass(frozen=True)
class Spider(Space):
    legs: int
    family = "spider"

    def __post_init__(self):
        if not isinstance(self.legs, (int, np.integer)) or self.legs < 1:
            raise DomainError(f"spider needs at least one leg, got {self.legs!r}")

    def __str__(self):
        return f"spider({self.legs})"

    def dist(self, x, y) -> float:
        if x[0] == y[0] or x[0] == 0 or y[0] == 0:
            return abs(x[1] - y[1])
        return x[1] + y[1]

    def geodesic(self, x, y, t: float):
        if t == 0.0:
            return x
        if t == 1.0:
            return y
        (i, r), (j, s) = x, y
        if i == j or i == 0 or j == 0:
            leg = i or j
            rad = r + t * (s - r)
        else:
            travel = t * (r + s)
            if travel <= r:
                leg, rad = i, r - travel
            else:
                leg, rad = j, travel - r
        if rad <= 0.0:
            return SPIDER_ORIGIN
        return SpiderPoint(leg, rad)

    def validate(self, x):
        if isinstance(x, np.ndarray) or not isinstance(x, (tuple, list)) or len(x) != 2:
            raise TagMismatchError(f"{x!r} is not a point of {self}")
        leg, rad = x
        if isinstance(leg, (tuple, list, np.ndarray)) or isinstance(rad, (tuple, list, np.ndarray)):
            raise TagMismatchError(f"{x!r} is not a point of {self}")
        if int(leg) != leg:
            raise InvalidPointError(f"leg index must be an integer, got {leg!r}")
        leg, rad = int(leg), float(rad)
        if not math.isfinite(rad) or rad < 0.0:
            raise InvalidPointError(f"spider radius must be finite and nonnegative, got {rad!r}")
        if rad == 0.0:
            return SPIDER_ORIGIN
        if not 1 <= leg <= self.legs:
            raise InvalidPointError(f"leg {leg} outside 1..{self.legs}")
        return SpiderPoint(leg, rad)

    def base_point(self):
        return SPIDER_ORIGIN

    def random_point(self, rng, scale):
        leg = int(rng.integers(1, self.legs + 1))
        rad = scale * float(rng.random())
        return SPIDER_ORIGIN if rad == 0.0 else SpiderPoint(leg, rad)

    def equal(self, x, y, tol=TOL):
        if x[1] <= tol and y[1] <= tol:
            return True
        return x[0] == y[0] and abs(x[1] - y[1]) <= tol

    def encode(self, x) -> str:
        return f"{int(x[0])},{_fmt(x[1])}"

    def decode(self, text: str):
        leg, rad = text.split(",")
        return self.validate((int(leg), float(rad)))

    def field_count(self) -> int:
        return 2


@dataclass(frozen=True)
class Product(Space):
    components: tuple
    family = "product"

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) < 2:
            raise DomainError("a product space needs at least two components")
        for c in comps:
            if not isinstance(c, Space):
                raise DomainError(f"product component {c!r} is not a space")
            if isinstance(c, Product):
                raise DomainError("nested products are not supported; flatten the component list")

    def __str__(self):
        return "product(" + ",".join(str(c) for c in self.components) + ")"

    def dist(self, x, y) -> float:
        return math.sqrt(sum(c.dist(a, b) ** 2 for c, a, b in zip(self.components, x, y)))

    def geodesic(self, x, y, t: float):
        return tuple(c.geodesic(a, b, t) for c, a, b in zip(self.components, x, y))

    def validate(self, x):
        if not isinstance(x, (tuple, list)) or isinstance(x, SpiderPoint) or len(x) != len(self.components):
            raise TagMismatchError(f"expected a {len(self.components)}-tuple for {self}")
        return tuple(c.validate(v) for c, v in zip(self.components, x))

    def base_point(self):
        return tuple(c.base_point() for c in self.components)

    def random_point(self, rng, scale):
        s = scale / math.sqrt(len(self.components))
        return tuple(c.random_point(rng, s) for c in self.components)

    def equal(self, x, y, tol=TOL):
        return all(c.equal(a, b, tol) for c, a, b in zip(self.components, x, y))

    def encode(self, x) -> str:
        return ";".join(c.encode(v) for c, v in zip(self.components, x))

    def decode(self, text: str):
        parts = text.split(";")
        if len(parts) != len(self.components):
            raise TagMismatchError(f"expected {len(self.components)} ';'-separated components, got {len(parts)}")
        return tuple(c.decode(p) for c, p in zip(self.components, parts))

    def field_count(self) -> int:
        return sum(c.field_count() for c in self.components)


# ---------------------------------------------------------------------------
# descriptor text form: euclidean(5), hyperboloid(2), spider(3),
# product(euclidean(2),spider(3))

_SIMPLE = {"euclidean": Euclidean, "hyperboloid": Hyperboloid, "spider": Spider}


def parse_space(text: str) -> Space:
    s = text.strip().lower().replace(" ", "")
    m = re.fullmatch(r"(euclidean|hyperboloid|spider)\((\d+)\)", s)
    if m:
        return _SIMPLE[m.group(1)](int(m.group(2)))
    m = re.fullmatch(r"product\((.*)\)", s)
    if m:
        parts = re.findall(r"[a-z]+\(\d+\)", m.group(1))
        if ",".join(parts) != m.group(1):
            raise DomainError(f"cannot parse product descriptor {text!r}")
        return Product(tuple(parse_space(p) for p in parts))
    raise DomainError(f"unknown space descriptor {text!r}")


# ---------------------------------------------------------------------------
# validated operations


def _check_t(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"geodesic parameter must lie in [0, 1], got {t}")
    return t


def distance(space: Space, x, y) -> float:
    return space.dist(space.validate(x), space.validate(y))


def geodesic(space: Space, x, y, t: float):
    """Point at fraction ``t`` of the way from ``x`` to ``y``."""
    t = _check_t(t)
    return space.geodesic(space.validate(x), space.validate(y), t)


def cn_residual(space: Space, x, a, b, t: float) -> float:
    """Slack in the CAT(0) comparison inequality along the geodesic from ``a`` to ``b``.

    Nonnegative (up to rounding) in every Hadamard space, zero in Euclidean space.
    """
    t = _check_t(t)
    x, a, b = space.validate(x), space.validate(a), space.validate(b)
    if t == 0.0:
        return 0.0
    m = space.geodesic(a, b, t)
    d = space.dist
    return (1 - t) * d(a, x) ** 2 + t * d(b, x) ** 2 - t * (1 - t) * d(a, b) ** 2 - d(m, x) ** 2


def random_point(space: Space, rng: np.random.Generator, scale: float = 1.0):
    """Random point within distance ``scale`` of the space's base point."""
    if not scale > 0:
        raise DomainError(f"scale must be positive, got {scale}")
    return space.random_point(rng, float(scale))


def points_equal(space: Space, x, y, tol: float = TOL) -> bool:
    return space.equal(space.validate(x), space.validate(y), tol)


# ---------------------------------------------------------------------------
# text ingestion


def encode_point(space: Space, x) -> str:
    return space.encode(space.validate(x))


def decode_point(space: Space, text: str):
    return space.decode(text.strip())


def parse_weighted_point(space: Space, line: str):
    """Parse one anchor line; a single extra trailing field is read as the weight."""
    text = line.strip()
    n_fields = len(re.split(r"[,;]", text))
    weight = 1.0
    if n_fields == space.field_count() + 1:
        text, w = text.rsplit(",", 1)
        weight = float(w)
    elif n_fields != space.field_count():
        raise TagMismatchError(f"line {line!r} has {n_fields} fields, expected {space.field_count()} for {space}")
    return decode_point(space, text), weight


def read_points(space: Space, path) -> tuple[list, list[float]]:
    """Read a point file: one point per line, optional trailing weight, '#' comments."""
    points, weights = [], []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            p, w = parse_weighted_point(space, line)
            points.append(p)
            weights.append(w)
    return points, weights


def write_points(space: Space, path, points, weights=None) -> None:
    with open(path, "w") as fh:
        for i, p in enumerate(points):
            line = encode_point(space, p)
            if weights is not None:
                line += "," + _fmt(weights[i])
            fh.write(line + "\n")
