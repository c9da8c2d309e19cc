"""Continuum configurations on Z x R: boxes, deaths/bridges, clusters.

A configuration lives in a box ``[a, b] x [s, t]`` of integer time-lines.
Deaths cut time-lines; a bridge at time ``u`` on pair ``x`` joins ``(x, u)``
to ``(x+1, u)``.  Clusters are computed on the graph of maximal death-free
line segments joined by bridges, which carries the same connectivity as the
planar picture because nothing changes between event times.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

SIDE_BCS = ("free", "wired")


class Point(NamedTuple):
    """A point ``(line, time)``.

    ``side`` selects the segment just above (+1) or below (-1) when ``time``
    coincides with a cut, e.g. ``Point(x, 0.0, +1)`` is the slit vertex x+.
    """

    line: int
    time: float
    side: int = 0


class Interval(NamedTuple):
    """The closed piece ``{line} x [lo, hi]`` of a time-line."""

    line: int
    lo: float
    hi: float


def slit_vertex(x: int, sign: int) -> Point:
    return Point(x, 0.0, 1 if sign > 0 else -1)


@dataclass(frozen=True)
class BoxSpec:
    """Space-time box ``[a, b] x [s, t]``.

    ``slit`` = L cuts lines ``0..L`` at time 0 into upper and lower halves.
    ``side_bc='wired'`` joins everything touching lines ``a`` and ``b``.
    """

    lines: tuple[int, int]
    time: tuple[float, float]
    periodic_tb: bool = False
    side_bc: str = "free"
    slit: int | None = None

    def __post_init__(self):
        a, b = (int(v) for v in self.lines)
        s, t = (float(v) for v in self.time)
        object.__setattr__(self, "lines", (a, b))
        object.__setattr__(self, "time", (s, t))
        if a > b:
            raise ValueError("need a <= b")
        if not s < t:
            raise ValueError("need s < t")
        if self.side_bc not in SIDE_BCS:
            raise ValueError(f"side_bc must be one of {SIDE_BCS}")
        if self.slit is not None:
            if not (a <= 0 <= self.slit <= b and self.slit >= 0):
                raise ValueError("slit [0, L] must lie inside the box")
            if not s < 0 < t:
                raise ValueError("slit at time 0 must lie inside the time interval")

    @classmethod
    def slit_box(cls, m: int, L: int, beta: float, periodic_tb: bool = True, **kw) -> "BoxSpec":
        """``[-m, m+L] x [-beta/2, beta/2]`` with a slit along ``[0, L]``."""
        return cls((-m, m + L), (-beta / 2, beta / 2), periodic_tb=periodic_tb, slit=L, **kw)

    @classmethod
    def chain_box(cls, m: int, L: int, beta: float, periodic_tb: bool = True, **kw) -> "BoxSpec":
        return cls((-m, m + L), (-beta / 2, beta / 2), periodic_tb=periodic_tb, **kw)

    @classmethod
    def square(cls, m: int, **kw) -> "BoxSpec":
        """``[-m, m]^2``."""
        return cls((-m, m), (-float(m), float(m)), **kw)

    @property
    def width(self) -> int:
        return self.lines[1] - self.lines[0] + 1

    @property
    def height(self) -> float:
        return self.time[1] - self.time[0]

    def index(self, x: int) -> int:
        if not self.lines[0] <= x <= self.lines[1]:
            raise ValueError(f"line {x} outside box {self.lines}")
        return x - self.lines[0]

    def is_slit_line(self, x: int) -> bool:
        return self.slit is not None and 0 <= x <= self.slit

    @property
    def slit_sites(self) -> range:
        return range(0, (self.slit if self.slit is not None else -1) + 1)

    def header(self) -> str:
        slit = "none" if self.slit is None else str(self.slit)
        return (
            f"box a={self.lines[0]} b={self.lines[1]} s={self.time[0]!r} t={self.time[1]!r} "
            f"periodic_tb={int(self.periodic_tb)} side_bc={self.side_bc} slit={slit}"
        )

    @classmethod
    def from_header(cls, line: str) -> "BoxSpec":
        fields = dict(tok.split("=", 1) for tok in line.split()[1:])
        slit = None if fields["slit"] == "none" else int(fields["slit"])
        return cls(
            (int(fields["a"]), int(fields["b"])),
            (float(fields["s"]), float(fields["t"])),
            periodic_tb=bool(int(fields["periodic_tb"])),
            side_bc=fields["side_bc"],
            slit=slit,
        )


def _frozen(arr) -> np.ndarray:
    a = np.array(arr, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RcConfig:
    """Deaths per line and bridges per adjacent pair, as sorted time arrays.

    ``deaths[i]`` belongs to line ``a + i``; ``bridges[i]`` to the pair
    ``(a + i, a + i + 1)``.
    """

    deaths: tuple[np.ndarray, ...]
    bridges: tuple[np.ndarray, ...]

    @classmethod
    def empty(cls, box: BoxSpec) -> "RcConfig":
        return cls(
            tuple(_frozen([]) for _ in range(box.width)),
            tuple(_frozen([]) for _ in range(box.width - 1)),
        )

    @classmethod
    def from_arrays(
        cls,
        box: BoxSpec,
        deaths: Sequence[Iterable[float]],
        bridges: Sequence[Iterable[float]],
        check: bool = True,
    ) -> "RcConfig":
        cfg = cls(
            tuple(_frozen(np.sort(np.fromiter(d, float))) for d in deaths),
            tuple(_frozen(np.sort(np.fromiter(b, float))) for b in bridges),
        )
        if check:
            cfg.validate(box)
        return cfg

    @classmethod
    def from_events(
        cls,
        box: BoxSpec,
        deaths: Iterable[tuple[int, float]] = (),
        bridges: Iterable[tuple[int, float]] = (),
    ) -> "RcConfig":
        """Build from ``(line, time)`` deaths and ``(lower line, time)`` bridges."""
        d = [[] for _ in range(box.width)]
        br = [[] for _ in range(box.width - 1)]
        for x, u in deaths:
            d[box.index(x)].append(u)
        for x, u in bridges:
            i = box.index(x)
            if i >= box.width - 1:
                raise ValueError(f"no line to the right of {x}")
            br[i].append(u)
        return cls.from_arrays(box, d, br)

    def validate(self, box: BoxSpec) -> None:
        if len(self.deaths) != box.width or len(self.bridges) != max(box.width - 1, 0):
            raise ValueError("configuration shape does not match box")
        s, t = box.time
        all_times = [np.asarray(x) for x in self.deaths + self.bridges]
        if box.slit is not None:
            all_times.append(np.zeros(1))
        flat = np.concatenate(all_times) if all_times else np.zeros(0)
        for arr in self.deaths + self.bridges:
            if arr.size and (arr[0] <= s or arr[-1] >= t):
                raise ValueError("event time outside the open time interval")
        if np.unique(flat).size != flat.size:
            raise ValueError("event times must be distinct (and differ from a slit at 0)")

    @property
    def n_deaths(self) -> int:
        return int(sum(d.size for d in self.deaths))

    @property
    def n_bridges(self) -> int:
        return int(sum(b.size for b in self.bridges))

    def events(self, box: BoxSpec) -> list[tuple[str, int, float]]:
        a = box.lines[0]
        out = [("D", a + i, float(u)) for i, d in enumerate(self.deaths) for u in d]
        out += [("B", a + i, float(u)) for i, b in enumerate(self.bridges) for u in b]
        return out

    def with_death(self, box: BoxSpec, x: int, u: float) -> "RcConfig":
        i = box.index(x)
        deaths = list(self.deaths)
        deaths[i] = np.append(deaths[i], u)
        return RcConfig.from_arrays(box, deaths, self.bridges)

    def with_bridge(self, box: BoxSpec, x: int, u: float) -> "RcConfig":
        i = box.index(x)
        bridges = list(self.bridges)
        bridges[i] = np.append(bridges[i], u)
        return RcConfig.from_arrays(box, self.deaths, bridges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RcConfig):
            return NotImplemented
        return (
            len(self.deaths) == len(other.deaths)
            and all(np.array_equal(p, q) for p, q in zip(self.deaths, other.deaths))
            and all(np.array_equal(p, q) for p, q in zip(self.bridges, other.bridges))
        )


class ClusterLabeling:
    """Death-free segments of every line, with a cluster label per segment.

    Segment ``k`` of a line lies between its ``k-1``-th and ``k``-th cut
    (cuts are deaths, plus time 0 on slit lines).  Under the periodic
    top/bottom condition the first and last segment coincide.
    """

    def __init__(self, box: BoxSpec, cuts: list[np.ndarray], labels: np.ndarray, n_clusters: int):
        self.box = box
        self.cuts = cuts
        counts = [self._n_line_segments(c) for c in cuts]
        self.offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.labels = labels
        self.n_clusters = n_clusters

    def _n_line_segments(self, c: np.ndarray) -> int:
        return c.size if (self.box.periodic_tb and c.size) else c.size + 1

    @property
    def n_segments(self) -> int:
        return int(self.offsets[-1])

    def _canon(self, i: int, k):
        c = self.cuts[i]
        if self.box.periodic_tb and c.size:
            k = np.where(k == c.size, 0, k)
        return self.offsets[i] + k

    def segment(self, p: Point | tuple) -> int:
        p = Point(*p)
        i = self.box.index(p.line)
        s, t = self.box.time
        if not s <= p.time <= t:
            raise ValueError(f"time {p.time} outside box {self.box.time}")
        c = self.cuts[i]
        k = int(np.searchsorted(c, p.time, side="right" if p.side > 0 else "left"))
        if p.side == 0 and k < c.size and c[k] == p.time:
            raise ValueError(f"point {p} lies on a cut; give side=+1 or -1")
        return int(self._canon(i, k))

    def label(self, p: Point | tuple) -> int:
        return int(self.labels[self.segment(p)])

    def segments_touching(self, iv: Interval | Point) -> np.ndarray:
        if isinstance(iv, Point) or len(iv) == 2:
            return np.array([self.segment(iv)])
        i = self.box.index(iv.line)
        c = self.cuts[i]
        s, t = self.box.time
        lo, hi = max(iv.lo, s), min(iv.hi, t)
        if lo > hi:
            return np.zeros(0, dtype=np.int64)
        k0 = int(np.searchsorted(c, lo, side="left"))
        k1 = int(np.searchsorted(c, hi, side="right"))
        return np.unique(self._canon(i, np.arange(k0, k1 + 1)))

    def labels_touching(self, items: Iterable[Interval | Point | tuple]) -> set[int]:
        out: set[int] = set()
        for it in items:
            it = _as_item(it)
            out.update(int(v) for v in self.labels[self.segments_touching(it)])
        return out

    def line_segments(self, x: int) -> np.ndarray:
        i = self.box.index(x)
        return np.arange(self.offsets[i], self.offsets[i + 1])


def _as_item(it) -> Interval | Point:
    if isinstance(it, (Point, Interval)):
        return it
    if len(it) == 2:
        return Point(*it)
    raise TypeError("use Point or Interval for 3-element items")


def _cuts(box: BoxSpec, config: RcConfig) -> list[np.ndarray]:
    a = box.lines[0]
    out = []
    for i, d in enumerate(config.deaths):
        if box.is_slit_line(a + i):
            d = np.sort(np.append(d, 0.0))
        out.append(np.asarray(d))
    return out


def _label(box: BoxSpec, config: RcConfig, merge: bool) -> ClusterLabeling:
    cuts = _cuts(box, config)
    lab = ClusterLabeling(box, cuts, np.zeros(0, dtype=np.int64), 0)
    n = lab.n_segments
    if not merge:
        lab.labels = np.arange(n)
        lab.n_clusters = n
        return lab
    us, vs = [np.zeros(0, dtype=np.int64)], [np.zeros(0, dtype=np.int64)]
    for j, br in enumerate(config.bridges):
        if br.size:
            us.append(lab._canon(j, np.searchsorted(cuts[j], br)))
            vs.append(lab._canon(j + 1, np.searchsorted(cuts[j + 1], br)))
    size = n
    if box.side_bc == "wired":
        ghost = n
        size = n + 1
        side = np.concatenate([lab.line_segments(box.lines[0]), lab.line_segments(box.lines[1])])
        us.append(side)
        vs.append(np.full(side.size, ghost))
    u = np.concatenate(us)
    v = np.concatenate(vs)
    g = coo_matrix((np.ones(u.size, dtype=np.int8), (u, v)), shape=(size, size))
    _, labels = connected_components(g, directed=False)
    labels = labels[:n]
    lab.labels = labels
    lab.n_clusters = int(np.unique(labels).size)
    return lab


def segments_of(box: BoxSpec, config: RcConfig) -> ClusterLabeling:
    """Per-line death-free segments, before any merging across bridges."""
    return _label(box, config, merge=False)


def label_clusters(box: BoxSpec, config: RcConfig) -> ClusterLabeling:
    return _label(box, config, merge=True)


def cluster_count(box: BoxSpec, config: RcConfig) -> int:
    """``k(omega)``: the number of clusters under the box's boundary conditions."""
    return label_clusters(box, config).n_clusters


def connected(box: BoxSpec, config: RcConfig, p, q, labeling: ClusterLabeling | None = None) -> bool:
    lab = labeling or label_clusters(box, config)
    return lab.label(p) == lab.label(q)


def boundary_items(box: BoxSpec, target: str = "sides") -> list[Interval]:
    """Vertical sides, or the full boundary (adds top and bottom unless periodic)."""
    a, b = box.lines
    s, t = box.time
    items = [Interval(a, s, t), Interval(b, s, t)]
    if target == "sides":
        return items
    if target != "boundary":
        raise ValueError("target must be 'sides' or 'boundary'")
    if not box.periodic_tb:
        items += [Interval(x, s, s) for x in range(a, b + 1)]
        items += [Interval(x, t, t) for x in range(a, b + 1)]
    return items


def reaches(
    box: BoxSpec,
    config: RcConfig,
    source: Iterable,
    target: Iterable,
    labeling: ClusterLabeling | None = None,
) -> bool:
    """Whether some cluster meets both ``source`` and ``target``."""
    lab = labeling or label_clusters(box, config)
    return bool(lab.labels_touching(source) & lab.labels_touching(target))


def reaches_boundary(
    box: BoxSpec,
    config: RcConfig,
    source: Iterable,
    target: str = "sides",
    labeling: ClusterLabeling | None = None,
) -> bool:
    return reaches(box, config, source, boundary_items(box, target), labeling)


@dataclass(frozen=True)
class SeparatingSets:
    """Equator set ``D`` and the stepped parallelogram circuit ``D0``.

    ``parallelogram`` lists the vertical pieces of the upper half of ``D0``
    together with the single points where it crosses a line without a
    vertical step; the lower half is the reflection in the time-0 axis.
    """

    m: int
    L: int
    k: int
    equator: tuple[tuple[int, int], tuple[int, int]]
    parallelogram: tuple[Interval, ...]

    @property
    def horizontal_extent(self) -> int:
        return 2 * self.k + self.L

    @property
    def vertical_extent(self) -> float:
        return 2 * max(p.hi for p in self.parallelogram)

    def equator_points(self) -> list[Point]:
        (l0, l1), (r0, r1) = self.equator
        return [Point(x, 0.0) for x in list(range(l0, l1 + 1)) + list(range(r0, r1 + 1))]

    def circuit(self, box: BoxSpec | None = None) -> list[Interval]:
        """Both halves of ``D0``, clipped to ``box`` when given (``D0`` intersect the box)."""
        pieces = list(self.parallelogram) + [Interval(p.line, -p.hi, -p.lo) for p in self.parallelogram]
        if box is None:
            return pieces
        s, t = box.time
        a, b = box.lines
        out = []
        for p in pieces:
            lo, hi = max(p.lo, s), min(p.hi, t)
            if a <= p.line <= b and lo <= hi:
                out.append(Interval(p.line, lo, hi))
        return out


def separating_sets(m: int, L: int, k: int | None = None) -> SeparatingSets:
    """Geometry of the separating sets around the slit ``[0, L] x {0}``.

    ``k`` defaults to ``floor(3m/7)``.  The upper half of the circuit runs
    from ``(-k, 0)`` to ``(L+k, 0)`` by vertical steps of height 2, each
    followed by a horizontal step of length 1; if ``2k+L`` is odd a flat step
    sits at the apex.
    """
    if m < 1 or L < 0:
        raise ValueError("need m >= 1 and L >= 0")
    if k is None:
        k = (3 * m) // 7
    if k < 1:
        raise ValueError("k must be at least 1")
    equator = ((-m, -1), (L + 1, L + m))
    w = 2 * k + L
    h = w // 2
    pieces = []
    x = -k
    for i in range(h):
        pieces.append(Interval(x, 2.0 * i, 2.0 * i + 2))
        x += 1
    if w % 2:
        pieces.append(Interval(x, 2.0 * h, 2.0 * h))
        x += 1
    for j in range(h):
        pieces.append(Interval(x, 2.0 * (h - j - 1), 2.0 * (h - j)))
        x += 1
    pieces.append(Interval(x, 0.0, 0.0))
    assert x == L + k
    return SeparatingSets(m, L, k, equator, tuple(pieces))


def write_config(path: str | Path, box: BoxSpec, config: RcConfig) -> None:
    """Text format: a ``box`` header line, then ``D <line> <time>`` / ``B <line> <time>``."""
    lines = ["# rcising continuum configuration v1", box.header()]
    lines += [f"{kind} {x} {u!r}" for kind, x, u in config.events(box)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_config(path: str | Path) -> tuple[BoxSpec, RcConfig]:
    box = None
    deaths, bridges = [], []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("box "):
            box = BoxSpec.from_header(line)
            continue
        kind, x, u = line.split()
        if kind == "D":
            deaths.append((int(x), float(u)))
        elif kind == "B":
            bridges.append((int(x), float(u)))
        else:
            raise ValueError(f"unknown record {kind!r}")
    if box is None:
        raise ValueError("missing box header")
    return box, RcConfig.from_events(box, deaths, bridges)
