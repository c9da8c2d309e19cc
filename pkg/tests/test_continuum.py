import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import PathSearch, random_config, random_points
from rcising.continuum import (
    BoxSpec,
    Interval,
    Point,
    RcConfig,
    boundary_items,
    cluster_count,
    connected,
    label_clusters,
    reaches_boundary,
    read_config,
    segments_of,
    separating_sets,
    slit_vertex,
    write_config,
)


@st.composite
def boxes_and_configs(draw, max_events=10):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_config(np.random.default_rng(seed), max_events)


# -- box and configuration ------------------------------------------------


def test_box_constructors():
    b = BoxSpec.slit_box(3, 2, 10.0)
    assert b.lines == (-3, 5) and b.time == (-5.0, 5.0) and b.periodic_tb and b.slit == 2
    assert list(b.slit_sites) == [0, 1, 2]
    assert BoxSpec.square(4).lines == (-4, 4) and BoxSpec.square(4).time == (-4.0, 4.0)
    assert BoxSpec.chain_box(2, 0, 12.0).width == 5


@pytest.mark.parametrize(
    "kw",
    [
        dict(lines=(2, 1), time=(0.0, 1.0)),
        dict(lines=(0, 1), time=(1.0, 1.0)),
        dict(lines=(0, 1), time=(-1.0, 1.0), side_bc="sticky"),
        dict(lines=(0, 1), time=(-1.0, 1.0), slit=3),
        dict(lines=(0, 1), time=(0.5, 1.0), slit=0),
    ],
)
def test_box_validation(kw):
    with pytest.raises(ValueError):
        BoxSpec(**kw)


def test_config_validation():
    box = BoxSpec((0, 1), (-1.0, 1.0), slit=0)
    with pytest.raises(ValueError):
        RcConfig.from_events(box, deaths=[(0, 1.5)])
    with pytest.raises(ValueError):
        RcConfig.from_events(box, deaths=[(0, 0.3)], bridges=[(0, 0.3)])
    with pytest.raises(ValueError):
        RcConfig.from_events(box, deaths=[(1, 0.0)])
    with pytest.raises(ValueError):
        RcConfig.from_events(box, bridges=[(1, 0.2)])


def test_arrays_are_read_only():
    box = BoxSpec((0, 1), (-1.0, 1.0))
    cfg = RcConfig.from_events(box, deaths=[(0, 0.3)])
    with pytest.raises(ValueError):
        cfg.deaths[0][0] = 0.1


def test_empty_box_counts():
    box = BoxSpec((0, 3), (-1.0, 1.0))
    assert cluster_count(box, RcConfig.empty(box)) == 4
    assert cluster_count(BoxSpec((0, 3), (-1.0, 1.0), side_bc="wired"), RcConfig.empty(box)) == 3


def test_periodic_line_counts():
    box = BoxSpec((0, 0), (0.0, 1.0), periodic_tb=True)
    assert cluster_count(box, RcConfig.empty(box)) == 1
    for n in range(1, 5):
        cfg = RcConfig.from_events(box, deaths=[(0, (i + 0.5) / n) for i in range(n)])
        assert cluster_count(box, cfg) == n
    box_free = BoxSpec((0, 0), (0.0, 1.0))
    cfg = RcConfig.from_events(box_free, deaths=[(0, 0.5)])
    assert cluster_count(box_free, cfg) == 2


def test_bridge_joins_and_death_cuts():
    box = BoxSpec((0, 1), (0.0, 2.0))
    cfg = RcConfig.from_events(box, deaths=[(0, 1.0)], bridges=[(0, 1.5)])
    assert connected(box, cfg, (0, 1.7), (1, 0.2))
    assert not connected(box, cfg, (0, 0.5), (1, 0.2))
    assert cluster_count(box, cfg) == 2
    with pytest.raises(ValueError):
        label_clusters(box, cfg).segment(Point(0, 1.0))
    assert label_clusters(box, cfg).label(Point(0, 1.0, +1)) == label_clusters(box, cfg).label((1, 0.0))


def test_slit_separates_upper_and_lower():
    box = BoxSpec.slit_box(1, 0, 4.0, periodic_tb=False)
    cfg = RcConfig.empty(box)
    lab = label_clusters(box, cfg)
    assert lab.label(slit_vertex(0, +1)) != lab.label(slit_vertex(0, -1))
    # a bridge above and below joins the two halves around the slit
    cfg = RcConfig.from_events(box, bridges=[(-1, 1.0), (-1, -1.0)])
    assert connected(box, cfg, slit_vertex(0, +1), slit_vertex(0, -1))
    # periodic top/bottom joins them around the back
    pbox = BoxSpec.slit_box(1, 0, 4.0)
    assert connected(pbox, RcConfig.empty(pbox), slit_vertex(0, +1), slit_vertex(0, -1))


def test_segments_of_does_not_merge():
    box = BoxSpec((0, 1), (0.0, 1.0))
    cfg = RcConfig.from_events(box, bridges=[(0, 0.5)])
    assert segments_of(box, cfg).n_clusters == 2
    assert cluster_count(box, cfg) == 1


def test_boundary_items():
    box = BoxSpec((-1, 1), (0.0, 1.0))
    assert boundary_items(box) == [Interval(-1, 0.0, 1.0), Interval(1, 0.0, 1.0)]
    assert len(boundary_items(box, "boundary")) == 2 + 6
    assert len(boundary_items(BoxSpec((-1, 1), (0.0, 1.0), periodic_tb=True), "boundary")) == 2
    with pytest.raises(ValueError):
        boundary_items(box, "top")


def test_reaches_boundary_through_top():
    box = BoxSpec((-2, 2), (0.0, 1.0))
    cfg = RcConfig.empty(box)
    src = [Interval(0, 0.4, 0.6)]
    assert not reaches_boundary(box, cfg, src, "sides")
    assert reaches_boundary(box, cfg, src, "boundary")


# -- oracle equivalence ---------------------------------------------------


def test_labeling_matches_path_search():
    rng = np.random.default_rng(20240601)
    mismatches = 0
    for _ in range(2000):
        box, cfg = random_config(rng)
        oracle = PathSearch(box, cfg)
        lab = label_clusters(box, cfg)
        mismatches += oracle.n_clusters() != lab.n_clusters
        pts = random_points(box, rng, 4)
        for p in pts:
            for q in pts:
                mismatches += oracle.connected(p, q) != connected(box, cfg, p, q, lab)
        src = [Interval(pts[0].line, min(pts[0].time, pts[1].time), max(pts[0].time, pts[1].time))]
        for target in ("sides", "boundary"):
            mismatches += oracle.reaches(src, boundary_items(box, target)) != reaches_boundary(box, cfg, src, target, lab)
    assert mismatches == 0


def test_slit_vertices_match_path_search():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 300:
        box, cfg = random_config(rng)
        if box.slit is None:
            continue
        oracle = PathSearch(box, cfg)
        lab = label_clusters(box, cfg)
        verts = [slit_vertex(x, s) for x in box.slit_sites for s in (1, -1)]
        for p in verts:
            for q in verts:
                assert oracle.connected(p, q) == connected(box, cfg, p, q, lab)
        checked += 1


# -- properties -----------------------------------------------------------


def _fresh_time(box, cfg, rng):
    s, t = box.time
    used = {u for _, _, u in cfg.events(box)} | {0.0}
    while True:
        u = float(rng.uniform(s, t))
        if u not in used and s < u < t:
            return u


@settings(max_examples=200, deadline=None)
@given(boxes_and_configs(), st.integers(0, 2**32 - 1))
def test_adding_a_bridge_merges_at_most_two_clusters(bc, s):
    box, cfg = bc
    if box.width < 2:
        return
    rng = np.random.default_rng(s)
    x = int(rng.integers(box.lines[0], box.lines[1]))
    dk = cluster_count(box, cfg.with_bridge(box, x, _fresh_time(box, cfg, rng))) - cluster_count(box, cfg)
    assert dk in (0, -1)


@settings(max_examples=200, deadline=None)
@given(boxes_and_configs(), st.integers(0, 2**32 - 1))
def test_adding_a_death_splits_at_most_one_cluster(bc, s):
    box, cfg = bc
    rng = np.random.default_rng(s)
    x = int(rng.integers(box.lines[0], box.lines[1] + 1))
    dk = cluster_count(box, cfg.with_death(box, x, _fresh_time(box, cfg, rng))) - cluster_count(box, cfg)
    assert dk in (0, 1)


@settings(max_examples=200, deadline=None)
@given(boxes_and_configs(), st.integers(0, 2**32 - 1))
def test_wiring_only_adds_connections(bc, s):
    box, cfg = bc
    free = BoxSpec(box.lines, box.time, box.periodic_tb, "free", box.slit)
    wired = BoxSpec(box.lines, box.time, box.periodic_tb, "wired", box.slit)
    assert cluster_count(free, cfg) >= cluster_count(wired, cfg)
    rng = np.random.default_rng(s)
    pts = random_points(box, rng, 3)
    for p in pts:
        for q in pts:
            if connected(free, cfg, p, q):
                assert connected(wired, cfg, p, q)


@settings(max_examples=100, deadline=None)
@given(boxes_and_configs())
def test_connectivity_is_an_equivalence(bc):
    box, cfg = bc
    lab = label_clusters(box, cfg)
    assert lab.labels.min() >= 0
    assert len(set(lab.labels.tolist())) == lab.n_clusters
    assert lab.n_clusters <= lab.n_segments


@settings(max_examples=100, deadline=None)
@given(boxes_and_configs())
def test_config_roundtrip(tmp_path_factory, bc):
    box, cfg = bc
    path = tmp_path_factory.mktemp("cfg") / "c.txt"
    write_config(path, box, cfg)
    box2, cfg2 = read_config(path)
    assert box2 == box
    assert cfg2 == cfg


def test_read_config_rejects_bad_records(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("# header\nD 0 0.5\n")
    with pytest.raises(ValueError):
        read_config(p)
    p.write_text(BoxSpec((0, 1), (0.0, 1.0)).header() + "\nX 0 0.5\n")
    with pytest.raises(ValueError):
        read_config(p)


# -- separating sets ------------------------------------------------------


def test_parallelogram_extents():
    sep = separating_sets(7, 2, k=3)
    assert sep.horizontal_extent == 8
    assert sep.vertical_extent == 16
    lines = sorted({p.line for p in sep.parallelogram})
    assert lines == list(range(-3, 6))


@pytest.mark.parametrize("m,L", [(7, 0), (7, 1), (14, 3), (21, 2)])
def test_parallelogram_is_a_closed_staircase_around_the_slit(m, L):
    sep = separating_sets(m, L)
    k = sep.k
    upper = list(sep.parallelogram)
    # one piece per line from -k to L+k, starting and ending on the time-0 axis
    assert [iv.line for iv in upper] == list(range(-k, L + k + 1))
    assert upper[0].lo == 0.0 and upper[-1].hi == 0.0
    # a horizontal step at a shared height joins each piece to the next
    for left, right in zip(upper, upper[1:]):
        assert {left.lo, left.hi} & {right.lo, right.hi}
        assert right.hi - right.lo in (0.0, 2.0)
    # every slit site lies strictly inside
    for x in range(L + 1):
        assert max(iv.hi for iv in upper if iv.line == x) > 0
    full = sep.circuit()
    assert len(full) == 2 * len(upper)
    assert all(iv.lo >= 0 for iv in upper) and all(iv.hi <= 0 for iv in full[len(upper):])


def test_circuit_is_clipped_to_the_box():
    sep = separating_sets(7, 2, k=3)
    box = BoxSpec.slit_box(7, 2, 6.0)
    assert all(-3.0 <= iv.lo <= iv.hi <= 3.0 for iv in sep.circuit(box))


def test_equator_sets():
    sep = separating_sets(4, 1)
    assert sep.equator == ((-4, -1), (2, 5))
    assert [p.line for p in sep.equator_points()] == [-4, -3, -2, -1, 2, 3, 4, 5]


def test_separating_sets_validation():
    with pytest.raises(ValueError):
        separating_sets(0, 1)
    with pytest.raises(ValueError):
        separating_sets(2, 1)  # floor(6/7) = 0
