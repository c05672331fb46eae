import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdpibt.grid import (E, N, S, W, AgentModel, GridMap, KinState, MapFormatError,
                         distance_map, footprint, parse_map, parse_scen, random_map,
                         state_space, successors)


def open_map(w, h, name="open"):
    return GridMap(w, h, np.zeros((h, w), dtype=bool), name)


def test_parse_small_mixed_map():
    g = parse_map("type octile\nheight 2\nwidth 2\nmap\n.@\n..")
    assert (g.width, g.height) == (2, 2)
    assert g.n_passable == 3
    assert g.blocked[0, 1] and not g.blocked[1, 1]


def test_parse_treats_G_and_T():
    g = parse_map("type octile\nheight 1\nwidth 4\nmap\n.GT@\n")
    assert g.blocked.tolist() == [[False, False, True, True]]


def test_parse_open_64():
    text = "type octile\nheight 64\nwidth 64\nmap\n" + "\n".join(["." * 64] * 64)
    assert parse_map(text).n_passable == 4096


def test_parse_missing_rows_names_line():
    with pytest.raises(MapFormatError) as err:
        parse_map("type octile\nheight 3\nwidth 2\nmap\n..\n..")
    assert err.value.line is not None


def test_parse_unknown_char():
    with pytest.raises(MapFormatError) as err:
        parse_map("type octile\nheight 1\nwidth 2\nmap\n.x")
    assert err.value.line == 5


def test_parse_bad_header():
    with pytest.raises(MapFormatError) as err:
        parse_map("type octile\nwidth 2\nheight 1\nmap\n..")
    assert err.value.line == 2


def test_map_roundtrip():
    g = random_map(9, 7, 12, seed=3)
    g2 = parse_map(g.to_text())
    assert np.array_equal(g.blocked, g2.blocked)


SCEN_LINE = "0\tm.map\t2\t2\t0\t0\t1\t1\t2.0"


def test_parse_scen_single():
    g = open_map(2, 2)
    assert parse_scen("version 1\n" + SCEN_LINE, g) == [(KinState(0, 0), (1, 1))]


def test_parse_scen_goal_blocked():
    g = parse_map("type octile\nheight 2\nwidth 2\nmap\n..\n.@")
    with pytest.raises(MapFormatError) as err:
        parse_scen(SCEN_LINE, g)
    assert err.value.line == 1


def test_parse_scen_dimension_mismatch():
    with pytest.raises(MapFormatError):
        parse_scen(SCEN_LINE, open_map(3, 3))


def test_parse_scen_keeps_order():
    g = open_map(4, 4)
    lines = [f"0\tm\t4\t4\t{i}\t0\t{3 - i}\t3\t1" for i in range(4)]
    pairs = parse_scen("\n".join(lines), g)
    assert [p[0].x for p in pairs] == [0, 1, 2, 3]
    assert [p[1] for p in pairs] == [(3, 3), (2, 3), (1, 3), (0, 3)]


def test_parse_scen_rm_heading():
    pairs = parse_scen(SCEN_LINE, open_map(2, 2), AgentModel.rm())
    assert pairs[0][0].heading == E


def test_successor_counts():
    g = open_map(5, 5)
    assert len(successors(KinState(2, 2), AgentModel.pm(), g)) == 5
    assert len(successors(KinState(0, 0), AgentModel.pm(), g)) == 3


def test_successor_order_pm():
    g = open_map(5, 5)
    out = successors(KinState(2, 2), AgentModel.pm(), g)
    assert [(s.x, s.y) for s in out] == [(2, 2), (2, 1), (3, 2), (2, 3), (1, 2)]


def test_rm_blocked_forward():
    g = parse_map("type octile\nheight 1\nwidth 2\nmap\n.@")
    out = successors(KinState(0, 0, E), AgentModel.rm(), g)
    assert out == [KinState(0, 0, E), KinState(0, 0, N), KinState(0, 0, S)]


def test_rm_forward_order():
    out = successors(KinState(1, 1, N), AgentModel.rm(), open_map(3, 3))
    assert out == [KinState(1, 1, N), KinState(1, 0, N), KinState(1, 1, W), KinState(1, 1, E)]


def test_invalid_state_raises():
    g = parse_map("type octile\nheight 1\nwidth 2\nmap\n.@")
    with pytest.raises(ValueError):
        successors(KinState(1, 0), AgentModel.pm(), g)


def test_footprints():
    fp = footprint(KinState(2, 2), AgentModel.pmla(3))
    assert fp == {(x, y) for x in range(2, 5) for y in range(2, 5)}
    assert footprint(KinState(5, 5), AgentModel.pm()) == {(5, 5)}


def test_state_counts_64():
    g = open_map(64, 64)
    assert state_space(g, AgentModel.pm()).n == 4096
    assert state_space(g, AgentModel.pmla(5)).n == 3600
    assert state_space(g, AgentModel.rm()).n == 4 * 4096


def test_pmla_anchor_needs_clear_block():
    g = parse_map("type octile\nheight 3\nwidth 3\nmap\n...\n.@.\n...")
    sp = state_space(g, AgentModel.pmla(2))
    assert sp.n == 0
    sp1 = state_space(g, AgentModel.pmla(1))
    assert sp1.n == 8


def test_distance_open_manhattan():
    d = distance_map((3, 4), AgentModel.pm(), open_map(8, 8))
    assert d[KinState(0, 0)] == 7


def test_distance_rm_turn_around():
    d = distance_map((3, 2), AgentModel.rm(), open_map(6, 5))
    assert d[KinState(2, 2, W)] == 3
    assert d[KinState(2, 2, E)] == 1
    assert d[KinState(3, 2, S)] == 0


def test_distance_enclosed_goal():
    g = parse_map("type octile\nheight 3\nwidth 5\nmap\n..@..\n.@.@.\n..@..")
    d = distance_map((2, 1), AgentModel.pm(), g)
    assert d[KinState(2, 1)] == 0
    sp = state_space(g, AgentModel.pm())
    others = [s for s in sp.states if (s.x, s.y) != (2, 1)]
    assert all(math.isinf(d[s]) for s in others)


def test_rm_distance_not_symmetric():
    d = distance_map((2, 2), AgentModel.rm(), open_map(5, 5))
    assert d[KinState(2, 2, E)] == 0
    assert d[KinState(3, 2, E)] == 3


def test_distance_invalid_goal():
    g = parse_map("type octile\nheight 1\nwidth 2\nmap\n.@")
    with pytest.raises(ValueError):
        distance_map((1, 0), AgentModel.pm(), g)


def test_random_map_connected_and_deterministic():
    a = random_map(32, 32, 205, seed=0)
    b = random_map(32, 32, 205, seed=0)
    assert np.array_equal(a.blocked, b.blocked)
    assert a.n_passable == 819
    sp = state_space(a, AgentModel.pm())
    d = sp.distance((sp.states[0].x, sp.states[0].y))
    assert d.values.max() < d.unreachable


models = st.sampled_from([AgentModel.pm(), AgentModel.pmla(1), AgentModel.pmla(2),
                          AgentModel.pmla(3), AgentModel.rm()])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), model=models, density=st.integers(0, 30))
def test_successor_and_distance_properties(seed, model, density):
    g = random_map(8, 7, 8 * 7 * density // 100, seed=seed, connected=False)
    sp = state_space(g, model)
    if sp.n == 0:
        return
    goal = (sp.states[seed % sp.n].x, sp.states[seed % sp.n].y)
    dist = sp.distance(goal).values.astype(np.int64)
    unreach = sp.distance(goal).unreachable
    for i, nxts in enumerate(sp.succ):
        assert nxts[0] == i
        assert len(set(nxts)) == len(nxts)
        for j in nxts:
            s = sp.states[j]
            assert sp.valid_cell(s.x, s.y)
            if dist[i] != unreach and dist[j] != unreach:
                # forward moves are not reversible in one step, so rotation
                # spaces only satisfy the one-sided bound
                if model.rotates:
                    assert dist[i] <= dist[j] + 1
                else:
                    assert abs(dist[i] - dist[j]) <= 1
            if dist[j] != unreach:
                assert dist[i] != unreach


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_pm_equals_pmla1(seed):
    g = random_map(7, 6, 10, seed=seed, connected=False)
    pm, p1 = state_space(g, AgentModel.pm()), state_space(g, AgentModel.pmla(1))
    assert pm.states == p1.states
    assert pm.succ == p1.succ


def test_model_parse():
    assert AgentModel.parse("pmla:3") == AgentModel.pmla(3)
    assert str(AgentModel.parse("RM")) == "rm"
    with pytest.raises(ValueError):
        AgentModel.parse("pmla")
    with pytest.raises(ValueError):
        AgentModel("pm", 2)
