import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mstcar.panel import (
    CountPanel,
    PanelFormatError,
    PanelIndex,
    dump_count_panel,
    infer_panel_index,
    load_count_panel,
)

HEADER = "region,group,time,deaths,population"


def test_single_cell_panel():
    text = [HEADER, "A,g1,t1,0,100"]
    idx = PanelIndex(("A",), ("g1",), ("t1",))
    panel = load_count_panel(text, idx)
    assert panel.deaths[0, 0, 0] == 0
    assert panel.populations[0, 0, 0] == 100


def test_deaths_exceeding_population_rejected_with_coordinates():
    text = [HEADER, "A,g1,t1,5,3"]
    idx = PanelIndex(("A",), ("g1",), ("t1",))
    with pytest.raises(PanelFormatError, match=r"region=A group=g1 time=t1"):
        load_count_panel(text, idx)


def test_round_trip_identity_2x2x2():
    idx = PanelIndex(("A", "B"), ("g1", "g2"), ("t1", "t2"))
    rng = np.random.default_rng(0)
    pops = rng.integers(10, 100, size=(2, 2, 2))
    deaths = rng.integers(0, 10, size=(2, 2, 2))
    deaths = np.minimum(deaths, pops)
    panel = CountPanel(idx, deaths, pops)
    text = dump_count_panel(panel)
    reloaded = load_count_panel(text.splitlines(), idx)
    assert dump_count_panel(reloaded) == text
    assert np.array_equal(reloaded.deaths, panel.deaths)
    assert np.array_equal(reloaded.populations, panel.populations)


def test_missing_cell_reported():
    idx = PanelIndex(("A", "B"), ("g1",), ("t1",))
    with pytest.raises(PanelFormatError, match="missing cell"):
        load_count_panel([HEADER, "A,g1,t1,1,10"], idx)


def test_duplicate_cell_reported():
    idx = PanelIndex(("A",), ("g1",), ("t1",))
    with pytest.raises(PanelFormatError, match="duplicate"):
        load_count_panel([HEADER, "A,g1,t1,1,10", "A,g1,t1,2,10"], idx)


def test_negative_value_rejected():
    idx = PanelIndex(("A",), ("g1",), ("t1",))
    with pytest.raises(PanelFormatError, match="negative"):
        load_count_panel([HEADER, "A,g1,t1,-1,10"], idx)


def test_unknown_labels_rejected():
    idx = PanelIndex(("A",), ("g1",), ("t1",))
    with pytest.raises(PanelFormatError, match="unknown region"):
        load_count_panel([HEADER, "B,g1,t1,1,10"], idx)
    with pytest.raises(PanelFormatError, match="unknown group"):
        load_count_panel([HEADER, "A,g2,t1,1,10"], idx)


def test_header_required():
    idx = PanelIndex(("A",), ("g1",), ("t1",))
    with pytest.raises(PanelFormatError, match="header"):
        load_count_panel(["A,g1,t1,1,10"], idx)


def test_empty_panel_rejected():
    idx = PanelIndex(("A",), ("g1",), ("t1",))
    with pytest.raises(PanelFormatError, match="empty"):
        load_count_panel([], idx)


def test_zero_population_requires_zero_deaths():
    idx = PanelIndex(("A",), ("g1",), ("t1",))
    with pytest.raises(PanelFormatError):
        load_count_panel([HEADER, "A,g1,t1,1,0"], idx)
    panel = load_count_panel([HEADER, "A,g1,t1,0,0"], idx)
    assert panel.populations[0, 0, 0] == 0


def test_infer_panel_index_first_appearance_order():
    text = [HEADER, "B,g2,t1,0,5", "B,g1,t1,0,5", "A,g2,t1,0,5", "A,g1,t1,0,5"]
    idx = infer_panel_index(text)
    assert idx.region_labels == ("B", "A")
    assert idx.group_labels == ("g2", "g1")
    panel = load_count_panel(text, idx)
    assert panel.shape == (2, 1, 2)


def test_index_label_uniqueness():
    with pytest.raises(ValueError, match="unique"):
        PanelIndex(("A", "A"), ("g1",), ("t1",))


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2 ** 31))
@settings(max_examples=25, deadline=None)
def test_round_trip_identity_property(ns, ng, nt, seed):
    rng = np.random.default_rng(seed)
    idx = PanelIndex(
        tuple(f"r{i}" for i in range(ns)),
        tuple(f"g{k}" for k in range(ng)),
        tuple(f"t{t}" for t in range(nt)),
    )
    pops = rng.integers(0, 50, size=(ns, nt, ng))
    deaths = np.minimum(rng.integers(0, 50, size=(ns, nt, ng)), pops)
    panel = CountPanel(idx, deaths, pops)
    text = dump_count_panel(panel)
    assert dump_count_panel(load_count_panel(text.splitlines(), idx)) == text
