import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from objdiscovery.proposals import (GeneratorConfig, ProposalParseError, RegionSet,
                                    ensure_full_frame, full_frame_index, generate_proposals,
                                    load_proposals, save_proposals)


def test_load_clamps_and_drops(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("# header\n0,0,10,10\n-5,-5,20,30\n\n15,15,15,20\n95,5,120,9\n")
    rs = load_proposals(path, (100, 25), image_id="x")
    assert rs.image_id == "x"
    assert rs.dropped == 1
    assert rs.boxes.tolist() == [[0, 0, 10, 10], [0, 0, 20, 25], [95, 5, 100, 9]]


@pytest.mark.parametrize("text", ["1,2,3\n", "a,b,c,d\n", "0,0,nan,1\n", "# nothing\n"])
def test_load_rejects_bad_files(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ProposalParseError):
        load_proposals(path, (10, 10))


def test_load_missing_and_all_degenerate(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_proposals(tmp_path / "none.csv", (10, 10))
    path = tmp_path / "d.csv"
    path.write_text("20,20,30,30\n")
    with pytest.raises(ProposalParseError):
        load_proposals(path, (10, 10))


def test_load_truncates(tmp_path):
    path = tmp_path / "many.csv"
    path.write_text("".join(f"0,0,{i + 1},{i + 1}\n" for i in range(12)))
    assert len(load_proposals(path, (50, 50), max_proposals=5)) == 5


def test_save_round_trip(tmp_path):
    rs = RegionSet("a", np.array([[0.5, 1.25, 10.125, 20.0], [3, 4, 5, 6]]), (30, 30))
    save_proposals(rs, tmp_path / "a.csv")
    assert load_proposals(tmp_path / "a.csv", (30, 30), image_id="a") == rs


def test_generator_defaults():
    rs = generate_proposals((128, 96))
    assert full_frame_index(rs) == 0
    assert len(rs) == len(np.unique(rs.boxes, axis=0))
    w = rs.boxes[:, 2] - rs.boxes[:, 0]
    h = rs.boxes[:, 3] - rs.boxes[:, 1]
    assert np.all(np.minimum(w, h) >= 16.0 / np.sqrt(2) - 1e-6)
    assert np.all(rs.boxes[:, 2] <= 128) and np.all(rs.boxes[:, 3] <= 96)
    assert np.array_equal(generate_proposals(np.zeros((96, 128))).boxes, rs.boxes)


@settings(deadline=None, max_examples=20)
@given(st.integers(20, 300), st.integers(20, 300))
def test_generator_boxes_are_valid(width, height):
    rs = generate_proposals((width, height), GeneratorConfig(max_proposals=1000))
    b = rs.boxes
    assert np.all(b[:, 0] >= 0) and np.all(b[:, 1] >= 0)
    assert np.all(b[:, 0] < b[:, 2]) and np.all(b[:, 1] < b[:, 3])
    assert np.all(b[:, 2] <= width) and np.all(b[:, 3] <= height)
    assert len(rs) <= 1000


def test_generator_cap_and_errors():
    rs = generate_proposals((400, 400), GeneratorConfig(max_proposals=50, min_box_side=0))
    assert len(rs) == 50
    with pytest.raises(ValueError):
        generate_proposals(np.zeros((0, 3)))


def test_ensure_full_frame():
    rs = RegionSet("a", np.array([[0, 0, 5, 5]], float), (10, 8))
    full = ensure_full_frame(rs)
    assert full.boxes[-1].tolist() == [0, 0, 10, 8]
    assert full_frame_index(full) == 1
    assert ensure_full_frame(full) is full
    with pytest.raises(ValueError):
        full_frame_index(rs)
    with pytest.raises(ValueError):
        ensure_full_frame(rs.with_descriptors(np.zeros((1, 9))))


def test_region_set_basics():
    rs = RegionSet("a", np.array([[0, 0, 4, 9], [2, 2, 6, 6]], float), (10, 10),
                   np.arange(18, dtype=float).reshape(2, 9))
    assert rs.locations.tolist() == [[2, 4.5, 6], [4, 4, 4]]
    regions = rs.regions
    assert regions[1].id == 1 and regions[1].box.as_tuple() == (2, 2, 6, 6)
    assert np.array_equal(regions[1].descriptor, rs.descriptors[1])
    sub = rs.subset([1])
    assert len(sub) == 1 and np.array_equal(sub.descriptors, rs.descriptors[1:])
    with pytest.raises(ValueError):
        RegionSet("a", np.zeros((0, 4)), (10, 10))
    with pytest.raises(ValueError):
        RegionSet("a", rs.boxes, (10, 10), np.zeros((3, 9)))


def test_generator_single_scale_is_full_frame():
    cfg = GeneratorConfig(min_scale=1.0, max_scale=1.0, aspect_ratios=(1.0,))
    rs = generate_proposals((64, 64), cfg)
    assert rs.boxes.tolist() == [[0, 0, 64, 64]]


def test_generator_count_on_typical_image():
    rs = generate_proposals((500, 375))
    assert 1000 <= len(rs) <= 4000
    assert generate_proposals((500, 375)) == rs
