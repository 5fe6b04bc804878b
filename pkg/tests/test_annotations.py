import pytest
from hypothesis import given
from hypothesis import strategies as st

from tsdbench.annotations import (
    Annotation,
    BoundingBox,
    Detection,
    SignType,
    enumerate_eval_cells,
    parse_annotations,
    parse_detections,
    read_split,
    split_dataset,
    write_annotations,
    write_split,
)
from tsdbench.exceptions import AnnotationFormatError


def write(tmp_path, text, name="a.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_fourteen_sign_types():
    assert len(SignType) == 14
    assert SignType(6) is SignType.STOP
    assert [s.value for s in SignType] == list(range(1, 15))


def test_parse_single_line(tmp_path):
    (a,) = parse_annotations(write(tmp_path, "# cure-eval v1\n12 6 100 80 24 24\n"))
    assert a == Annotation(12, SignType.STOP, BoundingBox(100, 80, 24, 24))


def test_header_only_is_empty(tmp_path):
    assert parse_annotations(write(tmp_path, "# cure-eval v1\n")) == []
    assert parse_detections(write(tmp_path, "")) == []


def test_comments_and_blank_lines(tmp_path):
    text = "# cure-eval v1\n\n  # note\n3 1 0 0 2 2  # trailing\n"
    assert len(parse_annotations(write(tmp_path, text))) == 1


def test_ordered_by_frame_then_file_order(tmp_path):
    text = "5 1 0 0 1 1\n2 2 0 0 1 1\n5 3 0 0 1 1\n2 4 0 0 1 1\n"
    recs = parse_annotations(write(tmp_path, text))
    assert [(r.frame_index, int(r.sign)) for r in recs] == [(2, 2), (2, 4), (5, 1), (5, 3)]


def test_detection_confidence_default_and_explicit(tmp_path):
    recs = parse_detections(write(tmp_path, "0 6 1 2 3 4\n0 6 1 2 3 4 0.83\n"))
    assert [r.confidence for r in recs] == [1.0, 0.83]


@pytest.mark.parametrize(
    "line, fragment",
    [
        ("0 6 1 2 0 4", "non-positive"),
        ("0 6 1 2 3 -4", "non-positive"),
        ("0 15 1 2 3 4", "unknown sign"),
        ("0 0 1 2 3 4", "unknown sign"),
        ("x 6 1 2 3 4", "frame index"),
        ("-1 6 1 2 3 4", "negative frame"),
        ("0 6 1 2 3", "expected 6 or 7"),
        ("0 6 1 2 3 4 0.5 9", "expected 6 or 7"),
        ("0 6 a 2 3 4", "not a number"),
        ("0 6 1 2 3 4 1.5", "confidence"),
        ("0 6 1 2 nan 4", "not finite"),
    ],
)
def test_malformed_lines_report_line_number(tmp_path, line, fragment):
    path = write(tmp_path, f"# cure-eval v1\n0 6 1 1 1 1\n{line}\n")
    with pytest.raises(AnnotationFormatError) as err:
        parse_detections(path)
    assert err.value.lineno == 3
    assert fragment in str(err.value)
    assert f"{path}:3" in str(err.value)


def test_missing_file(tmp_path):
    with pytest.raises(AnnotationFormatError) as err:
        parse_annotations(tmp_path / "none.txt")
    assert err.value.lineno is None


def test_box_and_detection_invariants():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 1)
    with pytest.raises(ValueError):
        Detection(0, SignType.STOP, BoundingBox(0, 0, 1, 1), confidence=1.1)
    box = BoundingBox(2, 3, 4, 5)
    assert box.area == 20
    assert box.within(6, 8) and not box.within(5, 8)


boxes = st.builds(
    BoundingBox,
    st.integers(0, 500),
    st.integers(0, 500),
    st.integers(1, 200),
    st.integers(1, 200),
)
detections = st.builds(
    Detection,
    st.integers(0, 299),
    st.sampled_from(list(SignType)),
    boxes,
    st.floats(0, 1, allow_nan=False),
)


@given(st.lists(detections, max_size=20))
def test_write_parse_roundtrip(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("ann") / "d.txt"
    write_annotations(recs, path)
    back = parse_detections(path)
    assert back == sorted(recs, key=lambda r: r.frame_index)
    assert path.read_text().startswith("# cure-eval v1\n")


def test_written_ground_truth_has_six_fields(tmp_path):
    write_annotations([Annotation(1, SignType.YIELD, BoundingBox(1.5, 2, 3, 4))], tmp_path / "g.txt")
    assert tmp_path.joinpath("g.txt").read_text().splitlines()[1] == "1 13 1.5 2 3 4"


# -- splits ----------------------------------------------------------------


def test_split_49_ids():
    ids = [f"v{i:02d}" for i in range(49)]
    plan = split_dataset(ids, 0.7, seed=3)
    assert (len(plan.train_ids), len(plan.test_ids)) == (34, 15)
    assert split_dataset(ids, 0.7, seed=3) == plan
    ordered = split_dataset(ids, 0.7, shuffle=False)
    assert ordered.train_ids == tuple(ids[:34])


def test_split_rounds_half_up():
    assert len(split_dataset(range(5), 0.5).train_ids) == 3  # 2.5 -> 3
    assert len(split_dataset(range(3), 0.5).train_ids) == 2  # 1.5 -> 2


@given(
    st.lists(st.integers(), min_size=1, max_size=60, unique=True),
    st.floats(0.01, 0.99),
    st.integers(0, 2**32),
    st.booleans(),
)
def test_split_is_disjoint_cover(ids, ratio, seed, shuffle):
    plan = split_dataset(ids, ratio, seed, shuffle)
    assert not set(plan.train_ids) & set(plan.test_ids)
    assert sorted(plan.train_ids + plan.test_ids) == sorted(ids)


@pytest.mark.parametrize("ratio", [0.0, 1.0, -0.2, 1.5])
def test_split_rejects_ratio(ratio):
    with pytest.raises(ValueError):
        split_dataset(["a", "b"], ratio)


def test_split_rejects_empty_and_duplicates():
    with pytest.raises(ValueError):
        split_dataset([], 0.7)
    with pytest.raises(ValueError):
        split_dataset(["a", "a"], 0.7)


def test_split_csv_roundtrip(tmp_path):
    plan = split_dataset([f"v{i}" for i in range(10)], 0.7, seed=1)
    write_split(plan, tmp_path / "split.csv")
    assert tmp_path.joinpath("split.csv").read_text().startswith("id,split\n")
    assert read_split(tmp_path / "split.csv") == plan


def test_eval_cells_enumeration():
    plan = split_dataset([f"v{i:02d}" for i in range(49)], 0.7)
    cells = enumerate_eval_cells(plan, types=12, levels=5, frames_per_sequence=300)
    assert (cells.train_per_type, cells.test_per_type) == (170, 75)
    assert (cells.train_frames_per_type, cells.test_frames_per_type) == (51_000, 22_500)
    assert cells.challenge_sequences == 2_940
    assert cells.challenge_sequences // 12 == 245
    assert cells.train_total + cells.test_total == 2_940 + 49


def test_eval_cells_reject_bad_counts():
    plan = split_dataset(["a", "b", "c"], 0.7)
    with pytest.raises(ValueError):
        enumerate_eval_cells(plan, types=0)
    with pytest.raises(ValueError):
        enumerate_eval_cells(plan, frames_per_sequence=2.5)
