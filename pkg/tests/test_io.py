import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from noisypairs import io as nio
from noisypairs.exceptions import FormatError, InputError
from noisypairs.noise import LabeledDataset, make_similarity_pairs, symmetric_transition


def _write_idx_images(path, pixels):
    # independent writer: big-endian magic 0x00000803, three dimensions, raw bytes
    n, r, c = len(pixels), len(pixels[0]), len(pixels[0][0])
    body = bytes(v for img in pixels for row in img for v in row)
    path.write_bytes(struct.pack(">iiii", 0x803, n, r, c) + body)


def _write_idx_labels(path, labels):
    path.write_bytes(struct.pack(">ii", 0x801, len(labels)) + bytes(labels))


@pytest.fixture
def idx_pair(tmp_path):
    pixels = [[[0, 255, 17], [3, 128, 9]], [[200, 1, 2], [255, 0, 64]]]
    _write_idx_images(tmp_path / "img", pixels)
    _write_idx_labels(tmp_path / "lab", [7, 0])
    return tmp_path / "img", tmp_path / "lab", pixels


# -- IDX -----------------------------------------------------------------------

def test_idx_fixture_pixels_recovered(idx_pair):
    img, lab, pixels = idx_pair
    raw = nio.load_idx_images(img, lab, normalize=False)
    np.testing.assert_array_equal(raw.X, np.array(pixels, dtype=float).reshape(2, -1))
    assert raw.y.tolist() == [8, 1]
    scaled = nio.load_idx_images(img, lab)
    np.testing.assert_array_equal(scaled.X, raw.X / 255.0)


def test_idx_limit(idx_pair):
    img, lab, _ = idx_pair
    assert len(nio.load_idx_images(img, lab, limit=1)) == 1
    with pytest.raises(InputError):
        nio.load_idx_images(img, lab, limit=0)


def test_idx_count_mismatch(tmp_path, idx_pair):
    img, _, _ = idx_pair
    _write_idx_labels(tmp_path / "lab3", [1, 2, 3])
    with pytest.raises(FormatError):
        nio.load_idx_images(img, tmp_path / "lab3")


def test_idx_bad_magic_reports_offset(tmp_path, idx_pair):
    _, lab, _ = idx_pair
    bad = tmp_path / "bad"
    bad.write_bytes(struct.pack(">iiii", 0x801, 1, 1, 1) + b"\x00")
    with pytest.raises(FormatError, match="byte offset 0"):
        nio.load_idx_images(bad, lab)


def test_idx_truncated_payload_reports_offset(tmp_path, idx_pair):
    img, lab, _ = idx_pair
    cut = tmp_path / "cut"
    cut.write_bytes(img.read_bytes()[:-3])
    with pytest.raises(FormatError, match=f"byte offset {16 + 12 - 3}"):
        nio.load_idx_images(cut, lab)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nowhere"):
        nio.read_dataset(tmp_path / "nowhere.txt")


# -- text formats --------------------------------------------------------------

@settings(max_examples=50, deadline=None,
          suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)),
       st.integers(0, 2 ** 32 - 1))
def test_dataset_round_trip_is_lossless(tmp_path, X, seed):
    y = np.random.default_rng(seed).integers(1, 5, size=X.shape[0])
    data = LabeledDataset(X, y, 4)
    back = nio.read_dataset(nio.write_dataset(data, tmp_path / "d.txt"))
    assert back.X.tobytes() == data.X.tobytes()
    np.testing.assert_array_equal(back.y, y)
    assert back.num_classes == 4


def test_dataset_format_errors(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("2 2\n1 2 1\n")
    with pytest.raises(FormatError, match="byte offset 0"):
        nio.read_dataset(p)
    p.write_text("2 2 3\n1 2 1\n")
    with pytest.raises(FormatError):
        nio.read_dataset(p)
    p.write_text("1 2 3\n1 2 1.5\n")
    with pytest.raises(FormatError):
        nio.read_dataset(p)


def test_matrix_round_trip_is_lossless(tmp_path):
    rng = np.random.default_rng(0)
    T = rng.dirichlet(np.ones(5), size=5)
    back = nio.read_matrix(nio.write_matrix(T, tmp_path / "T.txt"), check=False)
    assert back.tobytes() == T.tobytes()
    S = symmetric_transition(4, 0.35)
    assert nio.read_matrix(nio.write_matrix(S, tmp_path / "S.txt")).tobytes() == S.tobytes()


def test_matrix_format_errors(tmp_path):
    p = tmp_path / "T.txt"
    p.write_text("3\n1 0\n0 1\n")
    with pytest.raises(FormatError):
        nio.read_matrix(p)
    p.write_text("x\n1 0\n0 1\n")
    with pytest.raises(FormatError):
        nio.read_matrix(p)


def test_heatmap_csv(tmp_path):
    T = symmetric_transition(3, 0.3)
    lines = nio.write_heatmap_csv(T, tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "class,1,2,3"
    vals = np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]])
    assert vals.tobytes() == T.tobytes()


def test_pairs_round_trip(tmp_path):
    lab = np.random.default_rng(1).integers(1, 4, size=25)
    p = make_similarity_pairs(lab, "sampled", k=50, seed=2)
    back = nio.read_pairs(nio.write_pairs(p, tmp_path / "p.csv"))
    for name in ("first", "second", "sim"):
        np.testing.assert_array_equal(getattr(back, name), getattr(p, name))


def test_pairs_header_checked(tmp_path):
    (tmp_path / "p.csv").write_text("a,b,c\n0,1,1\n")
    with pytest.raises(FormatError):
        nio.read_pairs(tmp_path / "p.csv")


def test_curves_round_trip(tmp_path):
    rows = [{"stage": "stage1", "epoch": e, "train_loss": 1 / (e + 3), "val_loss": 0.1 * e,
             "val_pair_error": 1 / 7, "lr": 1e-3 * 0.1 ** (e // 2)} for e in range(5)]
    assert nio.read_curves_csv(nio.write_curves_csv(rows, tmp_path / "c.csv")) == rows
