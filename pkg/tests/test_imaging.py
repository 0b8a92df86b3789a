import numpy as np
import pytest
from PIL import Image

from spxtrack.imaging import (Frame, ImageFormatError, RoiMask, Sequence, load_frame, load_mask,
                              read_label_map, save_frame, save_mask, write_label_map)
from spxtrack.slic import Segmentation

from conftest import write_p6


def test_p6_single_pixel(tmp_path):
    write_p6(tmp_path / "a.ppm", 1, 1, bytes([255, 0, 0]))
    f = load_frame(tmp_path / "a.ppm")
    assert (f.width, f.height) == (1, 1)
    assert f.data.tolist() == [[[255, 0, 0]]]


def test_p6_dimension_mismatch(tmp_path):
    write_p6(tmp_path / "bad.ppm", 2, 1, bytes(3))
    with pytest.raises(ImageFormatError, match="dimension mismatch"):
        load_frame(tmp_path / "bad.ppm")


def test_p6_header_comments(tmp_path):
    (tmp_path / "c.ppm").write_bytes(b"P6\n# made by hand\n2 1\n255\n" + bytes(range(6)))
    assert load_frame(tmp_path / "c.ppm").data.ravel().tolist() == list(range(6))


@pytest.mark.parametrize("suffix", [".ppm", ".png"])
def test_frame_round_trip(tmp_path, suffix):
    rng = np.random.default_rng(0)
    f = Frame(rng.integers(0, 256, (7, 5, 3), dtype=np.uint8))
    save_frame(f, tmp_path / f"x{suffix}")
    g = load_frame(tmp_path / f"x{suffix}")
    assert g.data.tobytes() == f.data.tobytes()
    save_frame(g, tmp_path / f"y{suffix}")
    assert load_frame(tmp_path / f"y{suffix}").data.tobytes() == f.data.tobytes()


def test_rgba_png_drops_alpha(tmp_path):
    arr = np.zeros((2, 3, 4), dtype=np.uint8)
    arr[..., 0] = 10
    arr[..., 3] = 7
    Image.fromarray(arr, "RGBA").save(tmp_path / "a.png")
    f = load_frame(tmp_path / "a.png")
    assert f.data.shape == (2, 3, 3)
    assert (f.data[..., 0] == 10).all() and (f.data[..., 1:] == 0).all()


def test_unsupported_and_unreadable(tmp_path):
    (tmp_path / "x.ppm").write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(ImageFormatError):
        load_frame(tmp_path / "x.ppm")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(ImageFormatError):
        load_frame(tmp_path / "junk.png")
    with pytest.raises((ImageFormatError, FileNotFoundError)):
        load_frame(tmp_path / "missing.png")


def test_load_mask_threshold(tmp_path):
    zeros = np.zeros((4, 4), dtype=np.uint8)
    Image.fromarray(zeros, "L").save(tmp_path / "z.png")
    assert not load_mask(tmp_path / "z.png").bits.any()
    Image.fromarray(zeros + 255, "L").save(tmp_path / "o.png")
    assert load_mask(tmp_path / "o.png").bits.all()
    one = zeros.copy()
    one[2, 1] = 200
    Image.fromarray(one, "L").save(tmp_path / "one.png")
    m = load_mask(tmp_path / "one.png")
    assert m.bits.sum() == 1 and m.bits[2, 1]
    assert not load_mask(tmp_path / "one.png", threshold=201).bits.any()
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[0, 0, 0] = 128
    rgb[1, 1, 1] = 255  # only the first channel counts
    Image.fromarray(rgb, "RGB").save(tmp_path / "rgb.png")
    assert load_mask(tmp_path / "rgb.png").bits.tolist() == [[True, False], [False, False]]


def test_mask_round_trip(tmp_path):
    bits = np.random.default_rng(1).random((9, 6)) > 0.5
    save_mask(RoiMask(bits), tmp_path / "m.png")
    assert np.array_equal(load_mask(tmp_path / "m.png").bits, bits)


def test_label_map_two_superpixels(tmp_path):
    labels = np.zeros((4, 6), dtype=np.int32)
    labels[:, 3:] = 1
    seg = Segmentation(labels)
    write_label_map(seg, tmp_path / "l.png")
    with Image.open(tmp_path / "l.png") as im:
        arr = np.asarray(im)
        assert im.mode.startswith("I")
    assert set(np.unique(arr)) == {0, 1}
    assert np.array_equal(read_label_map(tmp_path / "l.png"), labels)
    side = (tmp_path / "l.txt").read_text().splitlines()
    assert side[0].startswith("#") and len(side) == 3
    idx, cx, cy, size = side[2].split()
    assert (int(idx), float(cx), float(cy), int(size)) == (1, 4.0, 1.5, 12)


def test_label_map_round_trip_large(tmp_path):
    labels = np.arange(300 * 250, dtype=np.int32).reshape(250, 300) % 60000
    seg = Segmentation(labels)
    write_label_map(seg, tmp_path / "big.png")
    assert np.array_equal(read_label_map(tmp_path / "big.png"), labels)


def test_label_map_too_many(tmp_path):
    seg = Segmentation(np.arange(70000, dtype=np.int32).reshape(280, 250))
    with pytest.raises(ValueError):
        write_label_map(seg, tmp_path / "x.png")


def test_sequence_validation():
    a = Frame(np.zeros((4, 4, 3), np.uint8))
    b = Frame(np.zeros((4, 5, 3), np.uint8))
    with pytest.raises(ValueError):
        Sequence([a, b])
    with pytest.raises(ValueError):
        Sequence([a, a], ref_index=2)
    s = Sequence([a, a, a], ref_index=1)
    assert s.N == 2 and len(s.names) == 3


def test_frame_and_mask_invariants():
    with pytest.raises(ValueError):
        Frame(np.zeros((0, 3, 3), np.uint8))
    with pytest.raises(ValueError):
        Frame(np.zeros((2, 3), np.uint8))
    assert RoiMask(np.ones((2, 3), bool)).width == 3
