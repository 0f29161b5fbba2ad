import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gyolo import data
from gyolo.errors import FormatError


class TestLabelParsing:
    def test_basic_line(self):
        boxes = data.parse_label_file("3 0.5 0.5 0.2 0.1", 9)
        assert boxes == [data.GroundTruthBox(3, 0.5, 0.5, 0.2, 0.1)]

    def test_token_count_error_names_line(self):
        with pytest.raises(FormatError, match="line 1: expected 5 tokens, got 3"):
            data.parse_label_file("3 0.5 0.5", 9)

    def test_error_on_later_line(self):
        with pytest.raises(FormatError, match="line 2"):
            data.parse_label_file("0 0.5 0.5 0.2 0.2\n1 0.5 0.5 0.2", 9)

    def test_range_error_on_cx(self):
        with pytest.raises(FormatError, match="cx"):
            data.parse_label_file("3 1.2 0.5 0.2 0.1", 9)

    def test_class_out_of_range(self):
        with pytest.raises(FormatError, match="class id 9"):
            data.parse_label_file("9 0.5 0.5 0.2 0.1", 9)

    def test_non_numeric(self):
        with pytest.raises(FormatError, match="non-numeric"):
            data.parse_label_file("1 a 0.5 0.2 0.1", 9)

    def test_zero_size_rejected(self):
        with pytest.raises(FormatError, match="w="):
            data.parse_label_file("1 0.5 0.5 0 0.1", 9)

    def test_blank_lines_skipped(self):
        boxes = data.parse_label_file("\n0 0.5 0.5 0.5 0.5\n\n", 9)
        assert len(boxes) == 1

    @given(st.lists(st.tuples(
        st.integers(0, 8),
        st.floats(0.0, 1.0, allow_nan=False),
        st.floats(0.0, 1.0, allow_nan=False),
        st.floats(0.01, 1.0, allow_nan=False),
        st.floats(0.01, 1.0, allow_nan=False)), max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_serialize_parse_roundtrip(self, rows):
        boxes = [data.GroundTruthBox(*r) for r in rows]
        parsed = data.parse_label_file(data.serialize_labels(boxes), 9)
        assert len(parsed) == len(boxes)
        for a, b in zip(parsed, boxes):
            assert a.class_id == b.class_id
            for f in ("cx", "cy", "w", "h"):
                assert getattr(a, f) == pytest.approx(getattr(b, f), abs=1e-6)

    @given(st.text(alphabet="abc 0.5\n-", max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_never_accepts_garbage_silently(self, text):
        try:
            boxes = data.parse_label_file(text, 9)
        except FormatError:
            return
        for b in boxes:
            assert 0 <= b.class_id < 9
            assert 0 <= b.cx <= 1 and 0 <= b.cy <= 1
            assert 0 < b.w <= 1 and 0 < b.h <= 1


class TestPixelConversion:
    def test_center_box_example(self):
        box = data.GroundTruthBox(0, 0.5, 0.5, 0.5, 0.5)
        assert data.to_pixels(box, 100, 100) == (25.0, 25.0, 75.0, 75.0)

    def test_roundtrip_within_1e6(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            cx, cy = rng.uniform(0.3, 0.7, 2)
            w, h = rng.uniform(0.05, 0.5, 2)
            x1, y1, x2, y2 = data.to_pixels(data.GroundTruthBox(0, cx, cy, w, h), 640, 480)
            rcx, rcy = (x1 + x2) / 2 / 640, (y1 + y2) / 2 / 480
            assert abs(rcx - cx) < 1e-6 and abs(rcy - cy) < 1e-6

    def test_clipped_to_bounds(self):
        box = data.GroundTruthBox(0, 0.02, 0.5, 0.2, 0.2)
        x1, _, _, _ = data.to_pixels(box, 100, 100)
        assert x1 == 0.0


class TestImages:
    def test_p5_grayscale_replicates(self, tmp_path):
        p = tmp_path / "g.pgm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 64, 128, 255]))
        t = data.load_image(p)
        assert t.shape == (1, 3, 2, 2)
        np.testing.assert_array_equal(t[0, 0], t[0, 1])
        np.testing.assert_array_equal(t[0, 0], t[0, 2])
        assert t[0, 0, 1, 1] == 1.0 and t[0, 0, 0, 0] == 0.0

    def test_p6_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = (rng.integers(0, 256, size=(1, 3, 5, 7)) / 255.0).astype(np.float32)
        p = tmp_path / "c.ppm"
        data.write_image(p, img)
        back = data.load_image(p)
        np.testing.assert_allclose(back, img, atol=1 / 255 / 2 + 1e-7)

    def test_header_comments_tolerated(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n# comment\n1 1\n255\n\x01\x02\x03")
        t = data.load_image(p)
        assert t.shape == (1, 3, 1, 1)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.ppm"
        p.write_bytes(b"P3\n1 1\n255\n")
        with pytest.raises(FormatError, match="magic"):
            data.load_image(p)

    def test_truncated_pixels(self, tmp_path):
        p = tmp_path / "t.ppm"
        p.write_bytes(b"P6\n2 2\n255\n\x00\x01")
        with pytest.raises(FormatError, match="truncated"):
            data.load_image(p)


class TestAugmentation:
    def test_identity(self):
        img = np.random.default_rng(2).random((1, 3, 4, 4)).astype(np.float32)
        np.testing.assert_array_equal(data.adjust_contrast_luminance(img, 1.0, 0.0), img)

    def test_full_brightness_clamps_to_one(self):
        img = np.random.default_rng(3).random((1, 3, 4, 4)).astype(np.float32)
        out = data.adjust_contrast_luminance(img, 1.0, 1.0)
        np.testing.assert_array_equal(out, np.ones_like(img))

    def test_contrast_two_endpoints(self):
        img = np.array([0.25, 0.75], np.float32).reshape(1, 1, 1, 2).repeat(3, axis=1)
        out = data.adjust_contrast_luminance(img, 2.0, 0.0)
        assert out[0, 0, 0, 0] == 0.0 and out[0, 0, 0, 1] == 1.0

    def test_idempotent_identity_params(self):
        img = np.random.default_rng(4).random((1, 3, 4, 4)).astype(np.float32)
        once = data.adjust_contrast_luminance(img, 1.0, 0.0)
        twice = data.adjust_contrast_luminance(once, 1.0, 0.0)
        np.testing.assert_array_equal(once, twice)

    def test_nonpositive_contrast_rejected(self):
        img = np.zeros((1, 3, 2, 2), np.float32)
        with pytest.raises(FormatError):
            data.adjust_contrast_luminance(img, 0.0, 0.0)


class TestManifest:
    def _dataset(self, tmp_path, n=3, orphan_image=False, orphan_label=False):
        images = tmp_path / "images"
        labels = tmp_path / "labels"
        images.mkdir()
        labels.mkdir()
        img = np.zeros((1, 3, 4, 4), np.float32)
        for i in range(n):
            data.write_image(images / f"im{i}.ppm", img)
            (labels / f"im{i}.txt").write_text("0 0.5 0.5 0.5 0.5\n")
        if orphan_image:
            data.write_image(images / "orphan.ppm", img)
        if orphan_label:
            (labels / "ghost.txt").write_text("0 0.5 0.5 0.5 0.5\n")
        m = tmp_path / "data.manifest"
        m.write_text("images_dir=images\nlabels_dir=labels\nnames=a,b,c\n")
        return m

    def test_parse_and_scan(self, tmp_path):
        mpath = self._dataset(tmp_path)
        manifest = data.load_manifest(mpath)
        assert manifest.names == ("a", "b", "c")
        scan = data.scan_dataset(manifest)
        assert len(scan.pairs) == 3
        assert not scan.unpaired_images and not scan.unpaired_labels

    def test_unpaired_files_reported(self, tmp_path):
        mpath = self._dataset(tmp_path, orphan_image=True, orphan_label=True)
        scan = data.scan_dataset(data.load_manifest(mpath))
        assert [p.name for p in scan.unpaired_images] == ["orphan.ppm"]
        assert [p.name for p in scan.unpaired_labels] == ["ghost.txt"]

    def test_default_names(self, tmp_path):
        m = tmp_path / "d.manifest"
        m.write_text("images_dir=i\nlabels_dir=l\n")
        manifest = data.parse_manifest(m.read_text(), tmp_path)
        assert manifest.names == data.DEFAULT_CLASS_NAMES
        assert len(manifest.names) == 9

    def test_missing_key_rejected(self):
        with pytest.raises(FormatError, match="labels_dir"):
            data.parse_manifest("images_dir=i\n")

    def test_duplicate_names_rejected(self):
        with pytest.raises(FormatError, match="unique"):
            data.parse_manifest("images_dir=i\nlabels_dir=l\nnames=a,a\n")
