import logging

import numpy as np
import pytest

from _synthetic import texture
from fissura.errors import AnnotationError, LayoutError
from fissura.imaging import load_image
from fissura.workbench import (Annotation, crop_centers, crops_from_path,
                               infer_scale_factor, init_project, open_project,
                               parse_scale_from_name)


@pytest.fixture
def layout(tmp_path):
    return init_project(tmp_path / "proj", labels=("Background", "Crack"))


def make_annotation(points, label="Crack", scale=2.0, crops=5):
    return Annotation(image_id="pillar_001.png", label=label, scale_factor=scale,
                      polyline=tuple(points), crops_per_segment=crops)


class TestLayout:
    def test_init_and_open(self, tmp_path):
        layout = init_project(tmp_path / "p", labels=("A", "B"))
        assert layout.labels() == ["A", "B"]
        assert open_project(tmp_path / "p").root == layout.root

    def test_open_rejects_non_project(self, tmp_path):
        with pytest.raises(LayoutError):
            open_project(tmp_path)


class TestCropsFromPath:
    def test_single_segment_five_crops(self, layout, rng):
        img = texture(rng, 400, 500)
        records = crops_from_path(img, make_annotation([(100, 200), (300, 220)]),
                                  layout)
        assert len(records) == 5
        for r in records:
            assert r.side == 112  # round(224 / 2)
            assert r.path.parent == layout.label_dir("Crack")
            crop = load_image(r.path)
            assert crop.shape == (224, 224, 3)

    def test_three_segments_fifteen_crops(self, layout, rng):
        img = texture(rng, 400, 500)
        pts = [(50, 50), (150, 80), (250, 60), (350, 90)]
        records = crops_from_path(img, make_annotation(pts), layout)
        assert len(records) == 15

    def test_centers_evenly_spaced_with_endpoints(self, layout, rng):
        img = texture(rng, 400, 500)
        records = crops_from_path(img, make_annotation([(150, 200), (250, 200)]),
                                  layout)
        # centers at t = i/4 along the segment, crop top-left = center - side/2
        want_x = [round(150 + t * 100 - 56) for t in (0, 0.25, 0.5, 0.75, 1.0)]
        assert [r.x for r in records] == want_x
        assert all(r.y == 200 - 56 for r in records)

    def test_border_crop_clamped_inward(self, layout, rng):
        img = texture(rng, 300, 300)
        records = crops_from_path(img, make_annotation([(2, 2), (40, 40)]), layout)
        assert all(0 <= r.x <= 300 - 112 and 0 <= r.y <= 300 - 112
                   for r in records)

    def test_zero_length_segment_skipped(self, layout, rng, caplog):
        img = texture(rng, 300, 300)
        pts = [(50, 50), (50, 50), (150, 150)]
        with caplog.at_level(logging.WARNING):
            records = crops_from_path(img, make_annotation(pts), layout)
        assert len(records) == 5  # one real segment
        assert "zero-length" in caplog.text

    def test_single_point_rejected(self, layout, rng):
        img = texture(rng, 300, 300)
        with pytest.raises(AnnotationError):
            crops_from_path(img, make_annotation([(10, 10)]), layout)

    def test_point_outside_image(self, layout, rng):
        img = texture(rng, 300, 300)
        with pytest.raises(AnnotationError):
            crops_from_path(img, make_annotation([(10, 10), (400, 10)]), layout)

    def test_missing_label_dir(self, layout, rng):
        img = texture(rng, 300, 300)
        ann = make_annotation([(10, 10), (100, 100)], label="Pothole")
        with pytest.raises(LayoutError):
            crops_from_path(img, ann, layout)

    def test_file_names_carry_scale_and_sequence(self, layout, rng):
        img = texture(rng, 300, 300)
        first = crops_from_path(img, make_annotation([(30, 30), (120, 120)]), layout)
        second = crops_from_path(img, make_annotation([(40, 40), (130, 130)]), layout)
        names = [r.path.name for r in first + second]
        assert names[0] == "Crack_s2_pillar_001_0000.png"
        assert names[5] == "Crack_s2_pillar_001_0005.png"  # sequence continues
        assert len(set(names)) == 10

    def test_deterministic_for_fixed_annotation(self, tmp_path, rng):
        img = texture(rng, 300, 300)
        ann = make_annotation([(30, 30), (120, 120)])
        outs = []
        for sub in ("a", "b"):
            lay = init_project(tmp_path / sub, labels=("Background", "Crack"))
            records = crops_from_path(img, ann, lay)
            outs.append([(r.x, r.y, r.path.read_bytes()) for r in records])
        assert outs[0] == outs[1]


class TestScaleParsing:
    def test_parse(self):
        assert parse_scale_from_name("Crack_s2_img_0001.png") == 2.0
        assert parse_scale_from_name("Crack_s1.5_img_0001.png") == 1.5
        assert parse_scale_from_name("random.png") is None

    def test_infer_unique(self, layout, rng):
        img = texture(rng, 300, 300)
        crops_from_path(img, make_annotation([(30, 30), (120, 120)]), layout)
        assert infer_scale_factor(layout) == 2.0

    def test_infer_mixed_returns_none(self, layout, rng):
        img = texture(rng, 300, 300)
        crops_from_path(img, make_annotation([(30, 30), (120, 120)], scale=2.0),
                        layout)
        crops_from_path(img, make_annotation([(30, 30), (120, 120)], scale=1.0),
                        layout)
        assert infer_scale_factor(layout) is None


class TestCropCenters:
    def test_midpoint_when_single_crop(self):
        centers, skipped = crop_centers(((0.0, 0.0), (10.0, 0.0)), 1)
        assert centers == [(5.0, 0.0)] and skipped == 0

    def test_degenerate_counted(self):
        centers, skipped = crop_centers(((1.0, 1.0), (1.0, 1.0)), 5)
        assert centers == [] and skipped == 1
