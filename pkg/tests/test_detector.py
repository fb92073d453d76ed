import numpy as np
import pytest

from _synthetic import texture
from fissura.backend import blockstats_descriptor, load_backend
from fissura.detector import (ArrayImageSource, ClassDetection, DetectionConfig,
                              DetectionResult, MemmapImageSource, detect,
                              multi_stage, physical_window, render_overlay,
                              write_detection_outputs)
from fissura.errors import (BoundsError, ConfigurationError, DescriptorError,
                            DimensionError)
from fissura.mask import BBox, Bitmask
from fissura.trainer import LogRegModel

LABELS = ("Background", "Crack")


def constant_model(probs, descriptor, tile_size, scale_factor=2.0):
    """Zero weights, log-probability biases: every window scores `probs`."""
    k = len(probs)
    return LogRegModel(weights=np.zeros((descriptor.output_dim, k)),
                       biases=np.log(np.asarray(probs, dtype=np.float64)),
                       label_names=LABELS[:k], regularization_c=1.0,
                       backend=descriptor, tile_size=tile_size,
                       scale_factor=scale_factor)


def random_model(rng, descriptor, tile_size, scale_factor=2.0, spread=0.002):
    return LogRegModel(weights=rng.normal(0, spread, (descriptor.output_dim, 2)),
                       biases=rng.normal(0, 0.5, 2), label_names=LABELS,
                       regularization_c=1.0, backend=descriptor,
                       tile_size=tile_size, scale_factor=scale_factor)


@pytest.fixture(scope="module")
def small_backend():
    return load_backend(blockstats_descriptor(input_size=64))


def small_image(rng, w=160, h=120):
    return texture(rng, h, w)


class TestDetect:
    def test_full_frame_window_count(self, rng, blockstats_backend):
        # 4248x2850 orthomosaic frame, tile 224 at scale 2 -> 112 px windows
        model = constant_model((0.9, 0.1), blockstats_backend.descriptor,
                               tile_size=224, scale_factor=2.0)
        assert physical_window(model) == 112
        image = texture(rng, 2850, 4248)
        result = detect(image, model, blockstats_backend,
                        DetectionConfig(confidence_threshold=0.95))
        assert len(result.positions) == 2646
        assert len(result.positions) > 2500

    def test_below_threshold_no_mask(self, rng, small_backend):
        model = constant_model((0.94, 0.06), small_backend.descriptor, 64)
        result = detect(small_image(rng), model, small_backend,
                        DetectionConfig(confidence_threshold=0.95))
        assert all(det.mask.count() == 0 for det in result.per_class.values())
        assert all(det.boxes == [] for det in result.per_class.values())

    def test_above_threshold_fills_argmax_class(self, rng, small_backend):
        model = constant_model((0.02, 0.98), small_backend.descriptor, 64)
        result = detect(small_image(rng), model, small_backend,
                        DetectionConfig(confidence_threshold=0.95))
        # every window accepted as Crack; union of windows covers the image
        assert result.per_class["Crack"].mask.count() == 160 * 120
        assert result.per_class["Background"].mask.count() == 0

    def test_single_window_image(self, rng, small_backend):
        model = constant_model((0.3, 0.7), small_backend.descriptor, 64)
        img = small_image(rng, w=32, h=32)  # exactly one physical window
        result = detect(img, model, small_backend,
                        DetectionConfig(confidence_threshold=0.51))
        assert result.positions.tolist() == [[0, 0]]
        assert result.per_class["Crack"].mask.count() == 32 * 32

    def test_image_smaller_than_window(self, rng, small_backend):
        model = constant_model((0.5, 0.5), small_backend.descriptor, 64)
        with pytest.raises(DimensionError):
            detect(small_image(rng, w=16, h=16), model, small_backend)

    def test_backend_mismatch(self, rng, small_backend, blockstats_backend):
        model = constant_model((0.5, 0.5), small_backend.descriptor, 64)
        with pytest.raises(DescriptorError):
            detect(small_image(rng), model, blockstats_backend)

    def test_threshold_below_uniform_rejected(self, rng, small_backend):
        model = constant_model((0.5, 0.5), small_backend.descriptor, 64)
        with pytest.raises(ConfigurationError):
            detect(small_image(rng), model, small_backend,
                   DetectionConfig(confidence_threshold=0.4))

    def test_mask_reconstruction_from_window_predictions(self, rng, small_backend):
        model = random_model(rng, small_backend.descriptor, 64)
        config = DetectionConfig(confidence_threshold=0.9, batch_size=17)
        result = detect(small_image(rng), model, small_backend, config)
        rebuilt = {name: Bitmask(result.width, result.height) for name in LABELS}
        best = result.probabilities.max(axis=1)
        arg = result.probabilities.argmax(axis=1)
        for i in np.flatnonzero(best >= config.confidence_threshold):
            x, y = result.positions[i]
            rebuilt[LABELS[arg[i]]].fill_rect(int(x), int(y), 32, 32)
        for name in LABELS:
            assert rebuilt[name] == result.per_class[name].mask

    def test_threshold_monotone_shrinkage(self, small_backend):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            model = random_model(rng, small_backend.descriptor, 64)
            img = small_image(rng)
            low = detect(img, model, small_backend,
                         DetectionConfig(confidence_threshold=0.80))
            high = detect(img, model, small_backend,
                          DetectionConfig(confidence_threshold=0.97))
            for name in LABELS:
                assert high.per_class[name].mask.is_subset_of(
                    low.per_class[name].mask)

    def test_batch_size_does_not_change_result(self, rng, small_backend):
        model = random_model(rng, small_backend.descriptor, 64)
        img = small_image(rng)
        a = detect(img, model, small_backend, DetectionConfig(batch_size=128))
        b = detect(img, model, small_backend, DetectionConfig(batch_size=5))
        assert np.array_equal(a.probabilities, b.probabilities)
        assert all(a.per_class[n].mask == b.per_class[n].mask for n in LABELS)

    def test_streaming_source_equals_in_memory(self, rng, small_backend, tmp_path):
        model = random_model(rng, small_backend.descriptor, 64)
        img = small_image(rng)
        np.save(tmp_path / "img.npy", img)
        a = detect(ArrayImageSource(img), model, small_backend)
        b = detect(MemmapImageSource(tmp_path / "img.npy"), model, small_backend)
        assert np.array_equal(a.probabilities, b.probabilities)
        assert all(a.per_class[n].mask == b.per_class[n].mask for n in LABELS)

    def test_boxes_are_tight_bounds_of_components(self, rng, small_backend):
        model = random_model(rng, small_backend.descriptor, 64)
        result = detect(small_image(rng), model, small_backend,
                        DetectionConfig(confidence_threshold=0.8))
        from fissura.mask import mask_to_bboxes
        for det in result.per_class.values():
            assert det.boxes == mask_to_bboxes(det.mask)


def empty_stage1(width, height, crack_mask=None):
    masks = {"Background": Bitmask(width, height),
             "Crack": crack_mask or Bitmask(width, height)}
    per_class = {n: ClassDetection(m, []) for n, m in masks.items()}
    return DetectionResult(label_names=LABELS, width=width, height=height,
                           window_size=32, confidence_threshold=0.95,
                           per_class=per_class,
                           positions=np.empty((0, 2), dtype=np.int64),
                           probabilities=np.empty((0, 2), dtype=np.float32))


class TestMultiStage:
    def test_empty_gate_evaluates_nothing(self, rng, small_backend):
        model = random_model(rng, small_backend.descriptor, 64)
        img = small_image(rng)
        stage1 = empty_stage1(160, 120)
        out = multi_stage(img, stage1, {"Crack": model}, small_backend)
        assert len(out["Crack"].positions) == 0
        assert all(d.mask.count() == 0 for d in out["Crack"].per_class.values())

    def test_full_gate_equals_plain_detect(self, rng, small_backend):
        model = random_model(rng, small_backend.descriptor, 64)
        img = small_image(rng)
        full = Bitmask(160, 120)
        full.fill_rect(0, 0, 160, 120)
        stage1 = empty_stage1(160, 120, crack_mask=full)
        out = multi_stage(img, stage1, {"Crack": model}, small_backend)
        plain = detect(img, model, small_backend)
        assert np.array_equal(out["Crack"].positions, plain.positions)
        assert np.array_equal(out["Crack"].probabilities, plain.probabilities)
        for name in LABELS:
            assert out["Crack"].per_class[name].mask == plain.per_class[name].mask

    def test_half_gate_centers_inside_mask(self, rng, small_backend):
        model = random_model(rng, small_backend.descriptor, 64)
        img = small_image(rng)
        half = Bitmask(160, 120)
        half.fill_rect(0, 0, 80, 120)  # left half
        stage1 = empty_stage1(160, 120, crack_mask=half)
        out = multi_stage(img, stage1, {"Crack": model}, small_backend)
        positions = out["Crack"].positions
        assert len(positions)
        centers_x = positions[:, 0] + 16
        assert np.all(centers_x < 80)

    def test_unknown_stage_label(self, rng, small_backend):
        model = random_model(rng, small_backend.descriptor, 64)
        stage1 = empty_stage1(160, 120)
        with pytest.raises(ConfigurationError):
            multi_stage(small_image(rng), stage1, {"Pothole": model}, small_backend)


class TestRenderOverlay:
    def test_no_boxes_identical_copy(self, rng):
        img = small_image(rng)
        out = render_overlay(img, [])
        assert np.array_equal(out, img)
        assert out is not img

    def test_single_box_perimeter_band(self, rng):
        img = small_image(rng)
        box = BBox(x=10, y=20, w=40, h=30)
        out = render_overlay(img, [box], color=(255, 0, 0), stroke_width=2)
        want = img.copy()
        for y in range(img.shape[0]):
            for x in range(img.shape[1]):
                inside = 10 <= x < 50 and 20 <= y < 50
                on_band = inside and (x < 12 or x >= 48 or y < 22 or y >= 48)
                if on_band:
                    want[y, x] = (255, 0, 0)
        assert np.array_equal(out, want)

    def test_later_boxes_overwrite(self, rng):
        img = small_image(rng)
        a = BBox(x=10, y=10, w=20, h=20)
        b = BBox(x=15, y=10, w=20, h=20)
        out = render_overlay(img, [a, b], color=(0, 255, 0))
        ba = render_overlay(render_overlay(img, [a], color=(0, 255, 0)),
                            [b], color=(0, 255, 0))
        assert np.array_equal(out, ba)

    def test_out_of_bounds_box(self, rng):
        with pytest.raises(BoundsError):
            render_overlay(small_image(rng), [BBox(x=150, y=0, w=20, h=10)])


class TestOutputs:
    def test_written_files(self, rng, small_backend, tmp_path):
        model = random_model(rng, small_backend.descriptor, 64)
        img = small_image(rng)
        result = detect(img, model, small_backend,
                        DetectionConfig(confidence_threshold=0.8))
        written = write_detection_outputs(result, img, tmp_path / "out")
        names = sorted(p.name for p in written)
        assert names == ["Background_mask.png", "Background_out.png",
                         "Crack_mask.png", "Crack_out.png", "predictions.csv"]
        csv_text = (tmp_path / "out" / "predictions.csv").read_text()
        assert csv_text.startswith("x,y,label,probability")
        n_accepted = sum(1 for _ in result.accepted_windows())
        assert len(csv_text.strip().splitlines()) == n_accepted + 1
