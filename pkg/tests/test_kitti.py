import numpy as np
import pytest

from rpnforge.geometry import Box2D
from rpnforge.kitti import (
    Difficulty,
    KittiLabel,
    SceneSpec,
    classify_difficulty,
    generate_synthetic_scene,
    load_ppm,
    pad_to_multiple,
    parse_label_file,
    preprocess_image,
    save_ppm,
    write_detections,
    write_label_file,
    write_scene_dataset,
)

CANONICAL_LINE = (
    "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.67 25.01 -1.59"
)


class TestLabelParsing:
    def test_known_line(self):
        labels = parse_label_file(CANONICAL_LINE + "\n")
        assert len(labels) == 1
        l = labels[0]
        assert l.category == "Car"
        assert l.truncation == 0.0
        assert l.occlusion == 0
        assert (l.bbox.x1, l.bbox.y1, l.bbox.x2, l.bbox.y2) == (587.01, 173.33, 614.12, 200.12)
        assert l.score is None

    def test_empty_file(self):
        assert parse_label_file("") == []
        assert parse_label_file("\n\n") == []

    def test_round_trip_byte_identical(self):
        text = CANONICAL_LINE + "\n" + CANONICAL_LINE.replace("Car", "Pedestrian") + "\n"
        assert write_label_file(parse_label_file(text)) == text

    def test_detection_round_trip_with_score(self):
        det = parse_label_file(CANONICAL_LINE + " 0.876543\n")[0]
        assert det.score == pytest.approx(0.876543)
        assert write_label_file([det]) == CANONICAL_LINE + " 0.876543\n"

    def test_wrong_column_count_reports_line(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_label_file(CANONICAL_LINE + "\nCar 0.0 0\n")

    def test_non_numeric_reports_line(self):
        bad = CANONICAL_LINE.replace("173.33", "abc")
        with pytest.raises(ValueError, match="line 1"):
            parse_label_file(bad + "\n")

    def test_unknown_category_preserved(self):
        line = CANONICAL_LINE.replace("Car", "UnicycleHerd")
        assert parse_label_file(line)[0].category == "UnicycleHerd"

    def test_dontcare_sentinels_normalized(self):
        line = "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10"
        l = parse_label_file(line)[0]
        assert l.truncation == 0.0
        assert l.occlusion == 3
        assert classify_difficulty(l) is Difficulty.IGNORED


class TestWriteDetections:
    def test_empty(self):
        assert write_detections([]) == ""

    def test_missing_score_rejected(self):
        gt = parse_label_file(CANONICAL_LINE)[0]
        with pytest.raises(ValueError, match="missing a score"):
            write_detections([gt])

    def test_sorted_by_descending_score(self):
        base = parse_label_file(CANONICAL_LINE)[0]
        dets = [base.with_score(0.2), base.with_score(0.9), base.with_score(0.5)]
        lines = write_detections(dets).strip().splitlines()
        scores = [float(l.split()[-1]) for l in lines]
        assert scores == sorted(scores, reverse=True)


def make_label(height, occlusion, truncation):
    return KittiLabel(
        category="Car",
        truncation=truncation,
        occlusion=occlusion,
        alpha=0.0,
        bbox=Box2D(0, 0, 50, height),
    )


class TestDifficulty:
    def test_easy_example(self):
        assert classify_difficulty(make_label(45, 0, 0.10)) is Difficulty.EASY

    def test_moderate_example(self):
        assert classify_difficulty(make_label(30, 1, 0.25)) is Difficulty.MODERATE

    def test_too_small_is_ignored(self):
        for occ in (0, 1, 2, 3):
            assert classify_difficulty(make_label(20, occ, 0.0)) is Difficulty.IGNORED

    def test_hard_example(self):
        assert classify_difficulty(make_label(30, 2, 0.45)) is Difficulty.HARD

    def test_unknown_occlusion_always_ignored(self):
        assert classify_difficulty(make_label(100, 3, 0.0)) is Difficulty.IGNORED

    def test_inclusive_boundaries(self):
        assert classify_difficulty(make_label(40, 0, 0.15)) is Difficulty.EASY
        assert classify_difficulty(make_label(25, 1, 0.30)) is Difficulty.MODERATE
        assert classify_difficulty(make_label(25, 2, 0.50)) is Difficulty.HARD

    def test_monotone_in_each_criterion(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            h = float(rng.uniform(10, 60))
            occ = int(rng.integers(0, 4))
            tr = float(rng.uniform(0, 0.6))
            base = classify_difficulty(make_label(h, occ, tr)).value
            assert classify_difficulty(make_label(h + 5, occ, tr)).value <= base
            if occ > 0:
                assert classify_difficulty(make_label(h, occ - 1, tr)).value <= base
            assert classify_difficulty(make_label(h, occ, max(0.0, tr - 0.1))).value <= base

    def test_inclusion_order(self):
        assert Difficulty.MODERATE.includes(Difficulty.EASY)
        assert Difficulty.HARD.includes(Difficulty.MODERATE)
        assert not Difficulty.EASY.includes(Difficulty.MODERATE)
        assert not Difficulty.HARD.includes(Difficulty.IGNORED)


class TestPpm:
    def test_one_white_pixel_exact_bytes(self):
        img = np.full((1, 1, 3), 255, dtype=np.uint8)
        data = save_ppm(img)
        assert data == b"P6\n1 1\n255\n\xff\xff\xff"

    def test_round_trip_canonical(self):
        rng = np.random.default_rng(5)
        img = rng.integers(0, 256, size=(7, 11, 3)).astype(np.uint8)
        data = save_ppm(img)
        assert save_ppm(load_ppm(data)) == data
        assert np.array_equal(load_ppm(data), img)

    def test_comments_in_header(self):
        img = load_ppm(b"P6\n# made by hand\n2 1\n255\n" + bytes(6))
        assert img.shape == (1, 2, 3)

    def test_wrong_maxval_rejected(self):
        with pytest.raises(ValueError, match="maxval"):
            load_ppm(b"P6\n1 1\n65535\n" + bytes(6))

    def test_bad_magic(self):
        with pytest.raises(ValueError, match="magic"):
            load_ppm(b"P5\n1 1\n255\n\x00")

    def test_truncated_payload_reports_offset(self):
        with pytest.raises(ValueError, match="byte"):
            load_ppm(b"P6\n2 2\n255\n\x00\x00\x00")

    def test_wrong_dtype_rejected(self):
        with pytest.raises(ValueError, match="uint8"):
            save_ppm(np.zeros((2, 2, 3), dtype=np.float64))


class TestPreprocess:
    def test_kitti_frame_sigma_and_size(self):
        img = np.random.default_rng(0).integers(0, 256, size=(375, 1242, 3)).astype(np.uint8)
        out, sigma = preprocess_image(img)
        assert sigma == 1.242
        assert out.shape == (302, 1000, 3)

    def test_small_image_untouched_geometry(self):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 256, size=(100, 200, 3)).astype(np.uint8)
        out, sigma = preprocess_image(img)
        assert sigma == 1.0
        assert out.shape == (100, 200, 3)
        # zero-mean shift only: adding the mean back recovers the pixels
        assert np.allclose(out + img.astype(float).mean(axis=(0, 1)), img, atol=1e-9)

    def test_zero_mean_channels(self):
        img = np.random.default_rng(2).integers(0, 256, size=(375, 1242, 3)).astype(np.uint8)
        out, _ = preprocess_image(img)
        assert np.abs(out.mean(axis=(0, 1))).max() < 1e-9

    def test_short_side_cap(self):
        img = np.zeros((700, 800, 3), dtype=np.uint8)
        _, sigma = preprocess_image(img)
        assert sigma == pytest.approx(700 / 600)

    def test_aspect_ratio_single_sigma(self):
        img = np.zeros((375, 1242, 3), dtype=np.uint8)
        out, sigma = preprocess_image(img)
        assert out.shape[1] == round(1242 / sigma)
        assert out.shape[0] == round(375 / sigma)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            preprocess_image(np.zeros((0, 10, 3)))

    def test_pad_to_multiple(self):
        img = np.ones((30, 45, 3))
        padded = pad_to_multiple(img, 16)
        assert padded.shape == (32, 48, 3)
        assert np.array_equal(padded[:30, :45], img)
        assert np.all(padded[30:] == 0)
        same = np.ones((32, 32, 3))
        assert pad_to_multiple(same, 16) is same


class TestSynthetic:
    def test_exact_count_range(self):
        spec = SceneSpec(min_objects=1, max_objects=1, seed=3)
        _, labels = generate_synthetic_scene(spec)
        assert len(labels) == 1

    def test_deterministic(self):
        spec = SceneSpec(seed=7)
        img_a, labels_a = generate_synthetic_scene(spec)
        img_b, labels_b = generate_synthetic_scene(spec)
        assert np.array_equal(img_a, img_b)
        assert labels_a == labels_b

    def test_pixel_extent_matches_labels(self):
        # pixel-scan oracle: bright pixels exactly fill each label's box
        spec = SceneSpec(seed=11, min_objects=2, max_objects=4, noise=12)
        image, labels = generate_synthetic_scene(spec)
        bright = (image >= 150).any(axis=2)
        outside = bright.copy()
        for l in labels:
            x1, y1, x2, y2 = (int(v) for v in (l.bbox.x1, l.bbox.y1, l.bbox.x2, l.bbox.y2))
            # interior fully bright and nothing bright outside any box: the
            # rendered extent matches the label to the pixel
            assert bright[y1:y2, x1:x2].all()
            outside[y1:y2, x1:x2] = False
        assert not outside.any()

    def test_labels_are_clean_cars(self):
        _, labels = generate_synthetic_scene(SceneSpec(seed=13))
        for l in labels:
            assert l.category == "Car"
            assert l.truncation == 0.0
            assert l.occlusion == 0
            assert classify_difficulty(l) in (
                Difficulty.EASY,
                Difficulty.MODERATE,
                Difficulty.IGNORED,  # objects under 25 px
            )

    def test_low_pairwise_overlap(self):
        from rpnforge.geometry import iou

        _, labels = generate_synthetic_scene(SceneSpec(seed=17, min_objects=3, max_objects=3))
        for i in range(len(labels)):
            for j in range(i + 1, len(labels)):
                assert iou(labels[i].bbox, labels[j].bbox) <= 0.1

    def test_impossible_placement_errors(self):
        spec = SceneSpec(
            width=40, height=40, min_objects=12, max_objects=12, min_size=30, max_size=38, seed=1
        )
        with pytest.raises(ValueError, match="reduce"):
            generate_synthetic_scene(spec)

    def test_dataset_layout(self, tmp_path):
        stems = write_scene_dataset(tmp_path, SceneSpec(seed=0), images=3)
        assert stems == ["000000", "000001", "000002"]
        assert (tmp_path / "dataset.txt").read_text() == "000000\n000001\n000002\n"
        for stem in stems:
            img = load_ppm((tmp_path / "images" / f"{stem}.ppm").read_bytes())
            labels = parse_label_file((tmp_path / "labels" / f"{stem}.txt").read_text())
            assert img.shape == (128, 128, 3)
            assert labels  # every scene has at least one object

    def test_bad_spec_rejected(self):
        with pytest.raises(ValueError):
            SceneSpec(min_size=0)
        with pytest.raises(ValueError):
            SceneSpec(max_size=300, width=128, height=128)
        with pytest.raises(ValueError):
            SceneSpec(min_objects=5, max_objects=2)
