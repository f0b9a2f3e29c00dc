from __future__ import annotations

import numpy as np
import pytest
from PIL import Image, ImageDraw

from convext.formats import read_tensor_file
from convext.jobs import ExtractionJob, QueryCrop, run_job
from convext.keypoints import detect_keypoints
from convext.network import LAYER_STRIDE, ActivationExtractor


@pytest.fixture(scope="module")
def extractor():
    return ActivationExtractor(weights="random", seed=0)


def textured_image(w=640, h=480, seed=1):
    rng = np.random.default_rng(seed)
    base = (rng.random((h, w)) * 255).astype(np.uint8)
    img = Image.fromarray(base).convert("RGB")
    draw = ImageDraw.Draw(img)
    for i in range(8):
        x, y = 40 + 60 * i % (w - 80), (37 * i) % (h - 80)
        draw.rectangle([x, y, x + 50, y + 50], outline=(255, 255, 255), width=3)
        draw.ellipse([x + 10, y + 10, x + 40, y + 40], fill=(0, 0, 0))
    return img


class TestShapes:
    def test_conv5_3_shape_contract_1024x768(self, extractor):
        grids = extractor.activations(Image.new("RGB", (1024, 768)), ["conv5_3", "conv4_3"])
        assert grids["conv5_3"].shape == (48, 64, 512)  # (H, W, K) = 64x48x512
        assert grids["conv4_3"].shape == (96, 128, 512)

    def test_stride_arithmetic_small(self, extractor):
        grids = extractor.activations(Image.new("RGB", (224, 224)), ["conv5_3", "pool5"])
        assert grids["conv5_3"].shape == (224 // LAYER_STRIDE["conv5_3"],) * 2 + (512,)
        assert grids["pool5"].shape == (7, 7, 512)

    def test_unknown_layer_rejected(self, extractor):
        with pytest.raises(ValueError, match="unknown layer"):
            extractor.activations(Image.new("RGB", (224, 224)), ["fc7"])


class TestKeypoints:
    def test_textured_image_has_keypoints(self):
        pts = detect_keypoints(textured_image())
        assert pts.shape[0] > 0
        assert (pts[:, 0] >= 1).all() and (pts[:, 0] <= 640).all()
        assert (pts[:, 1] >= 1).all() and (pts[:, 1] <= 480).all()

    def test_flat_image_has_none(self):
        pts = detect_keypoints(Image.new("RGB", (320, 240), (100, 100, 100)))
        assert pts.shape == (0, 2)


class TestRunJob:
    def test_writes_all_files(self, extractor, tmp_path):
        src = tmp_path / "img001.png"
        textured_image(448, 320).save(src)
        job = ExtractionJob(
            images=(src,),
            layers=("conv5_3", "conv5_2"),
            max_dim=448,
            keypoints=True,
            out_dir=tmp_path / "out",
        )
        written = run_job(job, extractor)
        names = sorted(p.name for p in written)
        assert names == ["img001.conv5_2.cft", "img001.conv5_3.cft", "img001.kpt"]
        grid = read_tensor_file(tmp_path / "out" / "img001.conv5_3.cft")
        assert grid.shape == (320 // 16, 448 // 16, 512)

    def test_flat_image_writes_empty_keypoints(self, extractor, tmp_path):
        src = tmp_path / "flat.png"
        Image.new("RGB", (320, 320), (90, 90, 90)).save(src)
        job = ExtractionJob(
            images=(src,), layers=("pool5",), max_dim=320, keypoints=True, out_dir=tmp_path / "o"
        )
        run_job(job, extractor)
        from convext.formats import read_keypoint_file

        _, _, pts = read_keypoint_file(tmp_path / "o" / "flat.kpt")
        assert pts.shape == (0, 2)

    def test_query_crop_before_resize(self, extractor, tmp_path):
        src = tmp_path / "scene.png"
        textured_image(800, 600).save(src)
        job = ExtractionJob(
            images=(src,),
            layers=("conv5_3",),
            max_dim=448,
            keypoints=False,
            out_dir=tmp_path / "o",
            query_crops={"q1": QueryCrop("scene", (100.0, 100.0, 548.0, 436.0))},
        )
        run_job(job, extractor)
        # crop is 448x336, already at max dim, so no further resize
        grid = read_tensor_file(tmp_path / "o" / "q1.conv5_3.cft")
        assert grid.shape == (336 // 16, 448 // 16, 512)

    def test_missing_crop_source(self, extractor, tmp_path):
        src = tmp_path / "a.png"
        textured_image(300, 300).save(src)
        job = ExtractionJob(
            images=(src,),
            layers=("conv5_3",),
            max_dim=224,
            keypoints=False,
            out_dir=tmp_path / "o",
            query_crops={"q": QueryCrop("missing", (0, 0, 10, 10))},
        )
        with pytest.raises(FileNotFoundError, match="missing"):
            run_job(job, extractor)

    def test_deterministic_bytes(self, extractor, tmp_path):
        src = tmp_path / "img.png"
        textured_image(320, 256, seed=5).save(src)
        payloads = []
        for run in ("r1", "r2"):
            job = ExtractionJob(
                images=(src,),
                layers=("conv5_3",),
                max_dim=320,
                keypoints=True,
                out_dir=tmp_path / run,
            )
            run_job(job, extractor)
            payloads.append(
                [
                    (tmp_path / run / "img.conv5_3.cft").read_bytes(),
                    (tmp_path / run / "img.kpt").read_bytes(),
                ]
            )
        assert payloads[0] == payloads[1]


class TestCrossPackageRoundTrip:
    def test_consumer_reads_extractor_files(self, extractor, tmp_path):
        convagg_storage = pytest.importorskip("convagg.storage")
        src = tmp_path / "img.png"
        textured_image(384, 256, seed=9).save(src)
        job = ExtractionJob(
            images=(src,),
            layers=("conv5_3",),
            max_dim=384,
            keypoints=True,
            out_dir=tmp_path / "o",
        )
        run_job(job, extractor)
        tensor = convagg_storage.load_tensor(tmp_path / "o" / "img.conv5_3.cft")
        own = read_tensor_file(tmp_path / "o" / "img.conv5_3.cft")
        assert (tensor.width, tensor.height, tensor.channels) == (24, 16, 512)
        assert np.array_equal(tensor.data, own)
        kps = convagg_storage.load_keypoints(tmp_path / "o" / "img.kpt")
        assert kps.image_width == 384 and kps.image_height == 256
        # and the consumer's masking pipeline accepts them end to end
        from convagg.masking import apply_mask, compute_sift_mask

        mask = compute_sift_mask(tensor, kps)
        rows = apply_mask(tensor, mask)
        assert rows.shape[1] == 512 and rows.shape[0] == len(mask)


def test_cli_extract(tmp_path, capsys):
    from convext.cli import main

    src_dir = tmp_path / "imgs"
    src_dir.mkdir()
    textured_image(300, 260, seed=3).save(src_dir / "one.png")
    rc = main(
        [
            "extract",
            str(src_dir),
            "--layers",
            "conv5_3",
            "--max-dim",
            "224",
            "--keypoints",
            "--weights",
            "random",
            "--out",
            str(tmp_path / "out"),
        ]
    )
    assert rc == 0
    assert (tmp_path / "out" / "one.conv5_3.cft").is_file()
    assert (tmp_path / "out" / "one.kpt").is_file()
