import json
import os

import numpy as np
import pytest

from splatforge.cli import main
from splatforge.images import psnr, read_ppm, write_ppm
from splatforge.ply import load_ply


@pytest.fixture
def scene(tmp_path):
    assert main(["gen", "--kind", "sphere", "--n", "500", "--seed", "3",
                 "--out", str(tmp_path / "scene.ply"),
                 "--camera-out", str(tmp_path / "cam.json")]) == 0
    return tmp_path


class TestGen:
    def test_zero_points(self, tmp_path):
        out = tmp_path / "empty.ply"
        assert main(["gen", "--n", "0", "--out", str(out)]) == 0
        assert len(load_ply(out)) == 0

    def test_reproducible(self, tmp_path):
        a, b = tmp_path / "a.ply", tmp_path / "b.ply"
        main(["gen", "--n", "100", "--seed", "9", "--out", str(a)])
        main(["gen", "--n", "100", "--seed", "9", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_kind_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "--kind", "torus", "--out", str(tmp_path / "x.ply")])
        assert exc.value.code == 2


class TestRender:
    def test_outputs_and_determinism(self, scene):
        args = ["render", str(scene / "scene.ply"), "--camera", str(scene / "cam.json"),
                "--out", str(scene / "f1")]
        assert main(args) == 0
        assert main(["render", str(scene / "scene.ply"), "--camera", str(scene / "cam.json"),
                     "--out", str(scene / "f2")]) == 0
        assert (scene / "f1.ppm").read_bytes() == (scene / "f2.ppm").read_bytes()
        report = json.loads((scene / "f1.json").read_text())
        assert "perf" in report and "rates" in report

    def test_missing_input_is_data_error(self, tmp_path, capsys):
        assert main(["render", str(tmp_path / "nope.ply")]) == 3
        assert "error:" in capsys.readouterr().err

    def test_threads_env_and_flag_agree(self, scene, monkeypatch):
        base = ["render", str(scene / "scene.ply"), "--camera", str(scene / "cam.json")]
        assert main(base + ["--out", str(scene / "t1"), "--threads", "8"]) == 0
        monkeypatch.setenv("SPLATFORGE_THREADS", "4")
        assert main(base + ["--out", str(scene / "t2")]) == 0
        assert (scene / "t1.ppm").read_bytes() == (scene / "t2.ppm").read_bytes()

    def test_1080p_grid_reported(self, scene):
        args = ["render", str(scene / "scene.ply"), "--camera", str(scene / "cam.json"),
                "--width", "1920", "--height", "1080", "--out", str(scene / "hd")]
        assert main(args) == 0
        report = json.loads((scene / "hd.json").read_text())
        assert report["perf"]["tiles"]["total"] == 8160

    def test_default_camera_when_absent(self, scene):
        assert main(["render", str(scene / "scene.ply"), "--out", str(scene / "auto")]) == 0
        assert (scene / "auto.ppm").exists()

    def test_trajectory_renders_numbered_frames(self, scene):
        cams = json.loads((scene / "cam.json").read_text())["cameras"]
        (scene / "two.json").write_text(json.dumps({"cameras": cams * 2}))
        assert main(["render", str(scene / "scene.ply"), "--camera", str(scene / "two.json"),
                     "--out", str(scene / "seq")]) == 0
        assert (scene / "seq_000.ppm").exists() and (scene / "seq_001.ppm").exists()
        assert (scene / "seq_000.ppm").read_bytes() == (scene / "seq_001.ppm").read_bytes()


class TestCompressFlow:
    def test_compress_decompress_render(self, scene):
        splc = scene / "scene.splc"
        assert main(["compress", str(scene / "scene.ply"), "--out", str(splc),
                     "--camera", str(scene / "cam.json"), "--seed", "1"]) == 0
        report = json.loads((splc.with_suffix(".splc.json")).read_text())
        assert report["ratio"] > 1.0

        back = scene / "back.ply"
        assert main(["decompress", str(splc), "--out", str(back)]) == 0
        assert load_ply(back).sh_degree == 1

        assert main(["render", str(splc), "--camera", str(scene / "cam.json"),
                     "--out", str(scene / "c")]) == 0

    def test_bad_container_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.splc"
        bad.write_bytes(b"NOPE" + b"\x00" * 64)
        assert main(["decompress", str(bad), "--out", str(tmp_path / "o.ply")]) == 3
        assert "magic" in capsys.readouterr().err

    def test_custom_schedule(self, scene):
        splc = scene / "s.splc"
        assert main(["compress", str(scene / "scene.ply"), "--out", str(splc),
                     "--schedule", "0.5,0.5", "--degree", "2"]) == 0
        report = json.loads(splc.with_suffix(".splc.json").read_text())
        assert report["schedule"] == [0.5, 0.5]
        assert report["survivors_per_step"] == [500, 250, 125]


class TestAnalyze:
    def test_rates_and_csv(self, scene):
        assert main(["analyze", str(scene / "scene.ply"), "--camera", str(scene / "cam.json"),
                     "--out", str(scene / "an")]) == 0
        rates = json.loads((scene / "an.rates.json").read_text())
        assert "aggregate" in rates and len(rates["views"]) == 1
        lines = (scene / "an.tiles.csv").read_text().strip().splitlines()
        assert lines[0] == "bin_start,tiles"
        assert len(lines) >= 2


class TestSortbench:
    def test_pass_verdict(self, capsys):
        assert main(["sortbench", "--n", "2000", "--trials", "2", "--seed", "1"]) == 0
        assert "PASS" in capsys.readouterr().out


class TestPsnr:
    def test_identical_images_inf(self, tmp_path, capsys):
        img = np.random.default_rng(0).uniform(0, 1, (8, 8, 3))
        write_ppm(tmp_path / "a.ppm", img)
        write_ppm(tmp_path / "b.ppm", img)
        assert main(["psnr", str(tmp_path / "a.ppm"), str(tmp_path / "b.ppm")]) == 0
        assert capsys.readouterr().out.strip() == "inf"

    def test_half_gray_vs_black(self, tmp_path, capsys):
        h, w = 16, 16
        # work on quantized values so the file round trip is exact
        write_ppm(tmp_path / "g.ppm", np.full((h, w, 3), 128 / 255.0))
        write_ppm(tmp_path / "k.ppm", np.zeros((h, w, 3)))
        assert main(["psnr", str(tmp_path / "g.ppm"), str(tmp_path / "k.ppm")]) == 0
        got = float(capsys.readouterr().out)
        expected = 10 * np.log10(1.0 / ((128 / 255.0) ** 2))
        assert got == pytest.approx(expected, abs=1e-3)

    def test_analytic_quarter_mse(self):
        a = np.full((4, 4, 3), 0.5)
        b = np.zeros((4, 4, 3))
        assert psnr(a, b) == pytest.approx(10 * np.log10(4.0), abs=1e-9)

    def test_random_pair_matches_f64_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(0, 1, (32, 32, 3))
        b = rng.uniform(0, 1, (32, 32, 3))
        mse = float(np.mean((a - b) ** 2))
        assert psnr(a, b) == pytest.approx(10 * np.log10(1 / mse), rel=1e-12)


class TestGoldenRender:
    def test_matches_committed_golden(self, tmp_path):
        """Byte-level regression pin; float-level correctness is asserted
        against the f64 oracle in test_raster/test_acceptance."""
        import pathlib

        from splatforge.raster import RenderOptions, render_frame
        from splatforge.synthetic import default_camera, gen_synthetic

        cloud = gen_synthetic("clustered", 400, seed=2025)
        cam = default_camera(width=128, height=96)
        res = render_frame(cloud, cam, RenderOptions(background=(0.05, 0.05, 0.08)))
        out = tmp_path / "render.ppm"
        write_ppm(out, res.image)
        golden = pathlib.Path(__file__).parent / "data" / "golden_clustered_128x96.ppm"
        assert out.read_bytes() == golden.read_bytes()

    def test_single_gaussian_render_byte_equal_across_runs(self, tmp_path):
        base = ["gen", "--n", "1", "--seed", "4", "--out", str(tmp_path / "one.ply")]
        assert main(base) == 0
        for tag in ("a", "b"):
            assert main(["render", str(tmp_path / "one.ply"), "--out", str(tmp_path / tag)]) == 0
        assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()


class TestPpmFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        img = rng.uniform(0, 1, (5, 7, 3))
        p = tmp_path / "x.ppm"
        write_ppm(p, img)
        back = read_ppm(p)
        assert back.shape == (5, 7, 3)
        assert np.array_equal((back * 255).astype(np.uint8), np.rint(np.clip(img, 0, 1) * 255).astype(np.uint8))
