import numpy as np
import pytest

from splatforge.perf import (
    PerfConfig,
    model_frame,
    rate_report,
    stage1_ops,
    tile_histogram,
)
from splatforge.raster import FrameStats, RenderOptions, RenderStats, SorterUsage, render_frame
from splatforge.scene import CullStats
from splatforge.synthetic import default_camera, gen_synthetic
from conftest import random_cloud
from _oracles import cull_recount, pixel_pair_recount


def make_stats(
    n_total=1000,
    culled=400,
    width=1920,
    height=1080,
    blended=50_000,
    sorter_cycles_total=80_000,
    tile_counts=None,
    path="zeroskip",
) -> FrameStats:
    counts = np.zeros(120 * 68, dtype=np.int64) if tile_counts is None else tile_counts
    return FrameStats(
        width=width,
        height=height,
        tile_size=16,
        path=path,
        n_total=n_total,
        cull=CullStats(n_total, culled),
        n_projected=n_total - culled,
        tile_counts=counts,
        render=RenderStats(blended=blended, alpha_pruned=10_000, early_terminated=5_000),
        sorter_cycles_total=sorter_cycles_total,
        sorter_usage=SorterUsage(),
    )


class TestStage1Ops:
    def test_per_gaussian_rows(self):
        assert stage1_ops(1, "zeroskip") == 94
        assert stage1_ops(1, "full") == 198

    def test_zero(self):
        assert stage1_ops(0) == 0

    def test_linear(self):
        assert stage1_ops(1000) == 94_000
        assert stage1_ops(1000, "full") == 198_000


class TestModelFrame:
    def test_throughput_arithmetic_exact(self):
        # fps comes out exactly 129 when clock = 129 * frame_cycles
        stats = make_stats()
        probe = model_frame(stats, clock_hz=800e6)
        report = model_frame(stats, clock_hz=129.0 * probe.frame_cycles)
        assert report.fps == pytest.approx(129.0, abs=1e-9)
        assert report.mpix_per_s == pytest.approx(1920 * 1080 * 129 / 1e6, abs=1e-6)
        assert round(report.mpix_per_s, 1) == 267.5
        assert report.n_tiles == 8160 and (report.tiles_x, report.tiles_y) == (120, 68)

    def test_operating_point_example(self):
        # 6.2e6-cycle frame at 800 MHz is a ~129 FPS operating point
        assert 800e6 / 6.2e6 == pytest.approx(129.03, abs=0.01)

    def test_identities_hold(self):
        stats = make_stats(n_total=123_456, culled=70_000, blended=2_000_000)
        report = model_frame(stats, clock_hz=800e6)
        assert report.fps == pytest.approx(report.clock_hz / report.frame_cycles)
        assert report.mpix_per_s == pytest.approx(report.fps * 1920 * 1080 / 1e6)

    def test_zero_gaussians_only_fill_drain(self):
        cfg = PerfConfig()
        stats = make_stats(n_total=0, culled=0, blended=0, sorter_cycles_total=0)
        report = model_frame(stats, cfg=cfg)
        assert report.frame_cycles == cfg.fill_drain_cycles
        for s in report.stages:
            assert s.cycles == 0 and s.items == 0

    def test_monotone_in_gaussian_count(self):
        prev = 0
        for n in (0, 1000, 10_000, 100_000, 1_000_000):
            stats = make_stats(n_total=n, culled=n // 3, blended=n * 4, sorter_cycles_total=n * 2)
            cycles = model_frame(stats).frame_cycles
            assert cycles >= prev
            prev = cycles

    def test_stage1_uses_path_and_utilization(self):
        cfg = PerfConfig(stage1_utilization=0.516, macs=6)
        stats = make_stats(n_total=1000, culled=0, path="zeroskip")
        report = model_frame(stats, cfg=cfg)
        s1 = report.stages[1]
        assert s1.cycles == int(np.ceil(94 * 1000 / (6 * 0.516)))
        assert s1.utilization == pytest.approx(0.516)
        full = model_frame(make_stats(n_total=1000, culled=0, path="full"), cfg=cfg)
        assert full.stages[1].cycles > s1.cycles

    def test_json_round_trip(self):
        import json

        report = model_frame(make_stats())
        parsed = json.loads(report.to_json())
        assert parsed["tiles"]["total"] == 8160
        assert parsed["frame_cycles"] == report.frame_cycles


class TestTileHistogram:
    def test_bins_of_100(self):
        counts = np.array([0, 5, 99, 100, 101, 250, 1000])
        hist = dict(tile_histogram(counts))
        assert hist[0] == 3
        assert hist[100] == 2
        assert hist[200] == 1
        assert hist[1000] == 1

    def test_empty(self):
        assert tile_histogram(np.zeros(0, dtype=np.int64)) == []


class TestRateReport:
    def test_all_visible_scene_zero_culling(self):
        cloud = gen_synthetic("sphere", 300, seed=2)
        cam = default_camera()  # whole sphere in front of this camera
        res = render_frame(cloud, cam)
        rates = rate_report(res.stats)
        assert rates.culling_rate == 0.0
        assert rates.cull_total == 300

    def test_fully_behind_camera_rate_one(self):
        cloud = gen_synthetic("grid", 64, seed=3)
        cloud.means[:, 2] = -100.0
        from splatforge.scene import CameraView

        cam = CameraView(np.eye(4, dtype=np.float32), 200, 200, 64, 48, 128, 96)
        res = render_frame(cloud, cam)
        assert rate_report(res.stats).culling_rate == 1.0

    def test_rates_match_recounts_exactly(self):
        cloud = random_cloud(150, seed=31, span=4.0)
        cam = default_camera(width=96, height=64)
        opts = RenderOptions(tau=1e-3)
        res = render_frame(cloud, cam, opts)
        rates = rate_report(res.stats)

        assert rates.cull_culled == cull_recount(cloud, cam)
        blended, pruned, terminated = pixel_pair_recount(
            res.splats, cam, tau=opts.tau, alpha_min=opts.alpha_min
        )
        assert rates.pairs["blended"] == blended
        assert rates.pairs["alpha_pruned"] == pruned
        assert rates.pairs["early_terminated"] == terminated
        total = blended + pruned + terminated
        assert rates.termination_rate == pytest.approx(terminated / total)

    def test_histogram_matches_bin_counts(self):
        cloud = gen_synthetic("clustered", 2000, seed=5)
        cam = default_camera(width=320, height=192)
        res = render_frame(cloud, cam)
        hist = dict(rate_report(res.stats).tile_histogram)
        assert sum(hist.values()) == res.stats.n_tiles
        recount = {}
        for c in res.stats.tile_counts:
            b = int(c // 100) * 100
            recount[b] = recount.get(b, 0) + 1
        assert hist == recount
