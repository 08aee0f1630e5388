import math

import numpy as np
import pytest

import vidtrack as vt


def test_geometry():
    a = vt.Box(0, 0, 10, 10)
    assert vt.iou(a, vt.Box(5, 5, 15, 15)) == pytest.approx(25 / 175)
    d = vt.encode(vt.Box.from_center(10, 20, 4, 8), vt.Box.from_center(12, 16, 8, 4))
    assert d.as_tuple() == pytest.approx((0.5, -0.5, math.log(2), -math.log(2)))
    back = vt.decode(vt.Box.from_center(10, 20, 4, 8), d)
    assert (back.cx, back.cy, back.w, back.h) == pytest.approx((12, 16, 8, 4))
    assert vt.expand(vt.Box.from_center(0, 0, 2, 2), 2) == vt.Box(-2, -2, 2, 2)
    with pytest.raises(ValueError):
        vt.Box(0, 0, -1, 1)


def test_kernels():
    rng = np.random.default_rng(0)
    t = rng.standard_normal((3, 7, 7))
    s = rng.standard_normal((3, 21, 21))
    out = vt.depthwise_correlate(t, s)
    assert out.shape == (3, 15, 15)
    assert out[1, 4, 9] == pytest.approx(np.sum(t[1] * s[1, 4:11, 9:16]))

    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert vt.roi_align_full_avg(m, vt.Box(0, 0, 2, 2), 1, 1, 1.0)[0, 0, 0] == pytest.approx(2.5)
    assert not vt.roi_align_nearest4(m, vt.Box(50, 50, 60, 60), 2, 2, 1.0).any()
    with pytest.raises(ValueError):
        vt.depthwise_correlate(np.zeros((2, 3, 3)), np.zeros((3, 5, 5)))


def test_smooth_l1():
    assert vt.smooth_l1(0.5) == 0.125
    assert vt.smooth_l1(2.0) == 1.5
    assert vt.smooth_l1_grad(-3.0) == -1.0


def test_merge_and_link():
    cfg = vt.PipelineConfig()
    tracked = vt.Detection(frame=1, score=0.6, box=vt.Box(0, 0, 20, 10), track_id=3)
    det = vt.Detection(frame=1, score=0.9, box=vt.Box(0, 0, 16, 10))
    merged, next_id = vt.tfd_merge([tracked], [det], cfg, 7)
    assert len(merged) == 1 and next_id == 7
    cfg.t_merge = 0.9
    merged, next_id = vt.tfd_merge([tracked], [det], cfg, 7)
    assert len(merged) == 2 and merged[1].track_id == 7 and next_id == 8

    def d(t, box, score):
        return vt.Detection(frame=t, score=score, box=vt.Box(*box))

    video = vt.VideoDetectionSet("v", [
        [d(0, (0, 0, 10, 10), 0.9), d(0, (20, 20, 30, 30), 0.5)],
        [d(1, (1, 1, 11, 11), 0.4), d(1, (21, 21, 31, 31), 0.8)],
        [d(2, (2, 2, 12, 12), 0.7)],
    ])
    g = vt.build_graph_seqnms(video)
    path = vt.best_path(g, [[x.score for x in f] for f in video.frames])
    assert path.nodes == [0, 0, 0] and path.path_score == pytest.approx(2.0)
    out = vt.rescore_and_suppress(video, g, 0.45)
    assert [x.score for x in out.frames[0]] == pytest.approx([2 / 3, 0.65])


def test_end_to_end_variants():
    g = vt.generate_preset("noiseless", 1)
    for variant in ("detector", "seqnms", "tfd+seqnms", "tfd+seqtracknms"):
        final = vt.run_variant(g.dets, variant, gt=g.gt, noise=0.0)
        assert vt.evaluate_map([final], [g.gt]).map == 1.0

    deg = vt.generate_preset("degraded", 1)
    det = vt.evaluate_map([vt.run_variant(deg.dets, "detector")], [deg.gt]).map
    seq = vt.evaluate_map([vt.run_variant(deg.dets, "seqnms")], [deg.gt]).map
    assert seq > det
    with pytest.raises(ValueError):
        vt.run_variant(deg.dets, "tfd+seqnms")


def test_files(tmp_path):
    g = vt.generate_preset("degraded", 2)
    path = tmp_path / "dets.jsonl"
    vt.save_detections(path, [g.dets])
    assert vt.load_detections(path)[0] == g.dets
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"video":"v","frame":0,"class":0,"score":3,"box":[0,0,1,1]}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        vt.load_detections(bad)
