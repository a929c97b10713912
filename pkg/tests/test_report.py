import numpy as np
import pytest

from sudonet import activations as act
from sudonet import datasets as ds
from sudonet import experiments as ex
from sudonet import network as nw
from sudonet import report


def reparse(data: bytes):
    """Minimal netpbm reader written independently of sudonet.netpbm (no comments)."""
    parts = data.split(maxsplit=4)
    magic, w, h, maxval, raster = parts[0], int(parts[1]), int(parts[2]), int(parts[3]), parts[4]
    ch = {b"P5": 1, b"P6": 3}[magic]
    assert maxval == 255 and len(raster) == w * h * ch
    arr = np.frombuffer(raster, dtype=np.uint8)
    return magic, arr.reshape((h, w, 3) if ch == 3 else (h, w))


def test_constant_output_surface():
    img = report.render_decision_surface(lambda xy: np.full((len(xy), 1), 0.3), 20)
    assert img.shape == (20, 20, 3)
    assert np.all(img == report.RED)


def test_perfect_labeler_gives_16_blocks(tmp_path):
    res = 200
    img = report.render_decision_surface(lambda xy: ds.checkerboard_label(xy[:, 0], xy[:, 1], 4), res)
    red = np.all(img == report.RED, axis=2)
    # every 50 x 50 block is uniform and neighbours alternate
    blocks = red.reshape(4, 50, 4, 50).transpose(0, 2, 1, 3).reshape(16, -1)
    assert np.all(blocks.all(axis=1) | (~blocks).all(axis=1))
    pattern = blocks[:, 0].reshape(4, 4)
    assert np.all(pattern[:, 1:] != pattern[:, :-1]) and np.all(pattern[1:] != pattern[:-1])
    # bottom-left is the (-1, -1) cell, which is positive
    assert pattern[3, 0]
    report.write_ppm(tmp_path / "s.ppm", img)
    magic, back = reparse((tmp_path / "s.ppm").read_bytes())
    assert magic == b"P6" and back.shape == (res, res, 3)
    assert np.array_equal(back, img)


def test_surface_accepts_network():
    net = nw.init(nw.mlp(2, [3], act.TANH, 1, act.TANH), 0)
    img = report.render_decision_surface(net, 7)
    assert img.shape[0] * img.shape[1] == 49
    with pytest.raises(ValueError):
        report.render_decision_surface(nw.init(nw.mlp(2, [3], act.TANH, 2), 0), 5)


def test_reconstruction_gray_and_dims(tmp_path):
    gray = report.render_reconstruction(lambda xy: np.zeros((len(xy), 1)), (150, 150))
    assert gray.size == 22_500 and set(np.unique(gray)) <= {127, 128}
    report.write_pgm(tmp_path / "r.pgm", gray)
    magic, back = reparse((tmp_path / "r.pgm").read_bytes())
    assert magic == b"P5" and np.array_equal(back, gray)


def test_perfect_memorization_round_trip():
    img = np.random.default_rng(0).integers(0, 256, size=(12, 17)).astype(np.uint8)
    d = ds.gen_memorization(img)
    lookup = {tuple(xy): t for xy, t in zip(d.inputs, d.targets.ravel())}
    out = report.render_reconstruction(lambda xy: np.array([lookup[tuple(p)] for p in xy]), img.shape)
    assert np.max(np.abs(out.astype(int) - img.astype(int))) <= 1


def test_histogram_csv_pass_through(tmp_path):
    data = ds.gen_checkerboard(100, seed=0)
    for a in (act.sudo(4), act.TANH):
        h = ex.collect_activation_histogram(nw.init(nw.mlp(2, [5], a, 1), 1), data)
        path = tmp_path / f"{a.name}.csv"
        report.emit_histogram_csv(h, path)
        assert path.read_text().startswith("# columns:")
        rows = report.read_histogram_csv(path)
        assert len(rows) == len(h.counts)
        assert [r[0] for r in rows] == h.labels
        assert [r[2] for r in rows] == h.counts.tolist()
    assert [r[1] for r in report.read_histogram_csv(tmp_path / "sudo-4.csv")] == act.level_values(act.sudo(4)).tolist()


def test_fit_curve_csv(tmp_path):
    run = ex.run_parabola_demo(2, act.sudo(2), epochs=20, every=10)
    path = tmp_path / "fit.csv"
    report.emit_fit_curve_csv(run.x, run.target, run.dumps, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# columns:") and lines[1] == "epoch,x,target,prediction"
    assert len(lines) == 2 + 3 * len(run.x)
    last = [float(l.split(",")[3]) for l in lines if l.startswith("20,")]
    assert last == run.dumps[20].tolist()
