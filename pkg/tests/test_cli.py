import numpy as np
import pytest

from lunet import checkpoint
from lunet.cli import main
from lunet.data import (
    Pipeline,
    deprocess,
    load_csv,
    preprocess,
    read_pgm,
    save_csv,
    synthetic_blobs,
    write_idx,
)
from lunet.model import forward, init_net, inverse
from lunet.train import TrainConfig, fit

SMALL_MIXTURE = """
[model]
layers = 3
seed = 0
[train]
epochs = 2
batch_size = 64
lr0 = 0.5
seed = 0
[data]
kind = mixture
n_total = 1000
[output]
run_dir = {run}
emit_samples = 5
"""


@pytest.fixture
def mixture_cfg(tmp_path):
    path = tmp_path / "mix.ini"
    path.write_text(SMALL_MIXTURE.format(run=tmp_path / "run"))
    return path


@pytest.fixture
def identity_ckpt(tmp_path):
    path = tmp_path / "ident.lunet"
    checkpoint.save(path, init_net(1, 2, scheme="zeros"))
    return path


@pytest.fixture(scope="module")
def image_setup(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    imgs = synthetic_blobs(60, seed=3)
    write_idx(imgs, root / "img.idx", root / "lab.idx")
    net = init_net(3, 784, seed=0)
    fit(net, preprocess(imgs).vectors, TrainConfig(epochs=1, batch_size=30, lr0=0.05, gamma=100.0))
    checkpoint.save(root / "img.lunet", net)
    return root, imgs, net


def test_train_writes_run_directory(mixture_cfg, tmp_path, capsys):
    assert main(["train", "--config", str(mixture_cfg)]) == 0
    run = tmp_path / "run"
    assert {p.name for p in run.iterdir()} == {"config.ini", "metrics.csv", "model.lunet", "samples.csv"}
    lines = (run / "metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,lr,train_nll_nats,wallclock_s" and len(lines) == 3
    assert "test NLL" in capsys.readouterr().out
    assert load_csv(run / "samples.csv").shape == (5, 2)


def test_train_is_byte_reproducible(mixture_cfg, tmp_path):
    assert main(["train", "--config", str(mixture_cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["train", "--config", str(mixture_cfg), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/model.lunet").read_bytes() == (tmp_path / "b/model.lunet").read_bytes()
    assert main(["train", "--config", str(mixture_cfg), "--out", str(tmp_path / "c"), "--seed", "1"]) == 0
    assert (tmp_path / "a/model.lunet").read_bytes() != (tmp_path / "c/model.lunet").read_bytes()


def test_train_config_error_writes_nothing(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(SMALL_MIXTURE.format(run=tmp_path / "run").replace("lr0 = 0.5", "lr0 = -1"))
    assert main(["train", "--config", str(cfg)]) == 2
    assert not (tmp_path / "run").exists()
    assert "lr0" in capsys.readouterr().err


def test_train_divergence_exit_code(tmp_path):
    cfg = tmp_path / "div.ini"
    text = SMALL_MIXTURE.format(run=tmp_path / "run").replace("lr0 = 0.5", "lr0 = 1e300")
    cfg.write_text(text.replace("seed = 0\n[data]", "seed = 0\nclip_threshold = 1e300\n[data]"))
    assert main(["train", "--config", str(cfg)]) == 4


def test_eval_identity_on_standard_normal(identity_ckpt, tmp_path, capsys):
    x = np.random.default_rng(0).standard_normal((20_000, 2))
    save_csv(tmp_path / "x.csv", x)
    assert main(["eval", str(identity_ckpt), "--csv", str(tmp_path / "x.csv"), "--out", str(tmp_path)]) == 0
    ld = load_csv(tmp_path / "log_density.csv")[:, 0]
    # E[NLL] = ln(2 pi) + 1; the NLL has variance D/2 = 1 here
    assert -ld.mean() == pytest.approx(np.log(2 * np.pi) + 1, abs=3 / np.sqrt(20_000))
    assert "nats" in capsys.readouterr().out


def test_eval_rejects_bad_checkpoints(identity_ckpt, tmp_path):
    save_csv(tmp_path / "x.csv", np.zeros((3, 2)))
    raw = identity_ckpt.read_bytes()
    (tmp_path / "trunc.lunet").write_bytes(raw[:-4])
    assert main(["eval", str(tmp_path / "trunc.lunet"), "--csv", str(tmp_path / "x.csv")]) == 5
    (tmp_path / "magic.lunet").write_bytes(b"NOTNET" + raw[6:])
    assert main(["eval", str(tmp_path / "magic.lunet"), "--csv", str(tmp_path / "x.csv")]) == 5
    save_csv(tmp_path / "x3.csv", np.zeros((3, 3)))
    assert main(["eval", str(identity_ckpt), "--csv", str(tmp_path / "x3.csv")]) == 3
    assert main(["eval", str(tmp_path / "missing.lunet"), "--csv", str(tmp_path / "x.csv")]) == 5


def test_eval_images_reports_bits(image_setup, tmp_path, capsys):
    root, _, _ = image_setup
    code = main(["eval", str(root / "img.lunet"), "--idx-images", str(root / "img.idx"),
                 "--idx-labels", str(root / "lab.idx"), "--bits-per-pixel", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "logit space" in out and "dequantized" in out
    table = load_csv(tmp_path / "log_density.csv")
    assert table.shape == (60, 3)


def test_sample_zero_gives_empty_file(identity_ckpt, tmp_path):
    assert main(["sample", str(identity_ckpt), "--n", "0", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "samples.csv").read_text() == ""


def test_sample_is_deterministic(identity_ckpt, tmp_path):
    for d in ("a", "b"):
        assert main(["sample", str(identity_ckpt), "--n", "7", "--seed", "3", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a/samples.csv").read_bytes() == (tmp_path / "b/samples.csv").read_bytes()


def test_sample_images_are_valid_pgm(image_setup, tmp_path):
    root, _, _ = image_setup
    assert main(["sample", str(root / "img.lunet"), "--n", "4", "--image", "--out", str(tmp_path)]) == 0
    files = sorted(tmp_path.glob("sample_*.pgm"))
    assert len(files) == 4
    for f in files:
        assert f.read_bytes().startswith(b"P5\n28 28\n255\n")
        assert read_pgm(f).shape == (28, 28)
    assert read_pgm(tmp_path / "samples_grid.pgm").shape == (28, 4 * 28)


def test_sample_image_needs_square_dim(identity_ckpt, tmp_path):
    checkpoint.save(tmp_path / "d3.lunet", init_net(2, 3))
    assert main(["sample", str(tmp_path / "d3.lunet"), "--n", "1", "--image", "--out", str(tmp_path)]) == 3


def test_sample_singular_checkpoint(tmp_path):
    net = init_net(2, 2)
    net.layers[0].U.upper[0] = 0.0
    checkpoint.save(tmp_path / "sing.lunet", net)
    assert main(["sample", str(tmp_path / "sing.lunet"), "--n", "2", "--out", str(tmp_path)]) == 4


def test_interpolate_endpoints_are_reconstructions(image_setup, tmp_path):
    root, imgs, net = image_setup
    args = ["interpolate", str(root / "img.lunet"), "--idx-images", str(root / "img.idx"),
            "--idx-labels", str(root / "lab.idx"), "--idx-a", "2", "--idx-b", "5"]
    assert main(args + ["--steps", "2", "--out", str(tmp_path / "two")]) == 0
    vecs = preprocess(imgs, Pipeline(noise_seed=0)).vectors
    for frame, idx in zip(sorted((tmp_path / "two").glob("frame_*.pgm")), (2, 5)):
        expected = deprocess(inverse(net, forward(net, vecs[idx])[0])).reshape(28, 28)
        assert np.array_equal(read_pgm(frame), expected)
        assert np.array_equal(read_pgm(frame).ravel(), imgs.images[idx])
    assert main(args + ["--steps", "10", "--out", str(tmp_path / "ten")]) == 0
    assert [f.name for f in sorted((tmp_path / "ten").glob("*.pgm"))] == [f"frame_{i:03d}.pgm" for i in range(10)]


def test_interpolate_same_index(image_setup, tmp_path):
    root, _, _ = image_setup
    assert main(["interpolate", str(root / "img.lunet"), "--idx-images", str(root / "img.idx"),
                 "--idx-labels", str(root / "lab.idx"), "--idx-a", "1", "--idx-b", "1",
                 "--steps", "4", "--out", str(tmp_path)]) == 0
    frames = [read_pgm(f) for f in sorted(tmp_path.glob("frame_*.pgm"))]
    assert len(frames) == 4 and all(np.array_equal(f, frames[0]) for f in frames)


def test_interpolate_index_out_of_range(identity_ckpt, tmp_path):
    save_csv(tmp_path / "x.csv", np.zeros((3, 2)))
    assert main(["interpolate", str(identity_ckpt), "--csv", str(tmp_path / "x.csv"),
                 "--idx-a", "0", "--idx-b", "3", "--out", str(tmp_path)]) == 3


def test_diagnose_identity(identity_ckpt, tmp_path, capsys):
    save_csv(tmp_path / "x.csv", np.random.default_rng(0).standard_normal((200, 2)))
    assert main(["diagnose", str(identity_ckpt), "--csv", str(tmp_path / "x.csv"), "--out", str(tmp_path),
                 "--baseline", str(identity_ckpt)]) == 0
    cond = load_csv(tmp_path / "condition.csv")
    np.testing.assert_allclose(cond[:, 1:3], 1.0, atol=1e-6)
    assert len(list(tmp_path.glob("projection_seed*.csv"))) == 10
    assert len(list(tmp_path.glob("histogram_seed*.csv"))) == 10
    hist = load_csv(tmp_path / "histogram_seed0.csv")
    assert hist[:, 1].sum() == 200
    assert "0 of 10" in capsys.readouterr().out


def test_diagnose_flags_singular_layer(tmp_path):
    net = init_net(2, 2)
    net.layers[0].U.upper[0] = 0.0
    checkpoint.save(tmp_path / "sing.lunet", net)
    save_csv(tmp_path / "x.csv", np.zeros((1, 2)))
    # forward still works; the report marks the layer instead of aborting
    assert main(["diagnose", str(tmp_path / "sing.lunet"), "--csv", str(tmp_path / "x.csv"),
                 "--seeds", "0", "--out", str(tmp_path)]) == 0
    assert load_csv(tmp_path / "condition.csv")[0, 3] == 1


def test_eval_from_config_data(mixture_cfg, tmp_path):
    assert main(["train", "--config", str(mixture_cfg)]) == 0
    ckpt = tmp_path / "run/model.lunet"
    assert main(["eval", str(ckpt), "--config", str(mixture_cfg), "--out", str(tmp_path)]) == 0
    assert load_csv(tmp_path / "log_density.csv").shape == (100, 1)


def test_threads_flag(identity_ckpt, tmp_path):
    assert main(["sample", str(identity_ckpt), "--n", "3", "--threads", "1", "--out", str(tmp_path)]) == 0
