from pathlib import Path

import pytest

from lunet.config import ConfigError, dump_config, load_config, save_config
from lunet.train import ClipKind

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, text):
    path = tmp_path / "c.ini"
    path.write_text(text)
    return path


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.ini")))
def test_bundled_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.model.layers >= 2


def test_mixture_config_values():
    cfg = load_config(CONFIGS / "mixture_h12.ini")
    assert cfg.model.layers == 13
    assert cfg.train.clip_kind is ClipKind.EUCLIDEAN and cfg.train.momentum == 0.9
    assert cfg.data.centers == ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0))


def test_defaults_apply(tmp_path):
    cfg = load_config(write(tmp_path, "[model]\nlayers = 3\n"))
    assert cfg.train.batch_size == 128 and cfg.data.kind == "mixture" and cfg.data.sigma == 0.2


def test_round_trip(tmp_path):
    cfg = load_config(CONFIGS / "blobs_desk.ini", {"train.seed": "7"})
    save_config(cfg, tmp_path / "r.ini")
    again = load_config(tmp_path / "r.ini")
    assert again == cfg and again.train.seed == 7
    assert dump_config(again) == dump_config(cfg)


@pytest.mark.parametrize("text,match", [
    ("[train]\nlr0 = -1\n", "lr0"),
    ("[train]\nlearning_rate = 1\n", "unknown key"),
    ("[extra]\na = 1\n", "unknown section"),
    ("[model]\nlayers = many\n", "bad value"),
    ("[model]\ninit = glorot\n", "init"),
    ("[data]\nkind = blobs\nsigma = 0.3\n", "unknown key data.sigma"),
    ("[data]\nkind = idx\n", "train_images"),
    ("[data]\nkind = csv\n", "kind"),
    ("[data]\ncenters = 1,1; 2\n", "centers"),
    ("[train]\nclip_kind = l2\n", "clip_kind|l2"),
    ("not an ini file\n", "c.ini"),
])
def test_validation_errors(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        load_config(write(tmp_path, text))
