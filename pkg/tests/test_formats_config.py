import numpy as np
import pytest

from wssl import formats
from wssl.config import RunConfig, format_config, parse_config, parse_config_text, public_keys
from wssl.errors import ConfigError, InvalidInputError
from wssl.labels import TagTable
from wssl.pipeline import RegionSet


def test_pgm_roundtrip(tmp_path, rng):
    for maxval, dtype in ((255, np.uint8), (65535, np.uint16)):
        a = rng.integers(0, maxval + 1, size=(7, 9)).astype(dtype)
        p = tmp_path / f"m{maxval}.pgm"
        formats.write_pgm(p, a, maxval=maxval)
        assert np.array_equal(formats.read_pgm(p), a)


def test_pgm_rejects_out_of_range(tmp_path):
    with pytest.raises(InvalidInputError):
        formats.write_pgm(tmp_path / "x.pgm", np.array([[300]]), maxval=255)


def test_pgm_rejects_garbage(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(InvalidInputError):
        formats.read_pgm(p)


def test_ppm_read_back(tmp_path, rng):
    img = rng.integers(0, 256, size=(5, 6, 3)).astype(np.uint8)
    formats.write_ppm(tmp_path / "a.ppm", img)
    assert np.array_equal(formats.read_image(tmp_path / "a.ppm"), img)


def test_tags_roundtrip(tmp_path):
    tags = TagTable(["a", "b", "c"], [{0, 2}, {1}, {3, 0}], 4)
    formats.write_tags(tmp_path / "t.tsv", tags)
    back = formats.read_tags(tmp_path / "t.tsv")
    assert back.image_ids == tags.image_ids and back.tags == tags.tags
    assert back.n_categories == 4
    assert formats.read_tags(tmp_path / "t.tsv", n_categories=6).n_categories == 6


def test_tags_bad_row(tmp_path):
    p = tmp_path / "t.tsv"
    p.write_text("image_id\tcategories\na\tx,y\n")
    with pytest.raises(InvalidInputError):
        formats.read_tags(p)


def test_regions_roundtrip_exact(tmp_path, rng):
    feats = rng.normal(size=(4, 137))
    regions = RegionSet(feats, ["a", "a", "b", "b"], rng.uniform(size=4))
    formats.write_regions(tmp_path / "r.tsv", regions)
    back = formats.read_regions(tmp_path / "r.tsv")
    assert np.array_equal(back.features, feats)
    assert np.array_equal(back.rho, regions.rho)
    assert list(back.image_ids) == ["a", "a", "b", "b"]


def test_labels_roundtrip(tmp_path, rng):
    scores = rng.uniform(size=(5, 3))
    formats.write_labels(tmp_path / "l.tsv", scores.argmax(1), scores)
    a, s = formats.read_labels(tmp_path / "l.tsv")
    assert np.array_equal(a, scores.argmax(1)) and np.array_equal(s, scores)


def test_config_defaults(tmp_path):
    empty = tmp_path / "c.txt"
    empty.write_text("")
    cfg = parse_config(empty)
    assert (cfg.k, cfg.alpha, cfg.lam, cfg.gamma, cfg.m) == (550, 0.05, 0.01, 0.01, 35)
    assert (cfg.tol, cfg.max_iter) == (1e-4, 10)


def test_config_flag_wins(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("k = 5\nlambda = 0.2  # comment\n")
    cfg = parse_config(p, {"k": "9"})
    assert cfg.k == 9 and cfg.lam == 0.2


@pytest.mark.parametrize("text", ["alpha = 1.5", "k = 0", "tol = -1", "method = svm"])
def test_config_range_errors(tmp_path, text):
    p = tmp_path / "c.txt"
    p.write_text(text + "\n")
    key = text.split()[0]
    with pytest.raises(ConfigError, match=key):
        parse_config(p)


def test_config_unknown_key():
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(overrides={"bogus": 1})


def test_config_roundtrip():
    cfg = parse_config(overrides={"k": 12, "alpha": 0.3, "lambda": 1e-3, "figures": "no"})
    back = parse_config(overrides=parse_config_text(format_config(cfg)))
    assert back == cfg
    assert list(cfg.to_dict()) == public_keys()
    assert RunConfig().to_dict()["lambda"] == 0.01
