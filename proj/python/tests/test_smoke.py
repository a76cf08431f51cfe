import json
import os
import pathlib

import numpy as np
import pytest

import tfcodit

DATA = pathlib.Path(os.environ.get("TFCODIT_TEST_DATA", pathlib.Path(__file__).resolve().parents[2] / "tests" / "data"))


def test_wavelet_round_trip():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 32))
    grid = tfcodit.dwt(x, 3)
    assert grid.shape == (8, 4, 32)
    back = tfcodit.idwt(grid, 3)
    assert np.max(np.abs(back - x)) < 1e-9


def test_haar_matches_numpy_oracle():
    x = np.arange(8, dtype=float)
    a, d = tfcodit.haar_analysis(list(x), 1)
    s = np.sqrt(0.5)
    assert np.allclose(a, s * (x[0::2] + x[1::2]))
    assert np.allclose(d, s * (x[0::2] - x[1::2]))
    assert np.allclose(tfcodit.haar_synthesis([a, d], 1), x)


def test_normalize_round_trip():
    rng = np.random.default_rng(1)
    n = 20
    close = 100 + np.cumsum(rng.normal(scale=0.2, size=n))
    open_ = close + rng.normal(scale=0.05, size=n)
    high = np.maximum(open_, close) + 0.1
    low = np.minimum(open_, close) - 0.1
    rec = np.column_stack([open_, high, low, close, close, rng.uniform(0, 1e4, n),
                           rng.integers(0, 1000, n), rng.uniform(1e4, 2e4, n)])
    rec[5, 6] = 0.0
    values, state = tfcodit.normalize(rec)
    assert values.shape == (8, n - 1)
    back = tfcodit.denormalize(values, state)
    assert np.allclose(back, rec[1:], rtol=1e-9, atol=0)


def test_mask_shape():
    m = tfcodit.build_mask(3, 4)
    assert m.shape == (7, 7)


def test_taxonomy_counts():
    daily = tfcodit.taxonomy("daily")
    periodic = tfcodit.taxonomy("periodic")
    assert (len(daily), sum(map(len, daily.values()))) == (7, 17)
    assert (len(periodic), sum(map(len, periodic.values()))) == (8, 23)


def test_validator_on_fixtures():
    for p in sorted((DATA / "finmap").glob("*.json")):
        doc = json.loads(p.read_text())
        assert tfcodit.validate_document(doc)["ok"], p.name
    bad = json.loads((DATA / "finmap" / "daily_2025-12-26.json").read_text())
    bad["attributes"]["Liquidity"]["XYZ"] = "x"
    r = tfcodit.validate_document(bad)
    assert not r["ok"] and r["violations"]


def test_score_identity():
    x = np.ones((8, 16))
    assert tfcodit.score(x, x) == {"mse": 0.0, "mae": 0.0}
    with pytest.raises(tfcodit.TfcoditError):
        tfcodit.score(x, np.ones((8, 15)))


def test_config_overrides():
    c = tfcodit.Config.default()
    c2 = c.override("horizon=8", "seed=5")
    assert c2["horizon"] == 8 and c2["seed"] == 5
    with pytest.raises(tfcodit.TfcoditError):
        c.override("horizon=48")


def test_tiny_pipeline(tmp_path):
    c = tfcodit.Config.default().override(
        f'paths.data_dir="{tmp_path / "data"}"',
        f'paths.checkpoint_dir="{tmp_path / "ckpt"}"',
        f'paths.output_dir="{tmp_path / "out"}"',
        "horizon=8", "synthetic.n_days=120", "test_days=24",
        "train.vae.steps=3", "train.diffusion.steps=3", "train.diffusion.batch=4",
        "sampler.num_steps=4",
    )
    tfcodit.gen_synthetic(c)
    tfcodit.preprocess(c)
    assert tfcodit.train_vae(c) > 0
    assert tfcodit.train_diffusion(c) > 0
    p = c.paths()
    files = tfcodit.generate(c, pathlib.Path(p["test"]) / "prompts", 2)
    assert files
    rep = tfcodit.evaluate(c, p["generated"], p["test"], tmp_path / "report")
    assert rep["rows"] and all(np.isfinite(r["mse"]) for r in rep["rows"])
