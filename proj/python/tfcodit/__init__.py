"""Wavelet-latent text-conditioned diffusion for bond futures series."""

import json

from . import _core
from ._core import (
    TfcoditError,
    build_mask,
    denormalize,
    dwt,
    haar_analysis,
    haar_synthesis,
    idwt,
    normalize,
    score,
    taxonomy,
)


class Config(dict):
    """Resolved run config as a nested dict."""

    @classmethod
    def default(cls):
        return cls(json.loads(_core.default_config()))

    @classmethod
    def load(cls, path, overrides=()):
        return cls(json.loads(_core.load_config(str(path), list(overrides))))

    def override(self, *assignments):
        return Config(json.loads(_core.override_config(self._text(), list(assignments))))

    def _text(self):
        return json.dumps(self)

    def paths(self):
        return _core.paths(self._text())


def validate_document(doc):
    text = doc if isinstance(doc, str) else json.dumps(doc)
    return _core.validate_document(text)


def gen_synthetic(cfg):
    _core.gen_synthetic(cfg._text())


def preprocess(cfg):
    _core.preprocess(cfg._text())


def train_vae(cfg, resume=False):
    return _core.train_vae(cfg._text(), resume)


def train_diffusion(cfg, resume=False):
    return _core.train_diffusion(cfg._text(), resume)


def generate(cfg, prompts, k, out=""):
    return [str(p) for p in _core.generate(cfg._text(), str(prompts), k, str(out))]


def evaluate(cfg, predictions, truth, out):
    return json.loads(_core.evaluate(cfg._text(), str(predictions), str(truth), str(out)))


__all__ = [
    "Config",
    "TfcoditError",
    "build_mask",
    "denormalize",
    "dwt",
    "evaluate",
    "gen_synthetic",
    "generate",
    "haar_analysis",
    "haar_synthesis",
    "idwt",
    "normalize",
    "preprocess",
    "score",
    "taxonomy",
    "train_diffusion",
    "train_vae",
    "validate_document",
]
