"""Model files: mixture + energy function (+ controller) as versioned JSON.

Matrices are nested lists in row-major order; floats are written with
``repr`` precision so a save/load cycle is exact.
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .clf import ClfParams
from .control import ControllerConfig
from .errors import DataError
from .gmm import MixtureParams

FORMAT = 1


def model_to_dict(mix: MixtureParams, clf: ClfParams, ccfg: ControllerConfig | None = None,
                  meta: dict | None = None) -> dict:
    if clf.d != mix.d:
        raise ValueError(f"mixture is {mix.d}-D but the energy function is {clf.d}-D")
    out = {
        "format": FORMAT,
        "d": mix.d,
        "K": mix.k,
        "priors": mix.priors.tolist(),
        "means": mix.means.tolist(),
        "covariances": mix.covariances.tolist(),
        "L": clf.L,
        "P0": clf.P0.tolist(),
        "P": clf.P.tolist(),
        "mu": clf.mu.tolist(),
    }
    if ccfg is not None:
        out["controller"] = asdict(ccfg)
    if meta:
        out["meta"] = meta
    return out


def _array(doc, key, shape):
    try:
        a = np.asarray(doc[key], dtype=float)
    except KeyError:
        raise DataError(f"model file lacks {key!r}") from None
    except (TypeError, ValueError) as exc:
        raise DataError(f"model field {key!r} is not numeric: {exc}") from None
    if a.size == 0:
        a = a.reshape(shape)
    if a.shape != shape:
        raise DataError(f"model field {key!r} has shape {a.shape}, expected {shape}")
    return a


def model_from_dict(doc: dict):
    """(MixtureParams, ClfParams, ControllerConfig or None, meta)."""
    if doc.get("format") != FORMAT:
        raise DataError(f"unsupported model format {doc.get('format')!r} (expected {FORMAT})")
    try:
        d, K, L = int(doc["d"]), int(doc["K"]), int(doc["L"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"model header incomplete: {exc}") from None
    mix = MixtureParams(_array(doc, "priors", (K,)), _array(doc, "means", (K, 2 * d)),
                        _array(doc, "covariances", (K, 2 * d, 2 * d)))
    clf = ClfParams(_array(doc, "P0", (d, d)), _array(doc, "P", (L, d, d)), _array(doc, "mu", (L, d)))
    ccfg = ControllerConfig(**doc["controller"]) if "controller" in doc else None
    return mix, clf, ccfg, doc.get("meta", {})


def save_model(path, mix, clf, ccfg=None, meta=None) -> None:
    text = json.dumps(model_to_dict(mix, clf, ccfg, meta), indent=1, sort_keys=True)
    Path(path).write_text(text + "\n")


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(doc)
