"""JSON model files and parameter vectors.

A model file looks like::

    {
      "format_version": 1,
      "dims": {"k": 2, "d": 1, "L": 1, "p": 3},
      "epsilon": 0.3,
      "init_dist": [0.5, 0.5],
      "y0": [0.0],
      "box": {"lower": [...], "upper": [...]},
      "rates": {"family": "constant", "version": 1, "coefficients": {...}, "bound": 1.0},
      "drift_basis": [{"family": "constant", "version": 1, "coefficients": {...}}],
      "parametrization": {"type": "canonical", "rate_index": [[-1, 1], [0, -1]],
                          "drift_index": [2]}
    }

Only built-in field families can be stored; models with user callables
must be built in Python.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .fields import field_from_config
from .model import ExponentialFamily, ModelDims, ModelSpec, ParameterBox

FORMAT_VERSION = 1


def model_to_dict(spec: ModelSpec) -> dict:
    fam = spec.family
    if not fam.canonical:
        raise ConfigurationError("only canonical parametrizations can be serialized")
    return {
        "format_version": FORMAT_VERSION,
        "dims": {"k": spec.dims.k, "d": spec.dims.d, "L": spec.dims.L, "p": spec.dims.p},
        "epsilon": float(spec.epsilon),
        "init_dist": spec.init_dist.tolist(),
        "y0": spec.y0.tolist(),
        "box": {"lower": spec.box.lower.tolist(), "upper": spec.box.upper.tolist()},
        "rates": fam.q0.to_config(),
        "drift_basis": [b.to_config() for b in fam.mu_basis],
        "parametrization": {"type": "canonical", "rate_index": fam.rate_index.tolist(),
                            "drift_index": fam.drift_index.tolist()},
    }


def model_from_dict(cfg: dict) -> ModelSpec:
    try:
        if cfg.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported format_version {cfg['format_version']}")
        dims = ModelDims(**{key: int(cfg["dims"][key]) for key in ("k", "d", "L", "p")})
        q0 = field_from_config("rates", cfg["rates"], dims.d)
        basis = [field_from_config("drift", b, dims.d) for b in cfg.get("drift_basis", [])]
        par = cfg["parametrization"]
        if par.get("type") != "canonical":
            raise ConfigurationError("model files support the canonical parametrization only")
        fam = ExponentialFamily.canonical_family(q0, basis, par["rate_index"],
                                                 par.get("drift_index", []))
        box = ParameterBox(cfg["box"]["lower"], cfg["box"]["upper"])
        spec = ModelSpec(dims, fam, float(cfg["epsilon"]), np.asarray(cfg["init_dist"], float),
                         np.asarray(cfg.get("y0", [0.0] * dims.d), float), box, config=cfg)
    except ConfigurationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid model configuration: {exc}") from exc
    if box.empty:
        raise ConfigurationError("parameter box is empty")
    used = np.concatenate([fam.rate_index.ravel(), fam.drift_index])
    if used.size and used.max() >= dims.p:
        raise ConfigurationError("parametrization refers to a coordinate beyond p")
    return spec


def load_model(path) -> ModelSpec:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read model file {path}: {exc}") from exc
    return model_from_dict(cfg)


def save_model(spec: ModelSpec, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(spec), indent=1))
    return path


def load_theta(path) -> np.ndarray:
    """Read a parameter vector stored as a JSON list or ``{"theta": [...]}``."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read parameter file {path}: {exc}") from exc
    if isinstance(obj, dict):
        obj = obj.get("theta")
    try:
        theta = np.asarray(obj, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: not a numeric vector") from exc
    if theta.size == 0:
        raise ConfigurationError(f"{path}: empty parameter vector")
    return theta


def save_theta(theta, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps({"theta": np.asarray(theta, float).tolist()}))
    return path
