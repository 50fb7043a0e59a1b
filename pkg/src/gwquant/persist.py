"""Versioned text (JSON) serialization of trained models.

The schema id distinguishes the payloads:

    gwquant.sgpr.v1   kernel + noise hyperparameters in log space
    gwquant.vhgpr.v1  both kernels, mu0 and the variational lambda vector

Hyperparameters and training data are stored inline as JSON numbers, whose
repr round-trips float64 exactly. Loading rebuilds the cached
factorizations deterministically.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import SchemaMismatchError
from .kernels import KernelParams
from .sgpr import SgprModel
from .vhgpr import VhgprModel, VhgprState

SGPR_SCHEMA = "gwquant.sgpr.v1"
VHGPR_SCHEMA = "gwquant.vhgpr.v1"


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="ascii") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _kernel_to_dict(params: KernelParams) -> dict:
    return {
        "log_output_variance": float(params.log_output_variance),
        "log_length_scales": [float(v) for v in params.log_length_scales],
    }


def _kernel_from_dict(payload: dict) -> KernelParams:
    return KernelParams(
        payload["log_output_variance"], np.array(payload["log_length_scales"])
    )


def model_to_dict(model, seed: int | None = None) -> dict:
    common = {
        "d": int(model.ndim),
        "target_offset": float(model.target_offset),
        "train_inputs": [[float(v) for v in row] for row in model.train_inputs],
        "train_targets": [float(v) for v in model.train_targets],
    }
    if seed is not None:
        common["seed"] = int(seed)
    if isinstance(model, SgprModel):
        return {
            "schema": SGPR_SCHEMA,
            "kernel": _kernel_to_dict(model.kernel),
            "log_noise_variance": float(model.log_noise_variance),
            **common,
        }
    if isinstance(model, VhgprModel):
        return {
            "schema": VHGPR_SCHEMA,
            "kernel_f": _kernel_to_dict(model.kernel_f),
            "kernel_g": _kernel_to_dict(model.kernel_g),
            "mu0": float(model.mu0),
            "variational_lambda": [float(v) for v in model.variational_lambda],
            **common,
        }
    raise SchemaMismatchError(f"cannot serialize object of type {type(model).__name__}")


def model_from_dict(payload: dict):
    schema = payload.get("schema")
    x = np.array(payload.get("train_inputs", []), dtype=float)
    y = np.array(payload.get("train_targets", []), dtype=float)
    offset = float(payload.get("target_offset", 0.0))
    if schema == SGPR_SCHEMA:
        return SgprModel.from_hyperparams(
            _kernel_from_dict(payload["kernel"]),
            payload["log_noise_variance"],
            x,
            y,
            target_offset=offset,
        )
    if schema == VHGPR_SCHEMA:
        state = VhgprState(
            _kernel_from_dict(payload["kernel_f"]),
            _kernel_from_dict(payload["kernel_g"]),
            float(payload["mu0"]),
            np.array(payload["variational_lambda"], dtype=float),
        )
        return VhgprModel.from_state(state, x, y, target_offset=offset)
    raise SchemaMismatchError(f"unsupported model schema {schema!r}")


def save_model(path, model, seed: int | None = None) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model, seed), indent=1) + "\n")


def load_model(path):
    with open(path, "r", encoding="ascii") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaMismatchError(f"{path}: not a model file ({exc})") from exc
    return model_from_dict(payload)
