"""JSON experiment configs: schema, loading and the bundled example."""

import json
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ValidationError

_MATRIX = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_POS_INT = {"type": "integer", "minimum": 1}
_PANELS = {"type": "array", "items": {"enum": ["a", "b", "c", "d", "e"]}}

SCHEMA = {
    "type": "object",
    "required": ["A", "B", "C", "Q_w", "R_v", "Sigma0", "Q_x", "R_u", "Sigma_u", "T", "N"],
    "properties": {
        "description": {"type": "string"},
        **{k: _MATRIX for k in ("A", "B", "C", "Q_w", "R_v", "Sigma0", "Q_x", "R_u", "Sigma_u")},
        "T": _POS_INT,
        "N": _POS_INT,
        "seed": {"type": "integer", "minimum": 0},
        "harness": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N_grid": {"type": "array", "minItems": 1, "items": _POS_INT},
                "repetitions": _POS_INT,
                "panels": {**_PANELS, "minItems": 1},
                "M": _POS_INT,
                "x0_set": {"type": "array", "items": {"type": "array",
                                                       "items": {"type": "number"}}},
                "state_error_aggregate": {"enum": ["max", "mean"]},
                "input_pairing": {"enum": ["shared", "independent"]},
                "thresholds": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "slope_range": {
                            "type": "object", "required": ["panels", "range"],
                            "properties": {"panels": _PANELS,
                                           "range": {"type": "array", "minItems": 2,
                                                     "maxItems": 2,
                                                     "items": {"type": "number"}}}},
                        "monotone": {
                            "type": "object", "required": ["panels"],
                            "properties": {"panels": _PANELS,
                                           "max_inversions": {"type": "integer",
                                                              "minimum": 0}}},
                        "negative_slope": {"type": "object", "required": ["panels"],
                                           "properties": {"panels": _PANELS}},
                    },
                },
            },
        },
        "lemma": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "reps": _POS_INT,
                "N_product": _POS_INT,
                "N_singular": _POS_INT,
                "n_singular": _POS_INT,
            },
        },
        "lqg": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"M": _POS_INT, "T_eval": _POS_INT, "cost_reps": _POS_INT},
        },
    },
    "additionalProperties": False,
}


def validate_config(cfg):
    """Raise :class:`ValidationError` naming the offending field if ``cfg`` violates the schema."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"invalid config at {where}: {exc.message}") from None
    return cfg


def load_config(path):
    """Read and validate a JSON config. The file is only read, never rewritten."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
    return validate_config(cfg)


def bundled_config_path():
    return resources.files("ddlqg") / "data" / "two_state_example.json"


def bundled_config():
    """The two-state example shipped with the package."""
    return validate_config(json.loads(bundled_config_path().read_text()))
