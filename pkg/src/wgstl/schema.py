"""JSON schemas for model and dataset files."""
from __future__ import annotations

import jsonschema

_NUM_LIST = {"type": "array", "items": {"type": "number"}}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["format_version", "structure_text", "operator_assignment", "root", "graph",
                 "dimensions", "parameters", "config", "training_log"],
    "properties": {
        "format_version": {"const": 1},
        "structure_text": {"type": "string"},
        "operator_assignment": {
            "type": "object",
            "additionalProperties": {"enum": ["always", "eventually", "forall", "exists"]},
        },
        "root": {"type": "string"},
        "graph": {
            "type": "object",
            "required": ["nodes", "edges"],
            "properties": {
                "nodes": {"type": "array", "items": {"type": "string"}},
                "edges": {"type": "array",
                          "items": {"type": "array", "items": {"type": "string"},
                                    "minItems": 2, "maxItems": 2}},
            },
        },
        "dimensions": {"type": "array", "items": {"type": "string"}},
        "parameters": {
            "type": "object",
            "required": ["sigma", "raw", "neighbor_order"],
            "properties": {
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "raw": {"type": "object", "additionalProperties": _NUM_LIST},
                "normalized": {"type": "object", "additionalProperties": _NUM_LIST},
                "neighbor_order": {"type": "object",
                                   "additionalProperties": {"type": "array",
                                                            "items": {"type": "string"}}},
            },
        },
        "config": {"type": "object"},
        "training_log": {"type": "array", "items": {"type": "object"}},
    },
}

DATASET_SCHEMA = {
    "type": "object",
    "required": ["graph", "dimensions", "samples"],
    "properties": {
        "graph": MODEL_SCHEMA["properties"]["graph"],
        "dimensions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "samples": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "trajectory"],
                "properties": {
                    "label": {"enum": [-1, 1]},
                    "trajectory": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "array",
                            "items": {"type": "array",
                                      "items": {"type": ["number", "null"]}},
                        },
                    },
                },
            },
        },
    },
}


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _check(doc, schema, what):
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema).iter_errors(doc))
    if err is not None:
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"{what}:{path}", err.message)


def validate_model(doc) -> None:
    _check(doc, MODEL_SCHEMA, "model")


def validate_dataset(doc) -> None:
    _check(doc, DATASET_SCHEMA, "dataset")
