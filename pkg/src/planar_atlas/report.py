"""Structured analysis reports: schema, emission and loading."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_points = {"type": "array", "items": _point}
_int_or_null = {"type": ["integer", "null"]}
_num_or_null = {"type": ["number", "null"]}


def _obj(props: dict, required=None, extra: bool = False) -> dict:
    return {"type": "object", "properties": props, "required": list(required or props),
            "additionalProperties": extra}


POLYLINE = _obj({"points": _points, "closed": {"type": "boolean"}})

CUSP = _obj({"location": _point, "curve_index": {"type": "number"}, "kernel_dir": _point,
             "side": {"type": ["string", "null"], "enum": ["left", "right", None]}})

CURVE = _obj({"points": _points, "closed": {"type": "boolean"},
              "orientation": {"type": ["string", "null"]}, "det_side_left": {"type": "integer"},
              "truncated": {"type": "boolean"}, "step": {"type": "number"},
              "cusps": {"type": "integer", "minimum": 0}, "cusp_list": {"type": "array", "items": CUSP}})

PATH = _obj({"id": {"type": "integer"}, "status": {"enum": ["alive", "died_at_fold", "born_at_fold"]},
             "born_at": _num_or_null, "died_at": _num_or_null, "residual_max": {"type": "number"},
             "t": {"type": "array", "items": {"type": "number"}}, "points": _points})

CROSSING = _obj({"t": {"type": "number"}, "point": _point, "fold_point": _point,
                 "curve": {"type": "integer"}, "direction": {"enum": ["gain", "loss"]}})

PREIMAGES = _obj({"target": _point, "preimage_count": {"type": "integer", "minimum": 0},
                  "points": _points, "residuals": {"type": "array", "items": {"type": "number"}},
                  "method": {"type": "string"}, "base": {"type": "string"},
                  "crossings": {"type": "array", "items": CROSSING},
                  "paths": {"type": "array", "items": PATH},
                  "route": _points},
                 required=["target", "preimage_count", "points", "residuals", "method", "base",
                           "crossings", "paths"])

CHECK = _obj({"kind": {"enum": ["disk", "polydisk", "annulus", "parity"]}, "lhs": {"type": "integer"},
              "rhs": {"type": "integer"}, "pass": {"type": "boolean"}, "inputs_digest": {"type": "string"},
              "note": {"type": "string"}, "details": {"type": "object"}})

WINDOW = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}

SCHEMA = _obj({
    "tool": _obj({"name": {"type": "string"}, "version": {"type": "string"}}),
    "created": {"type": "string"},
    "map": _obj({"name": {"type": "string"}, "source": {"type": "string"}, "mode": {"type": "string"},
                 "derivatives": {"type": "string"},
                 "infinity_hint": {"oneOf": [{"type": "null"},
                                             _obj({"degree": {"type": "integer"}, "coefficient": _point})]}}),
    "settings": _obj({"window": WINDOW, "grid": {"type": "integer"}, "step": {"type": "number"},
                      "tol": {"type": "number"}, "targets": _points, "flower": {"type": "boolean"},
                      "checks": {"type": "boolean"}, "annulus": {"type": "boolean"},
                      "seed_base": {"oneOf": [{"type": "null"}, _point]},
                      "base_preimages": {"oneOf": [{"type": "null"}, _points]}}),
    "tolerances": _obj({"newton": {"type": "number"}, "trace": {"type": "number"},
                        "gradient": {"type": "number"}, "alignment": {"type": "number"},
                        "cusp_location": {"type": "number"}, "cusp_guard": {"type": "number"},
                        "dedup": {"type": "number"}}),
    "curves": {"type": "integer", "minimum": 0},
    "cusps": {"type": "integer", "minimum": 0},
    "critical_curves": {"type": "array", "items": CURVE},
    "image_curves": {"type": "array", "items": POLYLINE},
    "image_window": WINDOW,
    "flower": {"oneOf": [{"type": "null"}, {"type": "array", "items": POLYLINE}]},
    "preimages": {"type": "array", "items": PREIMAGES},
    "checks": {"type": "array", "items": CHECK},
    "skipped": {"type": "array", "items": {"type": "string"}},
    "errors": {"type": "array", "items": _obj({"stage": {"type": "string"}, "message": {"type": "string"}})},
    "note": {"type": "string"},
})


class ReportError(ValueError):
    pass


@dataclass
class AnalysisReport:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def checks_passed(self) -> bool:
        return all(c["pass"] for c in self.data["checks"])

    def validate(self) -> "AnalysisReport":
        try:
            jsonschema.validate(self.data, SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ReportError(f"report does not match the schema: {exc.message}") from None
        return self

    def dumps(self) -> str:
        return json.dumps(self.data, indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "AnalysisReport":
        return cls(json.loads(text)).validate()


def emit_report(report: AnalysisReport, path) -> Path:
    path = Path(path)
    path.write_text(report.validate().dumps())
    return path


def load_report(path) -> AnalysisReport:
    return AnalysisReport.loads(Path(path).read_text())
