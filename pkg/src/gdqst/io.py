"""JSON exchange format.

Every document is ``{"kind", "modes", "version", "payload"}`` with matrices as
row-major nested lists. Symmetric vectorizations never leave the library.
An optional ``"metadata"`` entry (timestamps and the like) is ignored on load
and by :func:`canonical`.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .dynamics import CONVENTION, MeasurementRecord
from .errors import ValidationError
from .model import GaussianChannel, GaussianState, HomodyneSetting, QdsGenerator
from .reconstruction import Diagnosis, TomographyReport

VERSION = 1
KINDS = ("state", "channel", "generator", "setting", "record", "report", "diagnosis", "summary")


def _matrix(M) -> list:
    return np.asarray(M, dtype=float).tolist()


def _read_matrix(value, name: str, ndim: int = 2) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} is not a numeric array") from None
    if arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def _num(x):
    """JSON-safe float; infinities and NaN become ``None``."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return x if math.isfinite(x) else None


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (bool, np.bool_, int, np.integer, float, np.floating)):
        return _num(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _state_payload(state: GaussianState) -> dict:
    return {"gamma": _matrix(state.gamma), "d": _matrix(state.d)}


def to_document(obj, metadata: dict | None = None) -> dict:
    """Wrap a library object in the versioned envelope."""
    if isinstance(obj, GaussianState):
        kind, m, payload = "state", obj.m, _state_payload(obj)
    elif isinstance(obj, GaussianChannel):
        kind, m, payload = "channel", obj.m, {"X": _matrix(obj.X), "Y": _matrix(obj.Y)}
    elif isinstance(obj, QdsGenerator):
        kind, m, payload = "generator", obj.m, {"C": _matrix(obj.C), "B": _matrix(obj.B)}
    elif isinstance(obj, HomodyneSetting):
        kind, m, payload = "setting", obj.m, {"b": _matrix(obj.b)}
    elif isinstance(obj, MeasurementRecord):
        kind, m = "record", obj.m
        payload = {
            "setting": _matrix(obj.setting.b),
            "recordKind": obj.kind,
            "times": _matrix(obj.times),
            "means": _matrix(obj.means),
            "variances": _matrix(obj.variances),
            "shots": "exact" if obj.shots is None else int(obj.shots),
            "dynamicsId": obj.dynamics_id,
            "convention": obj.convention,
            "provenance": _clean(obj.provenance),
        }
    elif isinstance(obj, TomographyReport):
        kind, m = "report", obj.state.m if obj.state is not None else None
        payload = {
            "estimatedState": _state_payload(obj.state) if obj.state is not None else None,
            "recordKind": obj.kind,
            "mode": obj.mode,
            "residual": obj.residual,
            "imagResidue": obj.imag_residue,
            "conditionSummary": obj.conditions,
            "flags": obj.flags,
            "verdict": obj.verdict,
            "physical": obj.physical,
            "details": obj.details,
            "message": obj.message,
        }
    elif isinstance(obj, Diagnosis):
        kind, m = "diagnosis", obj.m
        payload = {
            "verdict": obj.verdict,
            "reasons": list(obj.reasons),
            "flags": obj.flags,
            "symplecticResidual": obj.symplectic_residual,
            "components": obj.components,
            "conditionSummary": obj.conditions,
            "determinants": obj.determinants,
        }
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    doc = {"kind": kind, "modes": m, "version": VERSION, "payload": _clean(payload)}
    if metadata:
        doc["metadata"] = _clean(metadata)
    return doc


def document(kind: str, modes, payload: dict, metadata: dict | None = None) -> dict:
    """Envelope for free-form payloads (round-trip summaries, reports from failures)."""
    if kind not in KINDS:
        raise ValidationError(f"unknown document kind {kind!r}")
    doc = {"kind": kind, "modes": modes, "version": VERSION, "payload": _clean(payload)}
    if metadata:
        doc["metadata"] = _clean(metadata)
    return doc


def _check_envelope(doc) -> None:
    if not isinstance(doc, dict):
        raise ValidationError("document must be a JSON object")
    for key in ("kind", "modes", "version", "payload"):
        if key not in doc:
            raise ValidationError(f"document lacks {key!r}")
    if doc["version"] != VERSION:
        raise ValidationError(f"unsupported version {doc['version']!r}")
    if doc["kind"] not in KINDS:
        raise ValidationError(f"unknown document kind {doc['kind']!r}")
    if not isinstance(doc["payload"], dict):
        raise ValidationError("payload must be an object")


def _check_modes(obj, doc):
    if doc["modes"] is not None and obj.m != doc["modes"]:
        raise ValidationError(f"document says {doc['modes']} modes, content has {obj.m}")
    return obj


def _read_state(p: dict) -> GaussianState:
    return GaussianState(_read_matrix(p["gamma"], "gamma"), _read_matrix(p["d"], "d", 1))


def from_document(doc: dict, expect: str | tuple | None = None):
    """Rebuild (and thereby validate) an object from its envelope.

    Reports, diagnoses and summaries come back as their checked payload dict.
    """
    _check_envelope(doc)
    kind, p = doc["kind"], doc["payload"]
    if expect is not None and kind not in ((expect,) if isinstance(expect, str) else expect):
        raise ValidationError(f"expected a {expect} document, got {kind!r}")
    try:
        if kind == "state":
            return _check_modes(_read_state(p), doc)
        if kind == "channel":
            return _check_modes(GaussianChannel(_read_matrix(p["X"], "X"), _read_matrix(p["Y"], "Y")), doc)
        if kind == "generator":
            return _check_modes(QdsGenerator(_read_matrix(p["C"], "C"), _read_matrix(p["B"], "B")), doc)
        if kind == "setting":
            return _check_modes(HomodyneSetting(_read_matrix(p["b"], "b", 1)), doc)
        if kind == "record":
            shots = p["shots"]
            if shots != "exact" and not isinstance(shots, int):
                raise ValidationError("shots must be 'exact' or an integer")
            record = MeasurementRecord(
                HomodyneSetting(_read_matrix(p["setting"], "setting", 1)),
                _read_matrix(p["times"], "times", 1), _read_matrix(p["means"], "means", 1),
                _read_matrix(p["variances"], "variances", 1), p["recordKind"],
                None if shots == "exact" else shots, str(p.get("dynamicsId", "")),
                str(p.get("convention", CONVENTION)), dict(p.get("provenance") or {}),
            )
            return _check_modes(record, doc)
        if kind == "report":
            for key in ("estimatedState", "residual", "imagResidue", "conditionSummary", "flags", "verdict"):
                if key not in p:
                    raise ValidationError(f"report lacks {key!r}")
            if p["estimatedState"] is not None:
                _read_state(p["estimatedState"])
            return p
        if kind == "diagnosis":
            for key in ("verdict", "reasons", "flags", "conditionSummary", "determinants"):
                if key not in p:
                    raise ValidationError(f"diagnosis lacks {key!r}")
            if p["verdict"] not in ("GENERIC", "NULL-SET"):
                raise ValidationError(f"unknown verdict {p['verdict']!r}")
            return p
        return p
    except KeyError as exc:
        raise ValidationError(f"{kind} payload lacks {exc.args[0]!r}") from None


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def canonical(doc: dict) -> str:
    """Serialization with metadata stripped, for byte-level comparison."""
    return dumps({k: v for k, v in doc.items() if k != "metadata"})


def save(obj, path: str | Path, metadata: dict | None = None) -> dict:
    doc = obj if isinstance(obj, dict) else to_document(obj, metadata)
    Path(path).write_text(dumps(doc))
    return doc


def load_document(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    _check_envelope(doc)
    return doc


def load(path: str | Path, expect: str | tuple | None = None):
    return from_document(load_document(path), expect)
