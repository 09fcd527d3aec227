"""
Model persistence as a small JSON document.

Every real parameter is written as a decimal string with 17 significant
digits, which reproduces the float64 value exactly on reading.  The document
carries a ``schema_version``; any other version is rejected.

Layout::

    {
      "schema_version": 1,
      "kind": "selis" | "gse_univariate" | "amst",
      "label": "GMST-Logistic-D",
      "params": {...},
      "fit": {...} | null,
      "data": {"rows": ..., "cols": ..., "columns": [...], "hash": "..."} | null
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .baselines import CANONICAL_KINDS, AmstModel, GseUnivariateModel
from .elliptical import SphericalFamily
from .errors import SelisError
from .model import SelisModel
from .skewing import SigmoidKind

__all__ = [
    "SCHEMA_VERSION",
    "ModelFileError",
    "ModelFile",
    "dumps",
    "loads",
    "save",
    "load",
    "encode_float",
]

SCHEMA_VERSION = 1
KINDS = ("selis", "gse_univariate", "amst")


class ModelFileError(SelisError, ValueError):
    """The model file is unreadable, malformed or of an unknown schema version."""


def encode_float(x: float) -> str:
    return format(float(x), ".17g")


def _enc(a):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        return encode_float(arr)
    return [_enc(v) for v in arr]


def _dec(v):
    if isinstance(v, list):
        return [_dec(u) for u in v]
    if not isinstance(v, str):
        raise ModelFileError(f"expected a decimal string, found {v!r}")
    try:
        return float(v)
    except ValueError:
        raise ModelFileError(f"invalid decimal {v!r}") from None


@dataclass(eq=False)
class ModelFile:
    model: SelisModel | GseUnivariateModel | AmstModel
    label: str
    fit: dict | None = None
    data: dict | None = None
    extra: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        if isinstance(self.model, SelisModel):
            return "selis"
        if isinstance(self.model, GseUnivariateModel):
            return "gse_univariate"
        return "amst"


def _sigmoid_doc(kind) -> dict:
    if isinstance(kind, str):
        return {"kind": kind, "nu": None}
    return {"kind": kind.kind, "nu": None if kind.nu is None else encode_float(kind.nu)}


def _sigmoid_from(doc):
    nu = doc.get("nu")
    return SigmoidKind(doc["kind"], None if nu is None else _dec(nu))


def _params(model) -> dict:
    if isinstance(model, SelisModel):
        fam = model.family
        return {
            "mu": _enc(model.mu),
            "linv": _enc(model.linv),
            "lambda": _enc(model.lam),
            "diagonal_only": model.skew.diagonal_only,
            "family": {"kind": fam.kind, "shape": None if fam.shape is None else encode_float(fam.shape)},
            "sigmoid": _sigmoid_doc(model.sigmoid),
        }
    if isinstance(model, GseUnivariateModel):
        return {
            "location": encode_float(model.location),
            "scale": encode_float(model.scale),
            "nu": encode_float(model.nu),
            "lam_s": encode_float(model.lam_s),
            "skewing": _sigmoid_doc(model.kind),
        }
    return {
        "mu": _enc(model.mu),
        "linv": _enc(model.linv),
        "nu": encode_float(model.nu),
        "alpha": _enc(model.alpha),
    }


def _model_from(kind: str, p: dict):
    if kind == "selis":
        fam = p["family"]
        shape = fam.get("shape")
        family = SphericalFamily(fam["kind"], None if shape is None else _dec(shape))
        return SelisModel.build(
            _dec(p["mu"]),
            _dec(p["linv"]),
            _dec(p["lambda"]),
            family,
            _sigmoid_from(p["sigmoid"]),
            bool(p["diagonal_only"]),
        )
    if kind == "gse_univariate":
        sk = p["skewing"]
        skew = sk["kind"] if sk["kind"] in CANONICAL_KINDS else _sigmoid_from(sk)
        return GseUnivariateModel(_dec(p["location"]), _dec(p["scale"]), _dec(p["nu"]), _dec(p["lam_s"]), skew)
    return AmstModel(_dec(p["mu"]), _dec(p["linv"]), _dec(p["nu"]), _dec(p["alpha"]))


def dumps(mf: ModelFile) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": mf.kind,
        "label": mf.label,
        "params": _params(mf.model),
        "fit": mf.fit,
        "data": mf.data,
    }
    doc.update(mf.extra)
    return json.dumps(doc, indent=2) + "\n"


def loads(text: str, source: str = "<string>") -> ModelFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{source}: not a model file ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise ModelFileError(f"{source}: missing schema_version")
    version = doc["schema_version"]
    if type(version) is not int or version != SCHEMA_VERSION:
        raise ModelFileError(f"{source}: unsupported schema_version {version!r} (this build reads {SCHEMA_VERSION})")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ModelFileError(f"{source}: unknown model kind {kind!r}")
    try:
        model = _model_from(kind, doc["params"])
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{source}: invalid {kind} parameters: {exc}") from None
    known = {"schema_version", "kind", "label", "params", "fit", "data"}
    extra = {k: v for k, v in doc.items() if k not in known}
    return ModelFile(model, str(doc.get("label", kind)), doc.get("fit"), doc.get("data"), extra)


def save(path, mf: ModelFile) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(mf))


def load(path) -> ModelFile:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc.strerror or exc}") from None
    return loads(text, str(path))
