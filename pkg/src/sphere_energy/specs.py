"""Kernel descriptions in compact form (``A2:k=3``) or JSON.

Compact grammar::

    A2:k=3          A^2 with three inputs        (also A1, A0.5, V2, V3, ...)
    A:k=3,s=1.5     same with explicit exponent
    logV:k=3        -log V, singular
    frame           <x, y>^2
    Q:k=4,l=2       Q_{k,l}
    S:m=1,i=0,j=0   one symmetrized three-input entry (Y:... for unsymmetrized)
    -A2:k=3         leading minus negates any compact form
    sym(-A2:k=3)    symmetrization of a compact form

JSON forms use ``{"kind": ..., "k": ..., "s": ..., "d": ...}`` plus the
combinators ``sum``, ``product``, ``scale``/``of``, ``add_constant``/``of``,
``lift`` and ``symmetrize``.
"""
from __future__ import annotations

import json
import re

from . import sdp
from .kernels import (MultiKernel, add_constant, constant_kernel, kernel_A_pow, kernel_frame,
                      kernel_log, kernel_product, kernel_sum, kernel_V_pow, lift_kernel, scale,
                      symmetrize)


class SpecError(ValueError):
    """A kernel or measure description is malformed; ``field`` names the culprit."""

    def __init__(self, msg: str, field: str | None = None):
        super().__init__(msg)
        self.field = field


_POW = re.compile(r"^(A|V)(\d+(?:\.\d*)?|\.\d+)?$")


def _num(v, field):
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise SpecError(f"{field} must be a number, got {v!r}", field) from None
    return int(f) if field in ("k", "l", "m", "i", "j", "d", "n") and f == int(f) else f


def compact_to_json(text: str) -> dict:
    text = text.strip()
    if text.startswith("-"):
        return {"scale": -1.0, "of": compact_to_json(text[1:])}
    if text.startswith("sym(") and text.endswith(")"):
        return {"symmetrize": compact_to_json(text[4:-1])}
    head, _, rest = text.partition(":")
    params = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise SpecError(f"expected key=value, got {item!r}", item)
        params[key.strip()] = _num(val.strip(), key.strip())
    m = _POW.match(head)
    if m:
        out = {"kind": m.group(1), **params}
        if m.group(2) is not None:
            out["s"] = float(m.group(2))
        return out
    if head in ("logA", "logV"):
        return {"kind": head, **params}
    if head in ("frame", "Q", "S", "Y", "const"):
        return {"kind": head, **params}
    raise SpecError(f"unknown kernel kind {head!r}", "kind")


def _need(doc: dict, key: str, default=None):
    if key in doc:
        return doc[key]
    if default is not None:
        return default
    raise SpecError(f"kernel spec is missing {key!r}", key)


def kernel_from_json(doc: dict, d: int | None = None) -> MultiKernel:
    if not isinstance(doc, dict):
        raise SpecError(f"kernel spec must be an object, got {type(doc).__name__}")
    d = int(doc.get("d", d)) if doc.get("d", d) is not None else None
    if "sum" in doc:
        parts = [kernel_from_json(p, d) for p in doc["sum"]]
        out = parts[0]
        for p in parts[1:]:
            out = kernel_sum(out, p)
        return out
    if "product" in doc:
        parts = [kernel_from_json(p, d) for p in doc["product"]]
        out = parts[0]
        for p in parts[1:]:
            out = kernel_product(out, p)
        return out
    if "scale" in doc:
        return scale(kernel_from_json(_need(doc, "of"), d), _num(doc["scale"], "scale"))
    if "add_constant" in doc:
        return add_constant(kernel_from_json(_need(doc, "of"), d), _num(doc["add_constant"], "add_constant"))
    if "symmetrize" in doc:
        return symmetrize(kernel_from_json(doc["symmetrize"], d))
    if "lift" in doc:
        spec = doc["lift"]
        return lift_kernel(kernel_from_json(_need(spec, "of"), d), int(_need(spec, "n")),
                           spec.get("permutations", "all"))
    kind = _need(doc, "kind")
    if d is None:
        raise SpecError("dimension d is unknown; give it in the kernel description, via --d, or through the measure", "d")
    try:
        if kind in ("A", "V"):
            k, s = int(_need(doc, "k")), float(doc.get("s", 2.0))
            sing = bool(doc.get("singular", s <= 0))
            return (kernel_A_pow if kind == "A" else kernel_V_pow)(k, d, s, singular=sing)
        if kind in ("logA", "logV"):
            return kernel_log(kind[-1], int(_need(doc, "k")), d)
        if kind == "frame":
            return kernel_frame(d)
        if kind == "const":
            return constant_kernel(int(_need(doc, "k")), d, float(_need(doc, "c")))
        if kind == "Q":
            return sdp.kernel_Q(int(_need(doc, "k")), int(_need(doc, "l")), d)
        if kind in ("S", "Y"):
            idx = sdp.YIndex(int(doc.get("m", 0)), int(doc.get("i", 0)), int(doc.get("j", 0)), d)
            return sdp.kernel_S(idx) if kind == "S" else sdp.kernel_Y(idx)
        if kind in ("S-trace", "Y-trace"):
            blocks = [sdp.PsdCoefficientMatrix(int(b["m"]), b["entries"]) for b in _need(doc, "blocks")]
            return sdp.trace_kernel(blocks, d, form=kind[0])
    except SpecError:
        raise
    except ValueError as exc:
        raise SpecError(str(exc), "kind") from exc
    raise SpecError(f"unknown kernel kind {kind!r}", "kind")


def parse_kernel(text, d: int | None = None) -> MultiKernel:
    """Build a kernel from compact text, a JSON string, or a dict."""
    if isinstance(text, dict):
        return kernel_from_json(text, d)
    text = text.strip()
    if text.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"kernel JSON does not parse: {exc}", "kernel") from None
        return kernel_from_json(doc, d)
    return kernel_from_json(compact_to_json(text), d)
