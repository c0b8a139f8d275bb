"""Compression operators with contraction parameters and a bit-cost model.

Supported operators: identity, stochastic quantizer (s levels per sign),
top-k sparsification and random-k sparsification (unscaled entries). All
satisfy E||C(x) - x||^2 <= omega(spec, m) ||x||^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KINDS = ("identity", "quant", "topk", "randk")


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    s: int | None = None  # quantization levels, quant only
    k: int | None = None  # kept coordinates, topk/randk only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown compressor kind {self.kind!r}")
        if self.kind == "quant":
            if self.s is None or self.s < 1:
                raise ValueError("quantizer needs s >= 1")
        elif self.kind in ("topk", "randk"):
            if self.k is None or self.k < 1:
                raise ValueError(f"{self.kind} needs k >= 1")

    def validate_for(self, m):
        if m < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind in ("topk", "randk") and self.k > m:
            raise ValueError(f"k={self.k} exceeds dimension m={m}")

    def __str__(self):
        if self.kind == "quant":
            return f"quant:s={self.s}"
        if self.kind in ("topk", "randk"):
            return f"{self.kind}:k={self.k}"
        return "identity"


def parse_spec(text):
    """Parse 'identity', 'quant:s=5', 'topk:k=12' or 'randk:k=12'."""
    text = text.strip()
    if text == "identity":
        return CompressorSpec("identity")
    try:
        kind, arg = text.split(":")
        name, value = arg.split("=")
    except ValueError:
        raise ValueError(f"malformed compressor spec {text!r}") from None
    if kind == "quant" and name == "s":
        return CompressorSpec("quant", s=int(value))
    if kind in ("topk", "randk") and name == "k":
        return CompressorSpec(kind, k=int(value))
    raise ValueError(f"malformed compressor spec {text!r}")


@dataclass(frozen=True)
class CompressionResult:
    vector: np.ndarray
    bits: int


def omega(spec, m):
    """Contraction parameter of the operator on R^m."""
    spec.validate_for(m)
    if spec.kind == "identity":
        return 0.0
    if spec.kind == "quant":
        return min(m / spec.s**2, math.sqrt(m) / spec.s)
    return 1.0 - spec.k / m  # topk and randk


def bits_cost(spec, m):
    """Payload bits per transmitted vector (64-bit floats, no headers)."""
    spec.validate_for(m)
    if spec.kind == "identity":
        return 64 * m
    if spec.kind == "quant":
        # one 64-bit norm scalar, then sign bit + level index per coordinate
        return 64 + m * (1 + math.ceil(math.log2(spec.s + 2)))
    # value + index per kept coordinate
    return spec.k * (64 + math.ceil(math.log2(m)))


def compress(spec, x, rng=None):
    """Apply the operator; rng is only consumed by quant and randk."""
    x = np.asarray(x, dtype=float)
    m = x.shape[0]
    spec.validate_for(m)
    if not np.all(np.isfinite(x)):
        raise ValueError("compression input must be finite")
    bits = bits_cost(spec, m)

    if spec.kind == "identity":
        return CompressionResult(x.copy(), bits)

    if spec.kind == "quant":
        norm = np.linalg.norm(x)
        if norm == 0.0:
            return CompressionResult(np.zeros(m), bits)
        scaled = spec.s * np.abs(x) / norm
        low = np.floor(scaled)
        delta = scaled - low
        level = low + (rng.random(m) < delta)
        return CompressionResult(norm / spec.s * np.sign(x) * level, bits)

    out = np.zeros(m)
    if spec.kind == "topk":
        # stable sort on -|x| breaks magnitude ties toward the lowest index
        keep = np.argsort(-np.abs(x), kind="stable")[: spec.k]
    else:  # randk: uniform support, entries transmitted unscaled
        keep = rng.permutation(m)[: spec.k]
    out[keep] = x[keep]
    return CompressionResult(out, bits)
