"""Scalar-loop reference implementations of the ECA attention stages.

These walk pixels, samples and channels one at a time in plain Python, sharing
no code with the vectorised block, and serve as independent oracles for it.
"""

import math

import numpy as np

from ..eca import EcaBlockParams
from ..tensor import BoolTensor, LinearParams, Tensor


def _affine(layer: LinearParams, x: list[float]) -> list[float]:
    out = []
    for row in range(layer.weight.shape[0]):
        total = float(layer.bias[row])
        for col in range(layer.weight.shape[1]):
            total += float(layer.weight[row, col]) * x[col]
        out.append(total)
    return out


def _dot(a: list[float], b: list[float]) -> float:
    total = 0.0
    for x, y in zip(a, b):
        total += x * y
    return total


def _softmax(logits: list[float]) -> list[float]:
    top = max(logits)
    exps = [math.exp(v - top) for v in logits]
    total = sum(exps)
    return [e / total for e in exps]


def _attend(query: list[float], keys: list[list[float]], values: list[list[float]]) -> list[float]:
    scale = 1.0 / math.sqrt(len(query))
    weights = _softmax([_dot(query, key) * scale for key in keys])
    out = [0.0] * len(values[0])
    for weight, value in zip(weights, values):
        for c, v in enumerate(value):
            out[c] += weight * v
    return out


def cross_attention_loop(samples: Tensor, valid: BoolTensor, params: EcaBlockParams) -> Tensor:
    """Near-views cross-attention ``[K, P, S, C] -> [P, S, C]``."""
    k, p, s, c = samples.shape
    out = np.zeros((p, s, c))
    for pixel in range(p):
        keys = []
        values = []
        for view in range(1, k):
            for sample in range(s):
                if valid[view, pixel, sample]:
                    entry = [float(x) for x in samples[view, pixel, sample]]
                    keys.append(_affine(params.cross_k, entry))
                    values.append(_affine(params.cross_v, entry))
        for sample in range(s):
            target = [float(x) for x in samples[0, pixel, sample]]
            if k == 1:
                out[pixel, sample] = target
                continue
            if keys:
                attended = _attend(_affine(params.cross_q, target), keys, values)
            else:
                attended = _affine(params.cross_v, target)
            update = _affine(params.cross_out, attended)
            out[pixel, sample] = [t + u for t, u in zip(target, update)]
    return out


def ray_attention_loop(v_tilde: Tensor, params: EcaBlockParams) -> Tensor:
    """Self-attention among the samples of each ray ``[P, S, C] -> [P, S, C]``."""
    p, s, _ = v_tilde.shape
    out = np.zeros_like(v_tilde)
    for pixel in range(p):
        entries = [[float(x) for x in v_tilde[pixel, sample]] for sample in range(s)]
        keys = [_affine(params.ray_k, e) for e in entries]
        values = [_affine(params.ray_v, e) for e in entries]
        for sample, entry in enumerate(entries):
            attended = _attend(_affine(params.ray_q, entry), keys, values)
            update = _affine(params.ray_out, attended)
            out[pixel, sample] = [t + u for t, u in zip(entry, update)]
    return out


def fusion_loop(v_bar: Tensor, params: EcaBlockParams) -> Tensor:
    """Softmax-weighted fusion of each ray's samples ``[P, S, C] -> [P, C]``."""
    p, s, c = v_bar.shape
    out = np.zeros((p, c))
    for pixel in range(p):
        entries = [[float(x) for x in v_bar[pixel, sample]] for sample in range(s)]
        weights = _softmax([_affine(params.fusion, e)[0] for e in entries])
        for weight, entry in zip(weights, entries):
            for channel in range(c):
                out[pixel, channel] += weight * entry[channel]
    return out
