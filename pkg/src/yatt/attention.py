"""Soft temporal attention over encoder annotations.

Each annotation is scored by a single affine map to a scalar, the scores are
softmax-normalised over time, and the context is the weighted sum of the
annotations.
"""
from dataclasses import dataclass

import numpy as np

from .numcore import ShapeError, glorot_uniform, softmax


@dataclass
class AttentionParams:
    d: np.ndarray  # (1, h2) alignment weights
    bias: np.ndarray  # (1,) alignment bias

    def __post_init__(self):
        self.d = np.ascontiguousarray(np.reshape(self.d, (1, -1)), dtype=np.float64)
        self.bias = np.ascontiguousarray(np.reshape(self.bias, (1,)), dtype=np.float64)

    @property
    def hidden(self):
        return self.d.shape[1]

    def n_params(self):
        return self.d.size + 1

    @classmethod
    def zeros(cls, h2):
        return cls(np.zeros((1, h2)), np.zeros(1))

    @classmethod
    def init(cls, rng, h2):
        return cls(glorot_uniform(rng, 1, h2), np.zeros(1))


@dataclass
class AttentionMap:
    weights: np.ndarray
    record_id: str = ""

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)


def attend(params, annotations):
    """Return ``(context, alphas, cache)``.

    ``annotations`` is ``(T, h2)`` or ``(B, T, h2)``; ``alphas`` has the
    matching ``(T,)`` / ``(B, T)`` shape.
    """
    a = np.asarray(annotations, dtype=np.float64)
    single = a.ndim == 2
    if single:
        a = a[None]
    if a.ndim != 3 or a.shape[1] == 0:
        raise ValueError(f"attend: need a nonempty annotation sequence, got shape {np.shape(annotations)}")
    if a.shape[2] != params.hidden:
        raise ShapeError(f"attend: annotations {a.shape} vs alignment weights {params.d.shape}")
    scores = a @ params.d[0] + params.bias[0]
    alphas = softmax(scores, axis=1)
    context = np.einsum("bt,bth->bh", alphas, a)
    cache = {"a": a, "alphas": alphas, "single": single}
    if single:
        return context[0], alphas[0], cache
    return context, alphas, cache


def attend_backward(params, cache, d_context):
    """Gradients through the weighted sum and the softmax Jacobian.

    Returns ``(grads, d_annotations)`` with grads keyed ``d`` and ``bias``.
    """
    a, alphas = cache["a"], cache["alphas"]
    dc = np.asarray(d_context, dtype=np.float64)
    if cache["single"]:
        dc = dc[None]
    if dc.shape != (a.shape[0], a.shape[2]) or params.hidden != a.shape[2]:
        raise ShapeError(f"attend_backward: upstream {np.shape(d_context)} vs annotations {a.shape}")
    d_alpha = np.einsum("bh,bth->bt", dc, a)
    d_scores = alphas * (d_alpha - np.sum(alphas * d_alpha, axis=1, keepdims=True))
    d_a = alphas[:, :, None] * dc[:, None, :] + d_scores[:, :, None] * params.d[0]
    grads = {
        "d": np.einsum("bt,bth->h", d_scores, a)[None, :],
        "bias": np.array([d_scores.sum()]),
    }
    return grads, (d_a[0] if cache["single"] else d_a)
