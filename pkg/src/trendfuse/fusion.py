"""Feature stack between raw inputs and the recurrent predictor.

Text features are lifted by an affine embedding, scanned by a valid 1-D
convolution with ReLU, and blended with the recurrent output through a
learnable convex gate. Attention weighting assigns softmax weights over a
set of candidate feature vectors using a dot-product score against a
state vector.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from . import numerics as nm
from .errors import ContractError, ShapeError
from .numerics import ParameterStore, Tensor


def embed(feature: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Affine lift of a feature row-batch into the embedding width."""
    w, b = params["w_e"], params["b_e"]
    if feature.shape[1] != w.shape[0]:
        raise ShapeError(f"feature width {feature.shape} does not match "
                         f"embedding weights {w.shape}")
    return nm.add(nm.matmul(feature, w), b)


def conv_text(embedded: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Valid stride-1 cross-correlation over each row, bias, then ReLU."""
    return nm.relu(nm.add(nm.conv1d_rows(embedded, params["w_c"]), params["b_c"]))


def attention_over_features(query: Tensor,
                            feats: Sequence[Tensor]) -> tuple[Tensor, Tensor]:
    """Softmax-weighted combination of candidate features.

    Scores are plain dot products between the query rows and each
    candidate; returns (weights of shape (B, m), context of query width).
    """
    feats = list(feats)
    if not feats:
        raise ContractError("need at least one candidate feature")
    for f in feats:
        if f.shape != query.shape:
            raise ShapeError(f"candidate shape {f.shape} does not match "
                             f"query shape {query.shape}")
    scores = nm.concat([nm.sum_(nm.mul(query, f), axis=1, keepdims=True)
                        for f in feats], axis=1)
    alpha = nm.softmax(scores, axis=-1)
    context = nm.mul(alpha[:, 0:1], feats[0])
    for j in range(1, len(feats)):
        context = nm.add(context, nm.mul(alpha[:, j:j + 1], feats[j]))
    return alpha, context


def fuse(recurrent_out: Tensor, text_context: Tensor,
         params: Mapping[str, Tensor]) -> Tensor:
    """Convex blend Z = g * recurrent + (1 - g) * text, g = sigmoid(gamma_raw).

    When the text context is narrower or wider than the recurrent output it
    first passes through the learned projection in `params`.
    """
    if not (np.isfinite(recurrent_out.data).all() and np.isfinite(text_context.data).all()):
        raise ContractError("fuse inputs must be finite")
    if text_context.shape[1] != recurrent_out.shape[1]:
        if "proj_w" not in params:
            raise ShapeError(f"text context width {text_context.shape[1]} needs a "
                             f"projection to {recurrent_out.shape[1]}")
        text_context = nm.add(nm.matmul(text_context, params["proj_w"]), params["proj_b"])
    gamma = nm.sigmoid(params["gamma_raw"])
    blend = nm.mul(gamma, recurrent_out)
    return nm.add(blend, nm.mul(nm.sub(1.0, gamma), text_context))


def conv_output_len(input_len: int, kernel_len: int) -> int:
    if kernel_len > input_len:
        raise ShapeError(f"kernel length {kernel_len} exceeds input length {input_len}")
    return input_len - kernel_len + 1


def add_text_path_params(store: ParameterStore, rng: np.random.Generator,
                         feature_len: int, embed_width: int, kernel_len: int,
                         prefix: str = "text") -> None:
    """Create the embedding and convolution parameters for the text path."""
    conv_output_len(embed_width, kernel_len)
    store.add(f"{prefix}.w_e", nm.uniform_init(rng, feature_len, (feature_len, embed_width)))
    store.add(f"{prefix}.b_e", np.zeros((1, embed_width)))
    store.add(f"{prefix}.w_c", nm.uniform_init(rng, kernel_len, (kernel_len,)))
    store.add(f"{prefix}.b_c", np.zeros((1, 1)))


def add_fuse_gate_params(store: ParameterStore, rng: np.random.Generator,
                         conv_len: int, out_width: int,
                         prefix: str = "text") -> None:
    """Create the gate scalar plus the width-aligning projection if needed."""
    if conv_len != out_width:
        store.add(f"{prefix}.proj_w", nm.uniform_init(rng, conv_len, (conv_len, out_width)))
        store.add(f"{prefix}.proj_b", np.zeros((1, out_width)))
    store.add(f"{prefix}.gamma_raw", np.zeros((1, 1)))
