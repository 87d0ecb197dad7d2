"""Attention blocks over per-clip bimodal feature matrices.

All inputs are d x L matrices: one column of deep features per clip of a
sequence. The baseline block computes the audio/visual cross-correlation,
normalizes it into stochastic weight maps, applies those back to each
modality, and squashes through tanh around a residual. The transformer,
joint, and recursive variants reuse the same conventions so the gating
layer downstream can treat them interchangeably.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

from .autodiff import (
    ShapeError,
    Tensor,
    concat_rows,
    matmul,
    relu,
    scale,
    softmax,
    tanh,
    tile_cols,
    transpose,
)

VARIANTS = ("CA", "TCA", "JCA", "RJCA")


@dataclass
class AttendedPair:
    """Attended features for both modalities plus the weight maps that
    produced them (kept for interpretability dumps)."""

    audio: Tensor  # d x L
    visual: Tensor  # d x L
    audio_weights: Tensor  # L x L, applied to the audio features
    visual_weights: Tensor  # L x L, applied to the visual features


@dataclass
class TcaBlockParams:
    """Weights of one transformer-style direction (queries from one modality,
    keys/values from the other)."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    ff1_w: Tensor
    ff1_b: Tensor
    ff2_w: Tensor
    ff2_b: Tensor


@dataclass
class JcaParams:
    """Joint cross-attention weights: the concat+FC map producing the joint
    feature plus one cross-correlation matrix per modality."""

    joint_w: Tensor  # d x 2d
    joint_b: Tensor  # d x 1
    cross_a: Tensor  # d x d
    cross_v: Tensor  # d x d


def _check_pair(xa: Tensor, xv: Tensor) -> None:
    if xa.shape != xv.shape:
        raise ShapeError(f"modality features must share d and L, got {xa.shape} vs {xv.shape}")


def cross_correlation(xa, xv, w) -> Tensor:
    """L x L correlation of the two modalities through learned weights:
    xa^T . w . xv."""
    _check_pair(xa, xv)
    return matmul(matmul(transpose(xa), w), xv)


def cross_attention(xa, xv, w, av_axis: str = "columns") -> AttendedPair:
    """Bidirectional cross-attention with residual tanh squashing.

    The audio weight map is the column-wise softmax of the correlation
    matrix; the visual map normalizes its transpose along `av_axis`
    (both normalization conventions are defensible, so the axis is a
    switch rather than a constant).
    """
    z = cross_correlation(xa, xv, w)
    audio_weights = softmax(z, axis="columns")
    visual_weights = softmax(transpose(z), axis=av_axis)
    att_a = tanh(xa + matmul(xa, audio_weights))
    att_v = tanh(xv + matmul(xv, visual_weights))
    return AttendedPair(att_a, att_v, audio_weights, visual_weights)


def self_attention(x, w) -> Tensor:
    """Intra-modal analogue of the cross block: the modality attends to its
    own clips, same residual and tanh."""
    z = matmul(matmul(transpose(x), w), x)
    weights = softmax(z, axis="columns")
    return tanh(x + matmul(x, weights))


def tca_block(xq, xkv, p: TcaBlockParams) -> tuple[Tensor, Tensor]:
    """Single-head transformer-style block for one direction.

    Queries come from xq, keys and values from xkv; dot products are scaled
    by 1/sqrt(d) and normalized across each query's row. A per-clip
    feed-forward follows, with residuals around both stages and a final
    tanh so outputs stay in the same bounded range as the other blocks.
    Returns (attended features, L x L row-stochastic weights).
    """
    _check_pair(xq, xkv)
    d, n_clips = xq.shape
    q = matmul(p.wq, xq)
    k = matmul(p.wk, xkv)
    v = matmul(p.wv, xkv)
    scores = scale(matmul(transpose(q), k), 1.0 / d**0.5)
    weights = softmax(scores, axis="rows")
    attended = matmul(v, transpose(weights))
    h = xq + attended
    hidden = relu(matmul(p.ff1_w, h) + tile_cols(p.ff1_b, n_clips))
    ff = matmul(p.ff2_w, hidden) + tile_cols(p.ff2_b, n_clips)
    return tanh(h + ff), weights


def tca_attention(xa, xv, p_audio: TcaBlockParams, p_visual: TcaBlockParams) -> AttendedPair:
    """Both transformer-style directions packaged like the other variants."""
    att_a, w_a = tca_block(xa, xv, p_audio)
    att_v, w_v = tca_block(xv, xa, p_visual)
    return AttendedPair(att_a, att_v, w_a, w_v)


def _attend_to(x, context, w) -> tuple[Tensor, Tensor]:
    # One query-side pass of the cross block: x correlates with a context
    # matrix, normalizes per column, and re-weights its own clips.
    z = matmul(matmul(transpose(x), w), context)
    weights = softmax(z, axis="columns")
    return tanh(x + matmul(x, weights)), weights


def joint_cross_attention(xa, xv, p: JcaParams) -> AttendedPair:
    """Each modality cross-attends against a shared joint feature.

    The joint feature is a learned linear map of the row-concatenated
    modalities back down to d; each modality then runs the query side of
    the cross block with the joint feature standing in for the other
    modality.
    """
    _check_pair(xa, xv)
    n_clips = xa.shape[1]
    joint = matmul(p.joint_w, concat_rows(xa, xv)) + tile_cols(p.joint_b, n_clips)
    att_a, w_a = _attend_to(xa, joint, p.cross_a)
    att_v, w_v = _attend_to(xv, joint, p.cross_v)
    return AttendedPair(att_a, att_v, w_a, w_v)


JcaParamsLike = Union[JcaParams, Sequence[JcaParams]]


def recursive_jca(xa, xv, params: JcaParamsLike, t: int) -> AttendedPair:
    """Iterated joint cross-attention: attended outputs feed back in t times.

    `params` may be a single block (weights shared across iterations, the
    default) or a sequence of t blocks for per-iteration weights. t=1 is
    exactly one joint cross-attention pass.
    """
    if t < 1:
        raise ValueError(f"recursion depth must be at least 1, got {t}")
    if isinstance(params, JcaParams):
        blocks = [params] * t
    else:
        blocks = list(params)
        if len(blocks) != t:
            raise ValueError(f"expected {t} parameter blocks, got {len(blocks)}")
    cur_a, cur_v = xa, xv
    pair = None
    for block in blocks:
        pair = joint_cross_attention(cur_a, cur_v, block)
        cur_a, cur_v = pair.audio, pair.visual
    return pair
