"""Two-stage gated fusion over attended bimodal features.

Stage 1 runs per modality: a gating layer scores each clip's attended
feature against its unattended counterpart (raw by default, optionally a
self-attention pass) and blends the two with softmax weights. The blended
modalities are fused through a joint representation layer, and stage 2
gates among the gated audio, gated visual, and joint candidates. A small
MLP maps the fused d-vector per clip to a scalar in [-1, 1].

The gate scores are computed from the attended features alone and carry
no bias term. A small temperature sharpens the softmax so the gates act
nearly as selectors while staying differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attention import (
    VARIANTS,
    AttendedPair,
    JcaParams,
    TcaBlockParams,
    cross_attention,
    joint_cross_attention,
    recursive_jca,
    self_attention,
    tca_attention,
)
from .autodiff import (
    ShapeError,
    Tensor,
    concat_rows,
    hadamard,
    matmul,
    relu,
    softmax,
    take_col,
    tanh,
    tile_cols,
    tile_rows,
    transpose,
)

_STAGE1_INPUTS = ("raw", "self_attended")
_AV_AXES = ("columns", "rows")


@dataclass
class GateScores:
    """Per-clip selection weights, one row per clip on the simplex."""

    scores: Tensor  # L x K, K in {2, 3}


@dataclass
class GateParams:
    w_gl_a: Tensor  # d x 2
    w_gl_v: Tensor  # d x 2
    w_avl: Tensor  # 3d x 3
    temperature: float


@dataclass
class JointParams:
    w: Tensor  # d x 2d
    b: Tensor  # d x 1


@dataclass
class HeadParams:
    w1: Tensor  # h x d
    b1: Tensor  # h x 1
    w2: Tensor  # 1 x h
    b2: Tensor  # 1 x 1


def _replicate_gate_column(g: Tensor, k: int, d: int) -> Tensor:
    # Column k of the L x K score matrix, replicated to d rows so it can
    # multiply a d x L feature entrywise.
    return tile_rows(transpose(take_col(g, k)), d)


def stage1_gate(x_base, x_att, w_gl, temperature: float) -> tuple[Tensor, GateScores]:
    """Blend a modality's attended feature with its unattended one.

    Logits come from the attended feature: W_go = x_att^T . w_gl (L x 2),
    normalized per clip at the given temperature. Column 0 weights the
    base feature, column 1 the attended one; the convex blend passes
    through ReLU.
    """
    if x_base.shape != x_att.shape:
        raise ShapeError(f"candidate shapes differ: {x_base.shape} vs {x_att.shape}")
    d = x_att.shape[0]
    if w_gl.shape != (d, 2):
        raise ShapeError(f"gate weights must be {d}x2, got {w_gl.shape}")
    logits = matmul(transpose(x_att), w_gl)
    g = softmax(logits, axis="rows", temperature=temperature)
    g0 = _replicate_gate_column(g, 0, d)
    g1 = _replicate_gate_column(g, 1, d)
    out = relu(hadamard(x_base, g0) + hadamard(x_att, g1))
    return out, GateScores(g)


def joint_representation(x_ga, x_gv, p: JointParams) -> Tensor:
    """Concatenate the gated modalities and project back to d rows."""
    if x_ga.shape != x_gv.shape:
        raise ShapeError(f"gated shapes differ: {x_ga.shape} vs {x_gv.shape}")
    n_clips = x_ga.shape[1]
    return matmul(p.w, concat_rows(x_ga, x_gv)) + tile_cols(p.b, n_clips)


def stage2_gate(x_ga, x_gv, x_gav, w_avl, temperature: float) -> tuple[Tensor, GateScores]:
    """Select among gated-audio, gated-visual, and joint candidates.

    The gate sees all three stacked per clip (3d x L) so its scores can
    depend on every candidate; columns 0..2 of the softmaxed L x 3 logits
    weight x_ga, x_gv, x_gav in that order.
    """
    if not (x_ga.shape == x_gv.shape == x_gav.shape):
        raise ShapeError("stage-2 candidates must share one shape, got "
                         f"{x_ga.shape}, {x_gv.shape}, {x_gav.shape}")
    d = x_ga.shape[0]
    if w_avl.shape != (3 * d, 3):
        raise ShapeError(f"a-v gate weights must be {3 * d}x3, got {w_avl.shape}")
    stacked = concat_rows(x_ga, x_gv, x_gav)
    g = softmax(matmul(transpose(stacked), w_avl), axis="rows", temperature=temperature)
    parts = [hadamard(x, _replicate_gate_column(g, k, d))
             for k, x in enumerate((x_ga, x_gv, x_gav))]
    return relu(parts[0] + parts[1] + parts[2]), GateScores(g)


def predict(x_fused, head: HeadParams) -> Tensor:
    """MLP head: ReLU hidden layer, linear output, tanh into [-1, 1]."""
    n_clips = x_fused.shape[1]
    hidden = relu(matmul(head.w1, x_fused) + tile_cols(head.b1, n_clips))
    return tanh(matmul(head.w2, hidden) + tile_cols(head.b2, n_clips))


@dataclass
class ModelFlags:
    """Behavior switches that change wiring, not learned values."""

    av_axis: str = "columns"
    stage1_input: str = "raw"
    temperature: float = 0.1
    rjca_iterations: int = 2
    rjca_shared_weights: bool = True
    head_hidden: int = 16

    def validate(self) -> None:
        if self.av_axis not in _AV_AXES:
            raise ValueError(f"av_axis must be one of {_AV_AXES}, got {self.av_axis!r}")
        if self.stage1_input not in _STAGE1_INPUTS:
            raise ValueError(
                f"stage1_input must be one of {_STAGE1_INPUTS}, got {self.stage1_input!r}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.rjca_iterations < 1:
            raise ValueError(f"rjca_iterations must be >= 1, got {self.rjca_iterations}")
        if self.head_hidden < 1:
            raise ValueError(f"head_hidden must be >= 1, got {self.head_hidden}")


@dataclass
class Diagnostics:
    """Forward-pass internals captured as plain arrays for dumping."""

    audio_weights: np.ndarray  # L x L
    visual_weights: np.ndarray  # L x L
    stage1_audio: Optional[np.ndarray] = None  # L x 2
    stage1_visual: Optional[np.ndarray] = None  # L x 2
    stage2: Optional[np.ndarray] = None  # L x 3


@dataclass
class FusionModel:
    """Parameter bundle plus wiring for one output dimension.

    Parameters live as named float64 arrays; bind() wraps them in fresh
    graph leaves, one set per forward/backward pass, so training never
    reuses a spent graph.
    """

    d: int
    variant: str
    iaca: bool
    flags: ModelFlags = field(default_factory=ModelFlags)
    params: dict = field(default_factory=dict)

    @classmethod
    def create(cls, d: int, variant: str, iaca: bool,
               flags: Optional[ModelFlags] = None, seed: int = 0) -> "FusionModel":
        if d < 1:
            raise ValueError(f"feature dimension must be >= 1, got {d}")
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        flags = flags if flags is not None else ModelFlags()
        flags.validate()
        rng = np.random.default_rng(seed)
        p: dict = {}

        def norm(name, rows, cols, std):
            p[name] = rng.normal(0.0, std, size=(rows, cols))

        def zeros(name, rows, cols):
            p[name] = np.zeros((rows, cols))

        if variant == "CA":
            norm("cross.w", d, d, 1.0 / d)
        elif variant == "TCA":
            h = 2 * d
            for side in ("tca_a", "tca_v"):
                norm(f"{side}.wq", d, d, 1.0 / np.sqrt(d))
                norm(f"{side}.wk", d, d, 1.0 / np.sqrt(d))
                norm(f"{side}.wv", d, d, 1.0 / np.sqrt(d))
                norm(f"{side}.ff1_w", h, d, 1.0 / np.sqrt(d))
                zeros(f"{side}.ff1_b", h, 1)
                norm(f"{side}.ff2_w", d, h, 1.0 / np.sqrt(h))
                zeros(f"{side}.ff2_b", d, 1)
        else:
            blocks = ["jca"]
            if variant == "RJCA" and not flags.rjca_shared_weights:
                blocks = [f"rjca{i}" for i in range(flags.rjca_iterations)]
            for b in blocks:
                norm(f"{b}.joint_w", d, 2 * d, 1.0 / np.sqrt(2 * d))
                zeros(f"{b}.joint_b", d, 1)
                norm(f"{b}.cross_a", d, d, 1.0 / d)
                norm(f"{b}.cross_v", d, d, 1.0 / d)

        if iaca:
            if flags.stage1_input == "self_attended":
                norm("self_a.w", d, d, 1.0 / d)
                norm("self_v.w", d, d, 1.0 / d)
            norm("gate_a.w", d, 2, 1.0 / np.sqrt(d))
            norm("gate_v.w", d, 2, 1.0 / np.sqrt(d))
            norm("gate_av.w", 3 * d, 3, 1.0 / np.sqrt(3 * d))

        norm("joint.w", d, 2 * d, 1.0 / np.sqrt(2 * d))
        zeros("joint.b", d, 1)
        hh = flags.head_hidden
        norm("head.w1", hh, d, 1.0 / np.sqrt(d))
        zeros("head.b1", hh, 1)
        norm("head.w2", 1, hh, 1.0 / np.sqrt(hh))
        zeros("head.b2", 1, 1)
        return cls(d=d, variant=variant, iaca=iaca, flags=flags, params=p)

    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def bind(self) -> dict:
        return {name: Tensor(value) for name, value in self.params.items()}

    def _attend(self, xa: Tensor, xv: Tensor, leaves: dict) -> AttendedPair:
        if self.variant == "CA":
            return cross_attention(xa, xv, leaves["cross.w"], self.flags.av_axis)
        if self.variant == "TCA":
            blocks = [TcaBlockParams(*(leaves[f"{side}.{f}"] for f in (
                "wq", "wk", "wv", "ff1_w", "ff1_b", "ff2_w", "ff2_b")))
                for side in ("tca_a", "tca_v")]
            return tca_attention(xa, xv, blocks[0], blocks[1])

        def jca_block(prefix):
            return JcaParams(*(leaves[f"{prefix}.{f}"] for f in (
                "joint_w", "joint_b", "cross_a", "cross_v")))

        if self.variant == "JCA":
            return joint_cross_attention(xa, xv, jca_block("jca"))
        t = self.flags.rjca_iterations
        if self.flags.rjca_shared_weights:
            return recursive_jca(xa, xv, jca_block("jca"), t)
        return recursive_jca(xa, xv, [jca_block(f"rjca{i}") for i in range(t)], t)

    def forward_graph(self, xa: Tensor, xv: Tensor,
                      leaves: dict) -> tuple[Tensor, Diagnostics]:
        """Build the prediction graph on already-bound parameter leaves."""
        pair = self._attend(xa, xv, leaves)
        joint = JointParams(leaves["joint.w"], leaves["joint.b"])
        head = HeadParams(leaves["head.w1"], leaves["head.b1"],
                          leaves["head.w2"], leaves["head.b2"])
        diag = Diagnostics(audio_weights=pair.audio_weights.value,
                           visual_weights=pair.visual_weights.value)
        if not self.iaca:
            fused = joint_representation(pair.audio, pair.visual, joint)
            return predict(fused, head), diag

        temperature = self.flags.temperature
        if self.flags.stage1_input == "self_attended":
            base_a = self_attention(xa, leaves["self_a.w"])
            base_v = self_attention(xv, leaves["self_v.w"])
        else:
            base_a, base_v = xa, xv
        x_ga, g_a = stage1_gate(base_a, pair.audio, leaves["gate_a.w"], temperature)
        x_gv, g_v = stage1_gate(base_v, pair.visual, leaves["gate_v.w"], temperature)
        x_gav = joint_representation(x_ga, x_gv, joint)
        fused, g_av = stage2_gate(x_ga, x_gv, x_gav, leaves["gate_av.w"], temperature)
        diag.stage1_audio = g_a.scores.value
        diag.stage1_visual = g_v.scores.value
        diag.stage2 = g_av.scores.value
        return predict(fused, head), diag

    def forward(self, xa_value, xv_value) -> tuple[np.ndarray, Diagnostics]:
        """Fresh-leaf forward on plain arrays; no gradient bookkeeping kept."""
        pred, diag = self.forward_graph(Tensor(xa_value), Tensor(xv_value), self.bind())
        return pred.value.copy(), diag

    def predict_values(self, xa_value, xv_value) -> np.ndarray:
        return self.forward(xa_value, xv_value)[0]


def iaca_forward(xa: Tensor, xv: Tensor, model: FusionModel,
                 leaves: Optional[dict] = None) -> tuple[Tensor, Diagnostics]:
    """Full pipeline on one sequence: attention, gating, prediction."""
    return model.forward_graph(xa, xv, leaves if leaves is not None else model.bind())
