"""Reproducible experiment protocols: ablation, sweep, attention dumps.

"Valence" and "arousal" are two independently seeded instances of the
same synthetic protocol (the generator produces one track per call), so
every (variant, gating) cell trains one model per output dimension on
shared per-dimension splits. All derived randomness flows from the
config seed through fixed stream labels, making whole runs replayable.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .attention import VARIANTS
from .gating import FusionModel, ModelFlags
from .metrics import ccc
from .synth import Regime, SyntheticSequence, corrupt_missing, derive_seed, generate
from .training import TrainConfig, TrainingDivergence, evaluate, fit

OUTPUT_DIMS = ("valence", "arousal")
DEFAULT_SWEEP_FRACTIONS = (0.0, 0.1, 0.2, 0.4, 0.6, 0.8)

# fixed labels for seed-stream derivation
_DATA_STREAM = 1000
_MODEL_STREAM = 2000
_AUGMENT_STREAM = 77
_SWEEP_STREAM = 555


def relative_improvement(base: float, new: float) -> float:
    """(new - base) / base in percent, the ablation table's delta."""
    if base == 0:
        raise ZeroDivisionError("relative improvement undefined for a zero base")
    return (new - base) / base * 100.0


@dataclass
class ExperimentConfig:
    variant: str = "CA"
    iaca: bool = True
    regime: Regime = field(default_factory=Regime)
    d: int = 32
    n_clips: int = 64
    n_train: int = 24
    n_val: int = 8
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    flags: ModelFlags = field(default_factory=ModelFlags)
    out_dir: str = "."

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.d < 2 or self.n_clips < 2:
            raise ValueError("d and n_clips must both be >= 2")
        if self.n_train < 1 or self.n_val < 1:
            raise ValueError("both splits need at least one sequence")
        self.regime.validate()
        self.train.validate()
        self.flags.validate()

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "regime" in data:
            data["regime"] = Regime(**data["regime"])
        if "train" in data:
            data["train"] = TrainConfig(**data["train"])
        if "flags" in data:
            data["flags"] = ModelFlags(**data["flags"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def _augment_missing_audio(seqs: Sequence[SyntheticSequence],
                           fraction: float) -> List[SyntheticSequence]:
    out = []
    for s in seqs:
        xa = corrupt_missing(s.xa, fraction, seed=derive_seed(s.seed, _AUGMENT_STREAM))
        out.append(replace(s, xa=xa))
    return out


def prepare_splits(cfg: ExperimentConfig, output_dim: str):
    """Train/val splits for one output dimension, sharing one embedding.

    regime.corrupt_fraction > 0 zeroes that fraction of audio clips in
    each training sequence (a contiguous block, seeded per sequence) so
    models train under partially missing audio; validation stays clean.
    """
    if output_dim not in OUTPUT_DIMS:
        raise ValueError(f"output_dim must be one of {OUTPUT_DIMS}, got {output_dim!r}")
    ds_seed = derive_seed(cfg.seed, _DATA_STREAM + OUTPUT_DIMS.index(output_dim))
    seqs = generate(cfg.regime, cfg.d, cfg.n_clips, cfg.n_train + cfg.n_val, ds_seed)
    train, val = seqs[:cfg.n_train], seqs[cfg.n_train:]
    if cfg.regime.corrupt_fraction > 0:
        train = _augment_missing_audio(train, cfg.regime.corrupt_fraction)
    return train, val


def train_one(cfg: ExperimentConfig, output_dim: str):
    """Train a model for one output dimension; returns (model, result, val)."""
    cfg.validate()
    train, val = prepare_splits(cfg, output_dim)
    label = OUTPUT_DIMS.index(output_dim)
    model_seed = derive_seed(cfg.seed, _MODEL_STREAM + 2 * label + int(cfg.iaca))
    model = FusionModel.create(cfg.d, cfg.variant, cfg.iaca, flags=cfg.flags,
                               seed=model_seed)
    result = fit(model, train, val, cfg.train)
    return model, result, val


# ----------------------------------------------------------------- ablation

@dataclass
class AblationRow:
    variant: str
    iaca: str  # "no" | "yes" | "delta_pct"
    valence: float
    arousal: float


def run_ablation(cfg: ExperimentConfig,
                 variants: Sequence[str] = VARIANTS) -> List[AblationRow]:
    """Train every (variant, gating) cell twice (valence, arousal).

    A diverging cell is recorded as NaN and the matrix keeps going. Rows
    come in threes per variant: without gating, with gating, then the
    relative improvement in percent.
    """
    rows = []
    for variant in variants:
        scored = {}
        for iaca in (False, True):
            cell = replace(cfg, variant=variant, iaca=iaca)
            values = {}
            for dim in OUTPUT_DIMS:
                try:
                    model, _, val = train_one(cell, dim)
                    values[dim] = evaluate(model, val)
                except TrainingDivergence as exc:
                    print(f"cell ({variant}, iaca={iaca}, {dim}) diverged: {exc}",
                          file=sys.stderr)
                    values[dim] = float("nan")
            scored[iaca] = values
            rows.append(AblationRow(variant, "yes" if iaca else "no",
                                    values["valence"], values["arousal"]))
        deltas = []
        for dim in OUTPUT_DIMS:
            base, new = scored[False][dim], scored[True][dim]
            if np.isnan(base) or np.isnan(new) or base == 0:
                deltas.append(float("nan"))
            else:
                deltas.append(relative_improvement(base, new))
        rows.append(AblationRow(variant, "delta_pct", deltas[0], deltas[1]))
    return rows


def save_ablation(rows: Sequence[AblationRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "iaca", "valence_ccc", "arousal_ccc"])
        for r in rows:
            digits = 1 if r.iaca == "delta_pct" else 3
            writer.writerow([r.variant, r.iaca,
                             f"{r.valence:.{digits}f}", f"{r.arousal:.{digits}f}"])


def load_ablation(path) -> List[AblationRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(AblationRow(rec["variant"], rec["iaca"],
                                    float(rec["valence_ccc"]),
                                    float(rec["arousal_ccc"])))
    return rows


# -------------------------------------------------------------------- sweep

@dataclass
class SweepRow:
    fraction: float
    valence: float
    arousal: float


def evaluate_with_missing_audio(model: FusionModel,
                                seqs: Sequence[SyntheticSequence],
                                fraction: float) -> float:
    """Split CCC with a fraction of each sequence's audio zeroed."""
    preds, golds = [], []
    for s in seqs:
        xa = corrupt_missing(s.xa, fraction, seed=derive_seed(s.seed, _SWEEP_STREAM))
        preds.append(model.predict_values(xa, s.xv))
        golds.append(np.asarray(s.target).reshape(1, -1))
    return ccc(np.hstack(preds), np.hstack(golds))


def missing_modality_sweep(valence_model: FusionModel, arousal_model: FusionModel,
                           valence_val: Sequence[SyntheticSequence],
                           arousal_val: Sequence[SyntheticSequence],
                           fractions: Sequence[float] = DEFAULT_SWEEP_FRACTIONS,
                           ) -> List[SweepRow]:
    """Test-time robustness curve; no retraining, fractions ascending."""
    rows = []
    for fraction in sorted(fractions):
        rows.append(SweepRow(
            fraction,
            evaluate_with_missing_audio(valence_model, valence_val, fraction),
            evaluate_with_missing_audio(arousal_model, arousal_val, fraction)))
    return rows


def save_sweep(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction", "valence_ccc", "arousal_ccc"])
        for r in rows:
            writer.writerow([f"{r.fraction:g}", f"{r.valence:.3f}", f"{r.arousal:.3f}"])


def load_sweep(path) -> List[SweepRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(SweepRow(float(rec["fraction"]), float(rec["valence_ccc"]),
                                 float(rec["arousal_ccc"])))
    return rows


# -------------------------------------------------------------- attn dumps

def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def _source_weight(weights: np.ndarray) -> np.ndarray:
    # per-clip pull of the map: total weight each source clip receives,
    # summed over whichever axis the map normalizes
    if np.allclose(weights.sum(axis=0), 1.0, atol=1e-6):
        return weights.sum(axis=1)
    return weights.sum(axis=0)


def dump_attention(model: FusionModel, seq: SyntheticSequence) -> dict:
    """Per-clip attention magnitudes and gate scores, plot-ready.

    Attention magnitudes are min-max normalized over the sequence; gate
    scores are dumped as-is (already rows on the simplex).
    """
    pred, diag = model.forward(seq.xa, seq.xv)
    dump = {
        "variant": model.variant,
        "iaca": model.iaca,
        "n_clips": int(seq.xa.shape[1]),
        "audio_attention": _minmax(_source_weight(diag.audio_weights)).tolist(),
        "visual_attention": _minmax(_source_weight(diag.visual_weights)).tolist(),
        "prediction": pred.ravel().tolist(),
        "target": np.asarray(seq.target).ravel().tolist(),
    }
    if model.iaca:
        dump["stage1_audio"] = diag.stage1_audio.tolist()
        dump["stage1_visual"] = diag.stage1_visual.tolist()
        dump["stage2"] = diag.stage2.tolist()
    return dump


def save_attention_dump(dump: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(dump, fh, indent=2, sort_keys=True)


def load_attention_dump(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
