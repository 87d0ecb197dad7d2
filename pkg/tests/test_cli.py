import json

import numpy as np
import pytest

from iaca.checkpoint import load_checkpoint
from iaca.cli import main
from iaca.experiments import load_ablation, load_attention_dump, load_sweep
from iaca.synth import load_dataset
from iaca.training import load_history

TINY = ["--d", "6", "--clips", "8", "--n-train", "4", "--n-val", "2",
        "--epochs", "2", "--batch-size", "4", "--seed", "21", "--patience", "0"]


def test_gen_data_writes_loadable_dataset(tmp_path):
    out = tmp_path / "data.csv"
    rc = main(["gen-data", "--d", "5", "--clips", "7", "--count", "3",
               "--seed", "2", "--regime", "weak_conflicting", "--noise-sigma",
               "0.5", "--out-dir", str(tmp_path), "--out", "data.csv"])
    assert rc == 0
    seqs = load_dataset(out)
    assert len(seqs) == 3
    assert seqs[0].xa.shape == (5, 7)
    assert seqs[0].regime.kind == "weak_conflicting"


def test_train_writes_checkpoint_and_history(tmp_path, capsys):
    rc = main(["train", *TINY, "--variant", "CA", "--iaca",
               "--dims", "valence", "--out-dir", str(tmp_path)])
    assert rc == 0
    assert "best val CCC" in capsys.readouterr().out
    ckpt = load_checkpoint(tmp_path / "ca_iaca_valence.ckpt")
    assert ckpt.model.variant == "CA"
    assert ckpt.model.iaca
    assert ckpt.meta["output_dim"] == "valence"
    assert ckpt.meta["experiment"]["d"] == 6
    history = load_history(tmp_path / "ca_iaca_valence_history.csv")
    assert len(history) == 2


def test_train_respects_name_and_no_iaca(tmp_path):
    rc = main(["train", *TINY, "--variant", "JCA", "--no-iaca",
               "--dims", "valence", "--name", "probe",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    ckpt = load_checkpoint(tmp_path / "probe.ckpt")
    assert not ckpt.model.iaca
    assert ckpt.model.variant == "JCA"


def test_ablation_csv(tmp_path):
    rc = main(["ablation", *TINY, "--variants", "CA",
               "--out-dir", str(tmp_path), "--out", "ab.csv"])
    assert rc == 0
    rows = load_ablation(tmp_path / "ab.csv")
    assert [r.iaca for r in rows] == ["no", "yes", "delta_pct"]


def test_sweep_needs_matched_pair(tmp_path):
    main(["train", *TINY, "--variant", "CA", "--iaca", "--out-dir", str(tmp_path)])
    with pytest.raises(SystemExit):
        main(["sweep",
              "--checkpoint-valence", str(tmp_path / "ca_iaca_arousal.ckpt"),
              "--checkpoint-arousal", str(tmp_path / "ca_iaca_valence.ckpt")])


def test_sweep_and_dump_from_checkpoints(tmp_path):
    rc = main(["train", *TINY, "--variant", "CA", "--iaca",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    rc = main(["sweep",
               "--checkpoint-valence", str(tmp_path / "ca_iaca_valence.ckpt"),
               "--checkpoint-arousal", str(tmp_path / "ca_iaca_arousal.ckpt"),
               "--fractions", "0,0.5", "--out-dir", str(tmp_path),
               "--out", "sweep.csv"])
    assert rc == 0
    rows = load_sweep(tmp_path / "sweep.csv")
    assert [r.fraction for r in rows] == [0.0, 0.5]
    ckpt = load_checkpoint(tmp_path / "ca_iaca_valence.ckpt")
    assert rows[0].valence == pytest.approx(ckpt.meta["best_val_ccc"], abs=5e-4)

    rc = main(["dump-attn", "--checkpoint", str(tmp_path / "ca_iaca_valence.ckpt"),
               "--index", "1", "--out-dir", str(tmp_path), "--out", "attn.json"])
    assert rc == 0
    dump = load_attention_dump(tmp_path / "attn.json")
    assert dump["variant"] == "CA"
    assert len(dump["audio_attention"]) == 8
    assert np.array(dump["stage2"]).shape == (8, 3)


def test_dump_attn_index_out_of_range(tmp_path):
    main(["train", *TINY, "--variant", "CA", "--iaca", "--dims", "valence",
          "--out-dir", str(tmp_path)])
    with pytest.raises(SystemExit):
        main(["dump-attn", "--checkpoint", str(tmp_path / "ca_iaca_valence.ckpt"),
              "--index", "99", "--out-dir", str(tmp_path)])


def test_env_var_sets_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("IACA_RESULTS_DIR", str(tmp_path / "envroot"))
    rc = main(["gen-data", "--d", "4", "--clips", "6", "--count", "2",
               "--out", "env.csv"])
    assert rc == 0
    assert (tmp_path / "envroot" / "env.csv").exists()


def test_flag_overrides_beat_config_file(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"d": 6, "n_clips": 8, "seed": 3,
                                    "out_dir": str(tmp_path)}))
    rc = main(["gen-data", "--config", str(cfg_file), "--d", "9",
               "--count", "2", "--out", "d9.csv"])
    assert rc == 0
    seqs = load_dataset(tmp_path / "d9.csv")
    assert seqs[0].xa.shape == (9, 8)


def test_invalid_values_exit_nonzero(tmp_path, capsys):
    rc = main(["gen-data", "--d", "1", "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_variant_list_rejected(tmp_path):
    with pytest.raises(SystemExit):
        main(["ablation", *TINY, "--variants", "CA,NOPE",
              "--out-dir", str(tmp_path)])
