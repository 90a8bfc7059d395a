import csv
import json
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcsfqf.cli import main
from mcsfqf.cli.checkpoint import (MAGIC, CheckpointError, checkpoint_size, decode_checkpoint,
                                   encode_checkpoint, load_checkpoint, save_checkpoint)
from mcsfqf.cli.snapshot import restore, snapshot
from mcsfqf.config import ConfigError, RunConfig, load_config, parse_config
from mcsfqf.rl import TrainState, train

TINY = """\
n_mcn = 8
n_hidden = 8
N = 4
M = 8
C = 0.1
encoder_hidden = 8
batch_size = 4
warmup = 4
target_sync = 5
buffer_capacity = 100
checkpoint_every = 10
steps = 20
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestConfig:
    def test_defaults_are_published_table(self):
        c = RunConfig()
        assert (c.tau_L, c.tau_A, c.tau_B, c.g_A, c.g_B, c.g_L, c.v_th) == (2, 2, 2, 1, 1, 1, 1)
        assert (c.T, c.N, c.M, c.C, c.lr_adam, c.lr_rmsprop) == (8, 32, 64, 0.05, 1e-4, 2.5e-9)

    def test_parse_and_comments(self):
        c = parse_config("T = 4  # short\n\nmode = s-fqf\nencoder_hidden = 16, 8\n")
        assert c.T == 4 and c.mode == "s-fqf" and c.encoder_hidden == (16, 8)

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="'bogus'"):
            parse_config("bogus = 1")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="T"):
            parse_config("T = 2.5")

    def test_dumps_round_trip(self):
        c = parse_config(TINY + "gamma = 0.9\nseeds = 1,2\nsmooth_spikes = true\n")
        assert parse_config(c.dumps()) == c

    def test_shipped_desk_config_loads(self):
        c = load_config("configs/chain_desk.cfg")
        assert c.env == "chain-mdp" and c.huber_epsilon == 0.05


class TestCheckpointFormat:
    @given(st.dictionaries(st.text(min_size=1, max_size=8),
                           st.lists(st.integers(0, 4), min_size=0, max_size=3), max_size=4))
    def test_round_trip_bit_exact(self, shapes):
        rng = np.random.default_rng(0)
        tensors = {k: rng.normal(size=s).astype(np.float32) for k, s in shapes.items()}
        meta = {"step": 3, "rng": {"state": 2 ** 100}}
        back, m = decode_checkpoint(encode_checkpoint(tensors, meta))
        assert m == meta and list(back) == list(tensors)
        for k in tensors:
            assert back[k].shape == tensors[k].shape
            assert back[k].tobytes() == tensors[k].tobytes()

    def test_size_from_header(self):
        buf = encode_checkpoint({"a": np.zeros((3, 5)), "b": np.ones(2)}, {"x": 1})
        header_end = len(MAGIC) + 12 + (4 + 1 + 4 + 8) + (4 + 1 + 4 + 4)
        assert checkpoint_size(buf[:header_end]) == (2, len(buf))

    def test_bad_magic(self):
        buf = encode_checkpoint({}, {})
        with pytest.raises(CheckpointError, match="bad magic"):
            decode_checkpoint(b"XX" + buf[2:])

    def test_future_version(self):
        buf = encode_checkpoint({}, {})
        with pytest.raises(CheckpointError, match="unsupported"):
            decode_checkpoint(buf[:6] + b"99" + buf[8:])

    def test_every_truncation_rejected(self):
        buf = encode_checkpoint({"w": np.arange(6.0).reshape(2, 3)}, {"step": 1})
        for n in range(len(buf)):
            with pytest.raises(CheckpointError):
                decode_checkpoint(buf[:n])

    def test_dimension_overflow(self):
        raw = MAGIC + struct.pack("<IQ", 1, 2) + struct.pack("<I", 1) + b"w" + struct.pack("<II", 2, 2 ** 32 - 1) \
            + struct.pack("<I", 2 ** 32 - 1)
        with pytest.raises(CheckpointError, match="dimension overflow"):
            decode_checkpoint(raw + b"{}")

    def test_trailing_bytes(self):
        with pytest.raises(CheckpointError, match="trailing"):
            decode_checkpoint(encode_checkpoint({}, {}) + b"\0")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "nope.ckpt")

    def test_snapshot_restore_resumes_identically(self, tmp_path):
        cfg = parse_config(TINY)
        a = TrainState(cfg)
        train(cfg.replace(steps=10), state=a)
        save_checkpoint(tmp_path / "c.ckpt", *snapshot(a))
        _, agent, _, rng, step = restore(*load_checkpoint(tmp_path / "c.ckpt"))
        assert step == 10 and agent.updates == a.agent.updates
        for k, v in a.agent.params.items():
            assert agent.params[k].tobytes() == v.astype(np.float32).tobytes()
        assert rng.random() == a.rng.random()


class TestCommands:
    def test_train_steps_zero(self, capsys, tmp_path, cfg_file):
        code, out, _ = run(capsys, "train", "--config", cfg_file, "--steps", 0, "--out", tmp_path / "r")
        assert code == 0
        lines = (tmp_path / "r" / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == 1 and json.loads(lines[0])["config"]["steps"] == 0
        tensors, meta = load_checkpoint(tmp_path / "r" / "final.ckpt")
        assert meta["step"] == 0 and "online/w_f" in tensors

    def test_train_eval_inspect(self, capsys, tmp_path, cfg_file):
        code, out, _ = run(capsys, "train", "--config", cfg_file, "--out", tmp_path / "r")
        assert code == 0
        summary = json.loads(out)
        assert summary["steps"] == 20 and "oracle" in summary
        assert (tmp_path / "r" / "step-00000010.ckpt").is_file()
        recs = [json.loads(l) for l in (tmp_path / "r" / "metrics.jsonl").read_text().splitlines()[1:]]
        assert [r["step"] for r in recs] == list(range(20))

        ck = tmp_path / "r" / "final.ckpt"
        code, out1, _ = run(capsys, "eval", "--checkpoint", ck, "--episodes", 3)
        _, out2, _ = run(capsys, "eval", "--checkpoint", ck, "--episodes", 3)
        assert code == 0 and out1 == out2
        assert set(json.loads(out1)) >= {"score", "std", "std_pct", "episodes"}

        code, _, _ = run(capsys, "inspect", "--checkpoint", ck, "--out", tmp_path / "t.csv", "--units", 5)
        rows = list(csv.reader(open(tmp_path / "t.csv")))
        assert code == 0 and tuple(rows[0]) == ("t", "neuron", "v_b", "v_a", "u", "spike")
        assert len(rows) == 1 + 8 * 5

    def test_inspect_zero_weights_silent(self, capsys, tmp_path, cfg_file):
        state = TrainState(parse_config(TINY))
        for v in state.agent.params.values():
            v[...] = 0.0
        save_checkpoint(tmp_path / "z.ckpt", *snapshot(state))
        code, _, _ = run(capsys, "inspect", "--checkpoint", tmp_path / "z.ckpt", "--out", tmp_path / "z.csv")
        assert code == 0
        rows = list(csv.DictReader(open(tmp_path / "z.csv")))
        assert rows and all(float(r["v_b"]) == float(r["v_a"]) == float(r["u"]) == 0.0 and r["spike"] == "0"
                            for r in rows)

    def test_inspect_rejects_non_mcn(self, capsys, tmp_path, cfg_file):
        run(capsys, "train", "--config", cfg_file, "--steps", 0, "--mode", "s-fqf", "--out", tmp_path / "r")
        code, _, err = run(capsys, "inspect", "--checkpoint", tmp_path / "r" / "final.ckpt")
        assert code == 1 and "MCN" in err

    def test_multi_seed_layout(self, capsys, tmp_path, cfg_file):
        code, out, _ = run(capsys, "train", "--config", cfg_file, "--steps", 0, "--set", "seeds=3,4",
                           "--out", tmp_path / "r")
        assert code == 0 and len(out.splitlines()) == 2
        assert (tmp_path / "r" / "seed-3" / "final.ckpt").is_file()

    def test_verify_fast_checks_pass(self, capsys):
        code, out, _ = run(capsys, "verify", "--check", "closed_form", "--check", "firing")
        assert code == 0 and all(json.loads(l)["passed"] for l in out.splitlines())

    def test_verify_leak_injection_exits_2(self, capsys):
        code, _, err = run(capsys, "verify", "--check", "closed_form", "--set", "fault_injection=leak")
        assert code == 2 and "closed_form" in err


class TestExitCodes:
    def test_missing_config(self, capsys, tmp_path):
        code, _, err = run(capsys, "train", "--config", tmp_path / "none.cfg")
        assert code == 1 and "not found" in err

    def test_unknown_key(self, capsys, cfg_file):
        code, _, err = run(capsys, "train", "--config", cfg_file, "--set", "nope=1")
        assert code == 1 and "'nope'" in err

    def test_bad_flag(self, capsys):
        code, _, err = run(capsys, "train", "--frobnicate")
        assert code == 1 and "usage error" in err

    def test_corrupt_checkpoint(self, capsys, tmp_path):
        (tmp_path / "bad.ckpt").write_bytes(b"garbage!" * 4)
        code, _, err = run(capsys, "eval", "--checkpoint", tmp_path / "bad.ckpt")
        assert code == 1 and "bad magic" in err

    def test_unknown_check(self, capsys):
        code, _, err = run(capsys, "verify", "--check", "nonsense")
        assert code == 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exits_3(self, capsys, tmp_path, cfg_file):
        code, _, err = run(capsys, "train", "--config", cfg_file, "--set", "lr_adam=1e300",
                           "--set", "init_gain=1e3", "--out", tmp_path / "r")
        assert code == 3 and "diverged" in err
