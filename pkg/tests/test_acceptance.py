"""Acceptance criteria, each at its stated tolerance.

Every test reports one ``CRITERION n: PASS|FAIL`` line (inline and in the
terminal summary) before asserting.  Companion tests carry the diagnostics
that explain a failing literal criterion; they do not replace it.
"""

import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mcsfqf.checks import (check_firing, check_fraction_invariants, check_gradients, check_population_encoding,
                           check_quantile_regression, check_closed_form)
from mcsfqf.cli import main
from mcsfqf.cli.checkpoint import decode_checkpoint, encode_checkpoint
from mcsfqf.cli.snapshot import restore, snapshot
from mcsfqf.config import load_config
from mcsfqf.network import full_forward
from mcsfqf.rl import TrainState, compare_to_oracle, train

DESK = "configs/chain_desk.cfg"
SEEDS = range(10)


def report(capsys, crit, passed: bool, detail: str):
    line = f"CRITERION {crit}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)


def summarise(records) -> str:
    return "; ".join(f"{r['name']}={r['value']:.3g} [{'met' if r['met'] else 'MISSED'} limit {r['threshold']:.3g}]"
                     + ("" if r["asserted"] else " (reported)") for r in records)


def all_asserted(records) -> bool:
    return all(r["passed"] for r in records if r["asserted"])


def test_criterion_1_closed_form(capsys):
    recs = check_closed_form()
    ok = all_asserted(recs)
    report(capsys, 1, ok, summarise(recs))
    assert ok, recs


def test_criterion_2_firing(capsys):
    recs = check_firing()
    ok = all_asserted(recs)
    report(capsys, 2, ok, f"spikes={recs[1]['detail']['counts']}")
    assert ok, recs


def test_criterion_3_population_encoding(capsys):
    # literal normal-approximation 3 sd bound on every neuron
    recs = check_population_encoding(normal_asserted=True)
    ok = all_asserted(recs)
    z = recs[0]
    report(capsys, 3, ok, summarise(recs) + f"; worst neuron {z['detail']['worst_neuron']} "
                                            f"p={z['detail']['worst_p']:.2e} count={z['detail']['worst_count']}")
    assert ok, recs


def test_criterion_3_companion_exact_binomial():
    # the same 0.27% level under the exact binomial law (asserted separately)
    recs = check_population_encoding(normal_asserted=False)
    assert all_asserted(recs), recs


def test_criterion_4_gradients(capsys):
    t0 = time.perf_counter()
    recs = check_gradients()
    elapsed = time.perf_counter() - t0
    ok = all_asserted(recs) and elapsed < 60
    worst = max(r["value"] for r in recs if r["asserted"])
    gap = {r["name"]: round(r["value"], 3) for r in recs if not r["asserted"]}
    report(capsys, 4, ok, f"max asserted rel err={worst:.2e} (<1e-4); runtime={elapsed:.1f}s; reported gaps={gap}")
    assert ok


def test_criterion_5_fraction_invariants(capsys):
    recs = check_fraction_invariants()
    ok = all_asserted(recs)
    report(capsys, 5, ok, summarise(recs))
    assert ok, recs


def test_criterion_6_quantile_regression(capsys):
    recs = check_quantile_regression(epsilon=1.0)
    by = {r["name"]: r for r in recs}
    true_err, runtime = by["err_vs_true_quantiles"], by["runtime_s"]
    ok = true_err["met"] and runtime["met"]
    report(capsys, 6, ok, f"err vs true quantiles={true_err['value']:.3f} (<0.05); "
                          f"err vs Huber(eps=1) minimiser={by['err_vs_loss_minimizer']['value']:.3f}; "
                          f"runtime={runtime['value']:.1f}s")
    assert ok, recs


def test_criterion_6_companion_loss_minimiser():
    recs = check_quantile_regression(epsilon=1.0, steps=20_000)
    by = {r["name"]: r for r in recs}
    assert by["err_vs_loss_minimizer"]["met"], by


def _desk_run(seed: int, mode: str = "mcs-fqf"):
    cfg = load_config(DESK).replace(seed=seed, mode=mode)
    t0 = time.perf_counter()
    state = train(cfg)
    return state, compare_to_oracle(state.agent, state.env, cfg.gamma), time.perf_counter() - t0


def test_criterion_7_chain_mdp(capsys):
    rows = []
    for s in SEEDS:
        _, res, dt = _desk_run(s)
        rows.append((s, res["policy_match"], res["q_error"], res["w1"], dt))
    matched = [r for r in rows if r[1]]
    q_ok = all(r[2] < 0.1 for r in matched)
    w_ok = all(r[3] < 0.15 for r in matched)
    t_ok = all(r[4] < 900 for r in rows)
    ok = len(matched) >= 8 and q_ok and w_ok and t_ok
    report(capsys, 7, ok, f"policy match {len(matched)}/10; max q_err={max(r[2] for r in rows):.3f} (<0.1); "
                          f"max W1={max(r[3] for r in rows):.3f} (<0.15); "
                          f"max runtime={max(r[4] for r in rows):.0f}s/seed; steps={load_config(DESK).steps}")
    assert ok, rows


def _structural(mode: str, tmp_path) -> dict:
    cfg = load_config(DESK).replace(mode=mode, steps=300, warmup=50)
    a, b = train(cfg), train(cfg)
    same = all(np.array_equal(a.agent.params[k], b.agent.params[k]) for k in a.agent.params)
    tensors, meta = decode_checkpoint(encode_checkpoint(*snapshot(a)))
    _, agent, env, _, _ = restore(tensors, meta)
    rt = encode_checkpoint(*snapshot(a)) == encode_checkpoint(tensors, meta)
    obs = np.stack([env.observe(s) for s in range(env.n_states)])
    f, _, _ = full_forward(obs, agent.params, agent.net, key=0, record=False)
    inv = bool(np.all(np.diff(f.tau, axis=1) > 0) and np.abs(f.tau[:, 0]).max() < 1e-6
               and np.abs(f.tau[:, -1] - 1).max() < 1e-6 and np.abs(f.p.sum(1) - 1).max() < 1e-12)
    return {"deterministic": same, "checkpoint_round_trip": rt, "fraction_invariants": inv}


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_criterion_8_ablation_parity(capsys, tmp_path):
    out = {}
    for mode in ("s-fqf-pop", "s-fqf"):
        state, res, dt = _desk_run(0, mode)
        out[mode] = {"completed": state.step == load_config(DESK).steps, "policy_match": res["policy_match"],
                     "runtime_s": round(dt)}
    for mode in ("mcs-fqf", "s-fqf-pop", "s-fqf"):
        out.setdefault(mode, {}).update(_structural(mode, tmp_path))
    flags = [v for m in out.values() for k, v in m.items() if k in
             ("completed", "deterministic", "checkpoint_round_trip", "fraction_invariants")]
    ok = all(flags)
    report(capsys, 8, ok, json.dumps(out))
    assert ok, out


def test_criterion_9_reproducibility(capsys, tmp_path):
    out = tmp_path / "run"
    argv = ["train", "--config", DESK, "--steps", "600", "--set", "checkpoint_every=200", "--out", str(out)]
    snaps = []
    for _ in range(2):
        assert main(argv) == 0
        snaps.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    capsys.readouterr()
    ok = snaps[0] == snaps[1] and len(snaps[0]) >= 4
    report(capsys, 9, ok, f"files compared: {sorted(snaps[0])}")
    assert ok
