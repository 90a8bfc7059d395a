"""``mcsfqf`` command line: train, eval, verify, inspect.

Exit codes: 0 success, 1 usage or config error, 2 check failure, 3 divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from ..checks import CHECKS, run_checks
from ..config import ConfigError, load_config
from ..network import full_forward
from ..rl import DivergenceError, TrainState, compare_to_oracle, evaluate, train_iteration
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .snapshot import restore, snapshot

__all__ = ["main", "build_parser", "cmd_train", "cmd_eval", "cmd_verify", "cmd_inspect"]

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_DIVERGED = 0, 1, 2, 3
INSPECT_COLUMNS = ("t", "neuron", "v_b", "v_a", "u", "spike")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for flag in ("seed", "steps", "out", "mode"):
        val = getattr(args, flag, None)
        if val is not None:
            out[flag] = str(val)
    return out


def _config(args):
    return load_config(args.config, _overrides(args))


def _jsonl(fh, rec: dict):
    fh.write(json.dumps(rec) + "\n")
    fh.flush()


def _run(cfg, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    state = TrainState(cfg)
    ckpt = out / "final.ckpt"
    with open(out / "metrics.jsonl", "w") as fh:
        _jsonl(fh, {"config": cfg.to_dict()})
        if cfg.steps == 0:
            save_checkpoint(ckpt, *snapshot(state))
        while state.step < cfg.steps:
            rec = train_iteration(state)
            if rec["return"] is not None or rec["step"] % max(cfg.log_every, 1) == 0:
                _jsonl(fh, rec)
            if cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
                save_checkpoint(out / f"step-{state.step:08d}.ckpt", *snapshot(state))
        if cfg.steps:
            save_checkpoint(ckpt, *snapshot(state))
    summary = {"out": str(out), "steps": state.step, "episodes": state.episode, "checkpoint": str(ckpt)}
    if cfg.env in ("chain-mdp", "gridworld"):
        summary["oracle"] = compare_to_oracle(state.agent, state.env, cfg.gamma)
    return summary


def cmd_train(args) -> int:
    cfg = _config(args)
    seeds = [cfg.seed] if args.seed is not None or not cfg.seeds else list(cfg.seeds)
    for s in seeds:
        run_cfg = cfg.replace(seed=s)
        out = Path(cfg.out) if len(seeds) == 1 else Path(cfg.out) / f"seed-{s}"
        try:
            summary = _run(run_cfg, out)
        except DivergenceError as e:
            print(f"error: training diverged (seed {s}): {e}", file=sys.stderr)
            return EXIT_DIVERGED
        print(json.dumps({"seed": s, **summary}))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg, agent, env, _, step = restore(*load_checkpoint(args.checkpoint))
    episodes = args.episodes if args.episodes is not None else cfg.eval_episodes
    seed = args.seed if args.seed is not None else 0
    res = evaluate(agent, env, episodes, seed)
    out = {"checkpoint": str(args.checkpoint), "step": step, "seed": seed,
           **{k: res[k] for k in ("score", "std", "std_pct", "episodes")}}
    if cfg.env in ("chain-mdp", "gridworld"):
        out["oracle"] = compare_to_oracle(agent, env, cfg.gamma)
    print(json.dumps(out))
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    names = args.check or list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown check {unknown[0]!r}; choose from {sorted(CHECKS)}")
    leak = 1.25 if cfg.fault_injection == "leak" else 1.0
    records = run_checks(names, leak_scale=leak, epsilon=cfg.huber_epsilon)
    for r in records:
        print(json.dumps(r))
    failed = [f"{r['check']}/{r['name']}" for r in records if not r["passed"]]
    if failed:
        print("verify failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_inspect(args) -> int:
    cfg, agent, env, _, _ = restore(*load_checkpoint(args.checkpoint))
    if cfg.fusion != "mcn+population":
        raise ConfigError(f"inspect dumps MCN traces; mode {cfg.mode!r} has no MCN layer")
    state = env.start_state if args.state is None else args.state
    if not 0 <= state < env.n_states:
        raise ConfigError(f"state {state} outside 0..{env.n_states - 1}")
    _, _, tape = full_forward(env.observe(state)[None], agent.params, agent.net, key=args.seed or 0)
    fus = tape.layers["fusion"]
    frac = cfg.N // 2 if args.fraction is None else args.fraction
    if not 0 <= frac < cfg.N:
        raise ConfigError(f"fraction index {frac} outside 0..{cfg.N - 1}")
    n = fus["spikes"].shape[-1]
    rng = np.random.default_rng(args.seed or 0)
    units = np.sort(rng.choice(n, size=min(args.units, n), replace=False))
    v_b = np.broadcast_to(fus["v_b"][:, :, None, :], fus["v_a"].shape)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INSPECT_COLUMNS)
        for t in range(cfg.T):
            for j in units:
                w.writerow([t, int(j), repr(float(v_b[t, 0, frac, j])), repr(float(fus["v_a"][t, 0, frac, j])),
                            repr(float(fus["u_pre"][t, 0, frac, j])), int(fus["spikes"][t, 0, frac, j])])
    print(json.dumps({"out": str(out), "units": len(units), "T": cfg.T, "state": state, "fraction": frac}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mcsfqf", description="Spiking fully parameterised quantile function agent.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="key = value config file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
            sp.add_argument("--mode", choices=["mcs-fqf", "s-fqf-pop", "s-fqf"])
        sp.add_argument("--seed", type=int)

    t = sub.add_parser("train", help="train an agent, writing metrics and checkpoints")
    common(t)
    t.add_argument("--steps", type=int)
    t.add_argument("--out")

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    common(e, config=False)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int)

    v = sub.add_parser("verify", help="run the oracle check suite")
    common(v)
    v.add_argument("--check", action="append", help=f"run only this check ({', '.join(CHECKS)})")

    i = sub.add_parser("inspect", help="dump MCN traces for one observation as CSV")
    common(i, config=False)
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--out", default="inspect.csv")
    i.add_argument("--units", type=int, default=128)
    i.add_argument("--state", type=int, help="environment state to observe (default: start state)")
    i.add_argument("--fraction", type=int, help="fraction index (default: N // 2)")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        handler = {"train": cmd_train, "eval": cmd_eval, "verify": cmd_verify, "inspect": cmd_inspect}
        return handler[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
    except (ConfigError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
