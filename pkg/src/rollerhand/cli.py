"""Command line: gen-expert, train, eval and replay over the shared file formats."""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import rng
from .config import ConfigError, RunConfig, load_config
from .controller import HandcraftedPolicy, run_episode
from .evalsuite import default_suites, run_suite
from .formats import (
    FormatError, atomic_write, dumps_report, parse_trajectories, read_demoset, read_weights,
    report_rows, summary_lines, write_demoset, write_manifest, write_weights, read_bytes,
)
from .learner import EmptyDataset, DemoSet, LearnedPolicy, dagger, train_bc
from .world import GraspEnv

DEMO_KEY = 100  # episode-seed key for expert demonstrations


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed out of range: {v}")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def _env(cfg: RunConfig, obj=None) -> GraspEnv:
    return GraspEnv(cfg.grasper, obj or cfg.object_model, cfg.sensors)


def generate_demos(cfg: RunConfig, log=print) -> DemoSet:
    expert = HandcraftedPolicy(cfg.grasper)
    env = _env(cfg)
    specs = cfg.expert_specs()
    demos = DemoSet()
    for k in range(cfg.expert_episodes):
        traj = run_episode(env, expert, specs[k % len(specs)], cfg.max_steps,
                           cfg.stop_threshold, seed=rng.episode_seed(cfg.seed, DEMO_KEY, k))
        demos.add(traj)
        if log is not None:
            log(f"episode {k}: {traj.reason} steps={len(traj)} e_omega={traj.final_e_omega:.3f}")
    return demos


def cmd_gen_expert(args) -> int:
    cfg = _config(args)
    out = cfg.output_dir()
    demos = generate_demos(cfg, log=print if args.verbose else None)
    write_demoset(os.path.join(out, "demos.jsonl"), demos)
    write_manifest(out, "gen-expert", cfg.config_hash(), cfg.seed, ["demos.jsonl"])
    trajs = demos.trajectories
    ok = sum(t.reason == "converged" for t in trajs)
    print(f"episodes={len(trajs)} converged={ok} ({100.0 * ok / len(trajs):.1f}%) "
          f"mean_steps={np.mean([len(t) for t in trajs]):.1f} pairs={demos.size}")
    print(f"wrote {os.path.join(out, 'demos.jsonl')}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.dagger_rounds is not None:
        cfg.dagger_rounds = args.dagger_rounds
    out = cfg.output_dir()
    demos = read_demoset(args.demos)
    if demos.size == 0:
        raise EmptyDataset("demo files hold no state-action pairs")
    hyper = cfg.hyper()
    net = train_bc(demos, hyper)
    curve = net.metadata["loss_curve"]
    print(f"bc: pairs={demos.size} loss {curve[0]:.6g} -> {curve[-1]:.6g}")
    files = ["weights.json", "loss.csv"]
    if cfg.dagger_rounds > 0:
        expert = HandcraftedPolicy(cfg.grasper)
        net, sizes = dagger(demos, expert, _env(cfg), cfg.expert_specs(), cfg.dagger_rounds,
                            hyper, seed=cfg.seed, max_steps=cfg.max_steps,
                            stop_threshold=cfg.stop_threshold, net=net, log=print)
        net.metadata["dagger_sizes"] = sizes
        write_demoset(os.path.join(out, "demos_aggregated.jsonl"), demos)
        files.append("demos_aggregated.jsonl")
    write_weights(os.path.join(out, "weights.json"), net)
    rows = "".join(f"{k},{c!r}\n" for k, c in enumerate(net.metadata["loss_curve"]))
    atomic_write(os.path.join(out, "loss.csv"), "epoch,loss\n" + rows)
    write_manifest(out, "train", cfg.config_hash(), cfg.seed, files)
    ratio = curve[0] / curve[-1] if curve[-1] > 0 else float("inf")
    print(f"wrote {os.path.join(out, 'weights.json')} (bc loss ratio {ratio:.2f})")
    if ratio < cfg.min_loss_ratio:
        print(f"loss ratio {ratio:.2f} below required {cfg.min_loss_ratio:g}", file=sys.stderr)
        return 3
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    if args.trials is not None:
        cfg.trials = args.trials
    suite_names = args.suite or cfg.suite
    if args.policy == "learned":
        if not args.weights:
            raise ConfigError("--policy learned requires --weights")
        policy = LearnedPolicy(read_weights(args.weights), cfg.grasper.pivot_limit)
    else:
        policy = HandcraftedPolicy(cfg.grasper)
    out = cfg.output_dir()
    results = []
    for suite in default_suites(suite_names, cfg.trials, cfg.seed):
        res = run_suite(policy, suite, lambda obj: _env(cfg, obj), cfg.max_steps,
                        cfg.stop_threshold)
        results.append(res)
        print(f"{suite.name} {res.policy}: mean={res.mean:.3f} std={res.std:.3f} "
              f"drops={res.drop_count}/{len(res.records)}")
    atomic_write(os.path.join(out, "report.csv"), dumps_report(report_rows(results)))
    atomic_write(os.path.join(out, "summary.csv"), summary_lines(results))
    write_manifest(out, "eval", cfg.config_hash(), cfg.seed, ["report.csv", "summary.csv"])
    print(f"wrote {os.path.join(out, 'report.csv')}")
    return 0


def replay_lines(data: bytes, path=None) -> list[str]:
    lines = []
    for traj, _ in parse_trajectories(data, path):
        lines.append("step\te_omega\tjoint_targets\tslip_residuals")
        for k, a in enumerate(traj.actions):
            joints = " ".join(f"{x:.6f}" for x in a)
            res = " ".join(f"{x:.3e}" for x in traj.residuals[k])
            lines.append(f"{k}\t{traj.e_omega[k]:.4f}\t{joints}\t{res}")
        if len(traj):
            lines.append(f"reason={traj.reason} final_e_omega={traj.final_e_omega:.4f}")
    return lines


def cmd_replay(args) -> int:
    for line in replay_lines(read_bytes(args.trajectory), args.trajectory):
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rollerhand", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="JSON run configuration")
        sp.add_argument("--seed", type=_u64, help="override the config seed")
        sp.add_argument("--out", metavar="DIR",
                        help="output directory (default: $ROLLERHAND_OUT or ./runs)")

    g = sub.add_parser("gen-expert", help="roll the handcrafted controller to make demonstrations")
    common(g)
    g.add_argument("-v", "--verbose", action="store_true", help="print one line per episode")
    g.set_defaults(func=cmd_gen_expert)

    t = sub.add_parser("train", help="behaviour cloning, optionally followed by DAgger")
    common(t)
    t.add_argument("--demos", nargs="+", required=True, metavar="FILE")
    t.add_argument("--dagger-rounds", type=int, metavar="N")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="run evaluation suites and write CSV reports")
    common(e)
    e.add_argument("--policy", choices=("handcrafted", "learned"), default="handcrafted")
    e.add_argument("--suite", choices=("S", "D", "N", "all"))
    e.add_argument("--weights", metavar="PATH")
    e.add_argument("--trials", type=_positive, metavar="N")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="print a per-step trace of a trajectory file")
    r.add_argument("trajectory", metavar="FILE")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "dagger_rounds", None) is not None and args.dagger_rounds < 0:
        parser.error("--dagger-rounds must be >= 0")
    try:
        return args.func(args)
    except (ConfigError, FormatError, EmptyDataset, FileNotFoundError) as e:
        print(f"rollerhand: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
