"""Training loop: rollout collection over the planner bridge + PPO updates.

The environment is the planner CLI spawned with `--bridge stdio`; this
process never imports the planner package. Rollouts use K = 1 order per
planning step; evaluation runs on held-out seeds and is logged to a
training-curve CSV next to versioned checkpoints.
"""

from __future__ import annotations

import argparse
import csv
import statistics
import subprocess
import sys
import tempfile
from pathlib import Path

import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .client import StdioEnv, run_episode
from .model import ModelConfig, OrderPolicyNet, ValueNet
from .ppo import Episode, PPOConfig, StepRecord, ppo_update


def build_parser():
    p = argparse.ArgumentParser(prog="ordernet-train", description=__doc__)
    p.add_argument("--map", required=True)
    p.add_argument("--assigner", default="amazon")
    p.add_argument("-n", "--agents", type=int, default=8)
    p.add_argument("-w", "--horizon", type=int, default=10)
    p.add_argument("--exec-h", type=int, default=5)
    p.add_argument("-t", "--sim-horizon", type=int, default=200)
    p.add_argument("--env-cmd", default="rhpp", help="planner CLI executable")
    p.add_argument("--kappa", type=float, default=None,
                   help="planner shield-penalty weight during training rollouts")
    p.add_argument("--sigma", type=float, default=None,
                   help="planner infeasibility-penalty weight during training rollouts")
    p.add_argument("--updates", type=int, default=4000, help="Z")
    p.add_argument("--reuse", type=int, default=3, help="rollout reuse f")
    p.add_argument("--episodes-per-rollout", type=int, default=4)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--lr-decay", type=float, default=0.999)
    p.add_argument("--entropy-weight", type=float, default=0.01)
    p.add_argument("--clip", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--grad-clip", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--seed", type=int, default=0, help="first training seed")
    p.add_argument("--eval-every", type=int, default=25, help="updates between evals")
    p.add_argument("--eval-seeds", default="1000:16", help="BASE:COUNT held-out seeds")
    p.add_argument("--eval-mode", choices=("sample", "greedy"), default="sample")
    p.add_argument("--out", default="runs/ordernet")
    p.add_argument("--resume", default=None, help="checkpoint stem to resume from")
    p.add_argument("--max-minutes", type=float, default=None)
    return p


def env_args(args, seed, episodes, k=1):
    out = [
        "--map", args.map, "--assigner", args.assigner,
        "-n", str(args.agents), "-w", str(args.horizon),
        "--exec-h", str(args.exec_h), "-t", str(args.sim_horizon),
        "-k", str(k), "--seed", str(seed), "--episodes", str(episodes),
    ]
    if args.kappa is not None:
        out += ["--kappa", str(args.kappa)]
    if args.sigma is not None:
        out += ["--sigma", str(args.sigma)]
    return out


def paths_tensor(paths):
    return torch.tensor(paths, dtype=torch.long)


def collect_rollouts(args, policy, seed, generator):
    """Run episodes-per-rollout episodes over one bridge connection."""
    env = StdioEnv(env_args(args, seed, args.episodes_per_rollout), args.env_cmd)
    episodes = []
    try:
        for _ in range(args.episodes_per_rollout):
            episode = Episode()

            def act(paths, reset):
                obs = paths_tensor(paths)
                with torch.no_grad():
                    orders, logp, _ = policy.sample_orders(obs, 1, generator=generator)
                return [orders[0].tolist()], (obs, orders[0], logp[0].item())

            def on_step(obs_msg, orders, extra, feedback):
                obs, order, logp = extra
                episode.steps.append(
                    StepRecord(
                        paths=obs, order=order, log_prob=logp,
                        reward=feedback["reward"],
                    )
                )

            _, metrics = run_episode(env, act, on_step)
            episode.total_throughput = metrics["total_throughput"]
            episodes.append(episode)
    finally:
        env.close()
    return episodes


def evaluate(args, policy, greedy=False):
    """Mean TPA and total throughput of the current policy on held-out seeds."""
    base, count = (int(x) for x in args.eval_seeds.split(":"))
    env = StdioEnv(env_args(args, base, count), args.env_cmd)
    generator = torch.Generator().manual_seed(base)
    tpas, totals = [], []
    try:
        for _ in range(count):
            def act(paths, reset):
                obs = paths_tensor(paths)
                with torch.no_grad():
                    if greedy:
                        emb = policy.encoder(obs.unsqueeze(0))[0]
                        order = _greedy_order(policy.decoder, emb)
                        return [order], None
                    orders, _, _ = policy.sample_orders(obs, 1, generator=generator)
                return [orders[0].tolist()], None

            _, metrics = run_episode(env, act)
            tpas.append(metrics["tpa"])
            totals.append(metrics["total_throughput"])
    finally:
        env.close()
    return statistics.fmean(tpas), statistics.fmean(totals)


def _greedy_order(decoder, emb):
    n, d = emb.shape
    batch = emb.unsqueeze(0)
    keys, values, logit_keys, context = decoder._fixed(batch)
    prev = decoder.placeholder.unsqueeze(0)
    mask = torch.zeros(1, n, dtype=torch.bool)
    order = []
    for _ in range(n):
        logits = decoder.step_logits(batch, keys, values, logit_keys, context, prev, mask)
        choice = logits.argmax(dim=-1)
        order.append(int(choice))
        mask = mask.scatter(1, choice.unsqueeze(1), True)
        prev = batch[0, choice]
    return order


def random_baseline(args):
    """Mean TPA/throughput of the planner's own random-order policy (K = 1)
    on the held-out seeds, read back from its metrics CSV."""
    base, count = (int(x) for x in args.eval_seeds.split(":"))
    seeds = ",".join(str(base + i) for i in range(count))
    with tempfile.TemporaryDirectory() as tmp:
        cmd = [
            args.env_cmd, "--map", args.map, "--assigner", args.assigner,
            "-n", str(args.agents), "-w", str(args.horizon),
            "--exec-h", str(args.exec_h), "-t", str(args.sim_horizon),
            "-k", "1", "--policy", "random", "--seeds", seeds, "--out", tmp,
        ]
        subprocess.run(cmd, check=True, capture_output=True)
        with open(Path(tmp) / "metrics.csv", newline="") as fh:
            rows = list(csv.reader(fh))
    header = rows[0]
    mean_row = next(r for r in rows if r[0] == "mean")
    return (
        float(mean_row[header.index("tpa")]),
        float(mean_row[header.index("total_throughput")]),
    )


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(args.seed)
    generator = torch.Generator().manual_seed(args.seed)

    # one probe connection tells us the map size for the embedding dictionary
    probe = StdioEnv(env_args(args, args.seed, 1), args.env_cmd)
    try:
        reset = probe.recv()
    finally:
        probe.proc.kill()
        probe.proc.wait()
    n_cells = reset["map_width"] * reset["map_height"]

    if args.resume:
        policy, value, mc, _ = load_checkpoint(args.resume)
        if mc.n_cells != n_cells:
            raise SystemExit("checkpoint was trained on a different map size")
    else:
        mc = ModelConfig(
            n_cells=n_cells, d=args.embed_dim, layers=args.layers, heads=args.heads
        )
        policy = OrderPolicyNet(mc)
        value = ValueNet(mc)

    ppo = PPOConfig(
        epochs=args.updates,
        reuse=args.reuse,
        entropy_weight=args.entropy_weight,
        clip=args.clip,
        lr=args.lr,
        lr_decay=args.lr_decay,
        batch_size=args.batch_size,
        grad_clip=args.grad_clip,
        gamma=args.gamma,
    )
    policy_opt = torch.optim.Adam(policy.parameters(), lr=ppo.lr)
    value_opt = torch.optim.Adam(value.parameters(), lr=ppo.lr)

    base_tpa, base_total = random_baseline(args)
    print(f"baseline (random orders, K=1): mean TPA {base_tpa:.3f}", flush=True)

    curve_path = out / "training_curve.csv"
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ("update", "eval_tpa", "eval_total_throughput",
             "baseline_total_throughput", "policy_loss", "value_loss", "entropy")
        )

    import time

    t_start = time.time()
    seed = args.seed
    episodes = None
    report = {"policy_loss": float("nan"), "value_loss": float("nan"), "entropy": float("nan")}
    for update in range(args.updates):
        if update % ppo.reuse == 0:
            episodes = collect_rollouts(args, policy, seed, generator)
            seed += args.episodes_per_rollout
        single = PPOConfig(**{**ppo.__dict__, "reuse": 1})
        report = ppo_update(episodes, policy, value, single, policy_opt, value_opt)

        if update % args.eval_every == 0 or update == args.updates - 1:
            tpa, total = evaluate(args, policy, greedy=args.eval_mode == "greedy")
            mean_train = statistics.fmean(ep.total_throughput for ep in episodes)
            print(
                f"update {update}: eval TPA {tpa:.3f} (baseline {base_tpa:.3f}) "
                f"train tput {mean_train:.1f} "
                f"policy {report['policy_loss']:.4f} value {report['value_loss']:.2f} "
                f"entropy {report['entropy']:.3f}",
                flush=True,
            )
            with open(curve_path, "a", newline="") as fh:
                csv.writer(fh).writerow(
                    (update, f"{tpa:.4f}", f"{total:.4f}", f"{base_total:.4f}",
                     f"{report['policy_loss']:.6f}", f"{report['value_loss']:.6f}",
                     f"{report['entropy']:.6f}")
                )
            save_checkpoint(
                out / f"checkpoint_{update:06d}",
                policy, value, mc,
                extra={"update": update, "eval_tpa": tpa, "baseline_tpa": base_tpa},
            )
            save_checkpoint(
                out / "checkpoint_latest", policy, value, mc,
                extra={"update": update, "eval_tpa": tpa, "baseline_tpa": base_tpa},
            )
        if args.max_minutes is not None and (time.time() - t_start) > args.max_minutes * 60:
            print(f"time budget reached at update {update}", flush=True)
            break
    return 0


if __name__ == "__main__":
    sys.exit(main())
