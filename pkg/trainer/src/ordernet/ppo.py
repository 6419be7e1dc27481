"""Clipped-surrogate policy optimization over bridge rollouts.

Rollouts are lists of per-planning-step records. Rewards-to-go use the
discount; advantages are rewards-to-go minus the value baseline, normalized
per update pass. The surrogate is the clipped ratio objective plus an
entropy bonus; the value net is fit by mean-squared error. The rollout set
is reused for a fixed number of passes, gradients are clipped, and both
learning rates decay geometrically per update.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import torch


@dataclass
class PPOConfig:
    epochs: int = 4000  # Z: policy update iterations
    reuse: int = 3  # f: update passes per rollout set
    entropy_weight: float = 0.01  # eta
    clip: float = 0.2  # epsilon
    lr: float = 0.001  # lambda
    lr_decay: float = 0.999  # omega, per update
    batch_size: int = 32  # B
    grad_clip: float = 0.5
    gamma: float = 0.99

    def __post_init__(self):
        if min(self.epochs, self.reuse, self.entropy_weight, self.clip,
               self.lr, self.lr_decay, self.batch_size, self.grad_clip,
               self.gamma) <= 0:
            raise ValueError("all settings must be strictly positive")
        if not 0 < self.clip < 1:
            raise ValueError("clip range must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("discount must lie in (0, 1]")


@dataclass
class StepRecord:
    paths: torch.Tensor  # (N, r) long
    order: torch.Tensor  # (N,) long — the sampled permutation (K = 1)
    log_prob: float  # behavior log-probability at collection time
    reward: float


@dataclass
class Episode:
    steps: list = field(default_factory=list)
    total_throughput: float = 0.0


def rewards_to_go(rewards, gamma):
    out, acc = [], 0.0
    for r in reversed(rewards):
        acc = r + gamma * acc
        out.append(acc)
    out.reverse()
    return out


class LossReport(dict):
    pass


def ppo_update(episodes, policy, value, config, policy_opt, value_opt, rng=None):
    """Run config.reuse passes over the episode set; returns a LossReport.

    Raises RuntimeError on non-finite losses.
    """
    rng = rng or random.Random()
    steps = [s for ep in episodes for s in ep.steps]
    if not steps:
        raise ValueError("empty rollout set")

    report = LossReport(policy_loss=[], value_loss=[], entropy=[], ratio=[])
    for _ in range(config.reuse):
        # advantages from the current value function, recomputed each pass
        with torch.no_grad():
            flat_values = []
            for ep in episodes:
                batch = _pad_stack([s.paths for s in ep.steps])
                flat_values.extend(value(batch).tolist())
        rtg = []
        for ep in episodes:
            rtg.extend(rewards_to_go([s.reward for s in ep.steps], config.gamma))
        adv = torch.tensor(rtg) - torch.tensor(flat_values)
        adv = (adv - adv.mean()) / (adv.std(unbiased=False) + 1e-8)
        targets = torch.tensor(rtg)

        idx = list(range(len(steps)))
        rng.shuffle(idx)
        for lo in range(0, len(idx), config.batch_size):
            batch_idx = idx[lo : lo + config.batch_size]
            recs = [steps[i] for i in batch_idx]
            paths = _pad_stack([r.paths for r in recs])
            orders = torch.stack([r.order for r in recs])
            old_logp = torch.tensor([r.log_prob for r in recs])
            batch_adv = adv[batch_idx]

            logp, entropy = _batched_log_prob(policy, paths, orders)
            ratio = torch.exp(logp - old_logp)
            clipped = torch.clamp(ratio, 1 - config.clip, 1 + config.clip)
            surrogate = torch.min(ratio * batch_adv, clipped * batch_adv)
            policy_loss = -(surrogate + config.entropy_weight * entropy).mean()

            values = value(paths)
            value_loss = ((values - targets[batch_idx]) ** 2).mean()

            if not torch.isfinite(policy_loss) or not torch.isfinite(value_loss):
                raise RuntimeError(
                    f"non-finite loss: policy={policy_loss.item()} "
                    f"value={value_loss.item()}"
                )

            policy_opt.zero_grad()
            policy_loss.backward()
            torch.nn.utils.clip_grad_norm_(policy.parameters(), config.grad_clip)
            policy_opt.step()

            value_opt.zero_grad()
            value_loss.backward()
            torch.nn.utils.clip_grad_norm_(value.parameters(), config.grad_clip)
            value_opt.step()

            report["policy_loss"].append(policy_loss.item())
            report["value_loss"].append(value_loss.item())
            report["entropy"].append(entropy.mean().item())
            report["ratio"].append(ratio.mean().item())

    for opt in (policy_opt, value_opt):
        for group in opt.param_groups:
            group["lr"] *= config.lr_decay
    return LossReport({k: sum(v) / len(v) for k, v in report.items()})


def _pad_stack(path_tensors):
    """Stack (N, r_i) observations into (B, N, r_max); the pad repeats each
    row's final location, matching how the simulator pads its rows."""
    r_max = max(p.shape[1] for p in path_tensors)
    out = []
    for p in path_tensors:
        if p.shape[1] < r_max:
            pad = p[:, -1:].expand(p.shape[0], r_max - p.shape[1])
            p = torch.cat([p, pad], dim=1)
        out.append(p)
    return torch.stack(out)


def _batched_log_prob(policy, paths, orders):
    """Log-prob + entropy for a batch of (observation, order) pairs."""
    emb = policy.encoder(paths)  # (B, N, d)
    return policy.decoder.log_prob(emb, orders)
