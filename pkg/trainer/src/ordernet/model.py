"""Policy and value networks over agent shortest-path observations.

The encoder embeds each agent's path of map-cell indices, adds sinusoidal
positional encoding along the time axis, and alternates temporal attention
(per agent, over time) with spatial attention (per time position, over
agents), pre-layer-norm with residuals, followed by one feed-forward block
per layer. The agent embedding is the time-index-0 slice of the last layer.

The decoder autoregressively emits a permutation of the agents: fixed key /
value / logit-key projections and a mean context are computed once, then each
step attends with a query built from the context plus the previously chosen
agent's embedding (a learned placeholder at the first step), masks the agents
already chosen to -inf, and samples from the softmax. No logit clipping is
applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class ModelConfig:
    n_cells: int  # map width * height; size of the position-embedding dictionary
    d: int = 32
    layers: int = 2
    heads: int = 4

    def __post_init__(self):
        if self.d % self.heads != 0:
            raise ValueError("embedding dim must divide evenly across heads")


def sinusoidal_encoding(length, d, device=None):
    pos = torch.arange(length, dtype=torch.float32, device=device).unsqueeze(1)
    idx = torch.arange(0, d, 2, dtype=torch.float32, device=device)
    angle = pos / torch.pow(10000.0, idx / d)
    enc = torch.zeros(length, d, device=device)
    enc[:, 0::2] = torch.sin(angle)
    enc[:, 1::2] = torch.cos(angle)
    return enc


class MultiHeadAttention(nn.Module):
    """Scaled dot-product self/cross attention with U heads, no biases."""

    def __init__(self, d, heads):
        super().__init__()
        self.d = d
        self.heads = heads
        self.head_dim = d // heads
        self.w_q = nn.Linear(d, d, bias=False)
        self.w_k = nn.Linear(d, d, bias=False)
        self.w_v = nn.Linear(d, d, bias=False)
        self.w_o = nn.Linear(d, d, bias=False)

    def forward(self, query, memory):
        # query: (B, Lq, d); memory: (B, Lk, d)
        b, lq, _ = query.shape
        lk = memory.shape[1]
        q = self.w_q(query).view(b, lq, self.heads, self.head_dim).transpose(1, 2)
        k = self.w_k(memory).view(b, lk, self.heads, self.head_dim).transpose(1, 2)
        v = self.w_v(memory).view(b, lk, self.heads, self.head_dim).transpose(1, 2)
        att = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(self.head_dim), dim=-1)
        out = (att @ v).transpose(1, 2).reshape(b, lq, self.d)
        return self.w_o(out)


class EncoderLayer(nn.Module):
    def __init__(self, d, heads):
        super().__init__()
        self.norm_t = nn.LayerNorm(d)
        self.att_t = MultiHeadAttention(d, heads)
        self.norm_s = nn.LayerNorm(d)
        self.att_s = MultiHeadAttention(d, heads)
        self.norm_f = nn.LayerNorm(d)
        self.ff = nn.Sequential(
            nn.Linear(d, 4 * d), nn.ReLU(), nn.Linear(4 * d, d)
        )

    def forward(self, h):
        # h: (B, N, r, d)
        b, n, r, d = h.shape
        # temporal attention: each agent over its r time positions
        x = h.reshape(b * n, r, d)
        xt = self.norm_t(x)
        x = xt + self.att_t(xt, xt)
        h = x.view(b, n, r, d)
        # spatial attention: each time position over the n agents
        x = h.transpose(1, 2).reshape(b * r, n, d)
        xs = self.norm_s(x)
        x = xs + self.att_s(xs, xs)
        h = x.view(b, r, n, d).transpose(1, 2)
        # feed-forward
        xf = self.norm_f(h)
        return xf + self.ff(xf)


class PathEncoder(nn.Module):
    """(B, N, r) cell indices -> (B, N, d) agent embeddings."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(config.n_cells, config.d)
        self.layers = nn.ModuleList(
            EncoderLayer(config.d, config.heads) for _ in range(config.layers)
        )

    def forward(self, paths):
        if paths.dim() == 2:
            paths = paths.unsqueeze(0)
        if paths.min() < 0 or paths.max() >= self.config.n_cells:
            raise IndexError("path index outside the embedding dictionary")
        h = self.embedding(paths)  # (B, N, r, d)
        r = h.shape[2]
        h = h + sinusoidal_encoding(r, self.config.d, h.device).view(1, 1, r, -1)
        for layer in self.layers:
            h = layer(h)
        return h[:, :, 0, :]  # time-index-0 slice: (B, N, d)


class PermutationDecoder(nn.Module):
    """Autoregressive permutation head over agent embeddings."""

    def __init__(self, d, heads):
        super().__init__()
        self.d = d
        self.heads = heads
        self.head_dim = d // heads
        self.w_k = nn.Linear(d, d, bias=False)
        self.w_v = nn.Linear(d, d, bias=False)
        self.w_l = nn.Linear(d, d, bias=False)
        self.w_context = nn.Linear(d, d, bias=False)
        self.w_q_step = nn.Linear(d, d, bias=False)
        self.w_glimpse = nn.Linear(d, d, bias=False)
        self.placeholder = nn.Parameter(torch.zeros(d))
        nn.init.uniform_(self.placeholder, -1.0 / math.sqrt(d), 1.0 / math.sqrt(d))

    def _fixed(self, emb):
        # emb: (B, N, d) -> keys/values/logit-keys (B, N, d), context (B, d)
        return (
            self.w_k(emb),
            self.w_v(emb),
            self.w_l(emb),
            self.w_context(emb.mean(dim=1)),
        )

    def step_logits(self, emb, keys, values, logit_keys, context, prev, mask):
        """One decoding step for a batch of partial orders.

        prev: (B, d) embedding of the previously chosen agent (or the
        placeholder); mask: (B, N) True where the agent was already chosen.
        Returns raw logits (B, N) with chosen agents at -inf.
        """
        b, n, d = emb.shape
        q = context + self.w_q_step(prev)  # (B, d)
        qh = q.view(b, self.heads, 1, self.head_dim)
        kh = keys.view(b, n, self.heads, self.head_dim).transpose(1, 2)
        vh = values.view(b, n, self.heads, self.head_dim).transpose(1, 2)
        att = torch.softmax(
            qh @ kh.transpose(-2, -1) / math.sqrt(self.head_dim), dim=-1
        )
        glimpse = self.w_glimpse((att @ vh).transpose(1, 2).reshape(b, d))
        logits = (logit_keys @ glimpse.unsqueeze(-1)).squeeze(-1)  # (B, N)
        return logits.masked_fill(mask, float("-inf"))

    def sample(self, emb, k, generator=None):
        """Sample k permutations in parallel from one embedding set.

        emb: (N, d). Returns (orders (k, N) long, log_probs (k,), entropy (k,)).
        """
        n, d = emb.shape
        batch = emb.unsqueeze(0).expand(k, n, d)
        keys, values, logit_keys, context = self._fixed(batch)
        prev = self.placeholder.unsqueeze(0).expand(k, d)
        mask = torch.zeros(k, n, dtype=torch.bool, device=emb.device)
        orders, logp, ent = [], 0.0, 0.0
        for _ in range(n):
            logits = self.step_logits(batch, keys, values, logit_keys, context, prev, mask)
            log_p = torch.log_softmax(logits, dim=-1)
            probs = log_p.exp()
            if generator is None:
                choice = torch.multinomial(probs, 1).squeeze(-1)
            else:
                choice = torch.multinomial(probs, 1, generator=generator).squeeze(-1)
            orders.append(choice)
            logp = logp + log_p.gather(1, choice.unsqueeze(1)).squeeze(1)
            step_ent = -(probs * torch.where(mask, torch.zeros_like(log_p), log_p)).sum(-1)
            ent = ent + step_ent
            mask = mask.scatter(1, choice.unsqueeze(1), True)
            prev = batch.gather(1, choice.view(k, 1, 1).expand(k, 1, d)).squeeze(1)
        return torch.stack(orders, dim=1), logp, ent

    def log_prob(self, emb, orders):
        """Log-probability and entropy of given permutations (teacher-forced).

        emb: (B, N, d) or (N, d); orders: (B, N) long. Returns (logp (B,),
        entropy (B,)).
        """
        if emb.dim() == 2:
            emb = emb.unsqueeze(0).expand(orders.shape[0], *emb.shape)
        b, n, d = emb.shape
        keys, values, logit_keys, context = self._fixed(emb)
        prev = self.placeholder.unsqueeze(0).expand(b, d)
        mask = torch.zeros(b, n, dtype=torch.bool, device=emb.device)
        logp = torch.zeros(b, device=emb.device)
        ent = torch.zeros(b, device=emb.device)
        for step in range(n):
            logits = self.step_logits(emb, keys, values, logit_keys, context, prev, mask)
            log_p = torch.log_softmax(logits, dim=-1)
            probs = log_p.exp()
            choice = orders[:, step]
            logp = logp + log_p.gather(1, choice.unsqueeze(1)).squeeze(1)
            ent = ent - (probs * torch.where(mask, torch.zeros_like(log_p), log_p)).sum(-1)
            mask = mask.scatter(1, choice.unsqueeze(1), True)
            prev = emb.gather(1, choice.view(b, 1, 1).expand(b, 1, d)).squeeze(1)
        return logp, ent

    def step_distributions(self, emb, orders):
        """Per-step probability tables along given orders (for analysis).

        Returns a (B, N, N) tensor: probs[b, step, agent]."""
        if emb.dim() == 2:
            emb = emb.unsqueeze(0).expand(orders.shape[0], *emb.shape)
        b, n, d = emb.shape
        keys, values, logit_keys, context = self._fixed(emb)
        prev = self.placeholder.unsqueeze(0).expand(b, d)
        mask = torch.zeros(b, n, dtype=torch.bool, device=emb.device)
        out = []
        for step in range(n):
            logits = self.step_logits(emb, keys, values, logit_keys, context, prev, mask)
            out.append(torch.softmax(logits, dim=-1))
            choice = orders[:, step]
            mask = mask.scatter(1, choice.unsqueeze(1), True)
            prev = emb.gather(1, choice.view(b, 1, 1).expand(b, 1, d)).squeeze(1)
        return torch.stack(out, dim=1)


class OrderPolicyNet(nn.Module):
    """Encoder + permutation decoder."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = PathEncoder(config)
        self.decoder = PermutationDecoder(config.d, config.heads)

    def sample_orders(self, paths, k, generator=None):
        emb = self.encoder(paths)[0]
        return self.decoder.sample(emb, k, generator=generator)

    def order_log_prob(self, paths, orders):
        emb = self.encoder(paths)
        if emb.shape[0] == 1 and orders.shape[0] > 1:
            emb = emb.expand(orders.shape[0], *emb.shape[1:])
        return self.decoder.log_prob(emb, orders)


class ValueNet(nn.Module):
    """Same encoder architecture (separate weights), then one attention layer
    over agents, mean pooling, and linear layers to a scalar."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = PathEncoder(config)
        self.norm = nn.LayerNorm(config.d)
        self.attention = MultiHeadAttention(config.d, config.heads)
        self.head = nn.Sequential(
            nn.Linear(config.d, config.d), nn.ReLU(), nn.Linear(config.d, 1)
        )

    def forward(self, paths):
        emb = self.encoder(paths)  # (B, N, d)
        x = self.norm(emb)
        x = x + self.attention(x, x)
        return self.head(x.mean(dim=1)).squeeze(-1)  # (B,)
