"""Caption decoder with per-word dynamic modal attention.

At every word step the decoder computes a convex weight vector over the
three encoded representations (visual, sensor, fused), mixes their
projections with it, and feeds the mixture alongside the previous token's
embedding into a GRU.  The weights come from a temperature softmax over
log-preferences, optionally perturbed by Gumbel noise during training;
the straight-through variant hardens the weights to a one-hot choice in
the forward pass while keeping the soft gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .fusion import EncodedRepresentations
from .rng import Rng
from .tensor import Tensor

MODALITIES = ("V", "S", "V+S")
DMA_VARIANTS = ("softmax", "gumbel", "st-gumbel")

BOS_ID = 1
EOS_ID = 2


@dataclass
class DmaConfig:
    """Attention-shaping knobs: variant, temperature, modality preferences."""

    variant: str = "gumbel"
    tau: float = 0.05
    c: tuple[float, float, float] = (1.0, 1.0, 1.5)

    def __post_init__(self):
        if self.variant not in DMA_VARIANTS:
            raise ConfigError(
                f"unknown attention variant {self.variant!r}; expected one of {DMA_VARIANTS}"
            )
        if self.tau <= 0:
            raise ConfigError(f"temperature must be positive, got {self.tau}")
        if len(self.c) != 3 or any(ck <= 0 for ck in self.c):
            raise ConfigError(f"preference weights must be three positive floats, got {self.c}")


@dataclass
class DmaParams:
    """Per-modality projections and relevance heads (indexed V, S, V+S)."""

    proj: tuple[Tensor, Tensor, Tensor]  # (H_k, H_attn)
    rel_w: tuple[Tensor, Tensor, Tensor]  # (H_k + H_dec, 1)
    rel_b: tuple[Tensor, Tensor, Tensor]  # (1,)


@dataclass
class GruParams:
    w_rz: Tensor  # (in + hidden, 2 * hidden), gates r, z
    b_rz: Tensor  # (2 * hidden,)
    w_n: Tensor  # (in + hidden, hidden)
    b_n: Tensor  # (hidden,)

    @property
    def hidden(self) -> int:
        return self.w_n.shape[1]


@dataclass
class DecoderParams:
    embedding: Tensor  # (vocab, emb_dim)
    gru: GruParams
    w_out: Tensor  # (H_dec, vocab)
    dma: DmaParams


@dataclass
class AttentionTrace:
    """Per word step: attention weights, winning modality, chosen token."""

    zetas: list[np.ndarray] = field(default_factory=list)
    modalities: list[int] = field(default_factory=list)
    tokens: list[int] = field(default_factory=list)
    word_types: list[str] | None = None

    def append(self, zeta: np.ndarray, token: int) -> None:
        self.zetas.append(np.asarray(zeta, dtype=np.float64).copy())
        self.modalities.append(int(np.argmax(zeta)))
        self.tokens.append(int(token))

    def __len__(self) -> int:
        return len(self.zetas)


def init_gru(in_dim: int, hidden: int, rng: Rng) -> GruParams:
    bound = 1.0 / np.sqrt(in_dim + hidden)
    return GruParams(
        w_rz=Tensor(rng.uniform(-bound, bound, (in_dim + hidden, 2 * hidden)), requires_grad=True),
        b_rz=Tensor(np.zeros(2 * hidden), requires_grad=True),
        w_n=Tensor(rng.uniform(-bound, bound, (in_dim + hidden, hidden)), requires_grad=True),
        b_n=Tensor(np.zeros(hidden), requires_grad=True),
    )


def gru_step(x: Tensor, h: Tensor, p: GruParams) -> Tensor:
    hid = p.hidden
    xh = T.concat([x, h], axis=1)
    rz = T.sigmoid(T.affine(xh, p.w_rz, p.b_rz))
    r = T.slice(rz, 1, 0, hid)
    z = T.slice(rz, 1, hid, 2 * hid)
    n = T.tanh(T.affine(T.concat([x, T.mul(r, h)], axis=1), p.w_n, p.b_n))
    return T.add(T.mul(T.sub(1.0, z), n), T.mul(z, h))


def dma_weights(
    z: EncodedRepresentations,
    dec_state: Tensor,
    cfg: DmaConfig,
    params: DmaParams,
    rng: Rng | None = None,
    *,
    noise: np.ndarray | None = None,
    eta_override=None,
) -> Tensor:
    """Attention weights over (V, S, V+S) for the coming word step.

    Relevance of each representation is scored by a sigmoid head over
    `[h_k; dec_state]`, normalized, reweighted by the fixed preferences c,
    and pushed through a temperature softmax of the log-preferences plus
    per-modality noise g (zero for the plain softmax variant, Gumbel draws
    otherwise).  The st-gumbel variant returns the one-hot argmax in the
    forward pass with the soft weights' gradient.

    `noise` overrides the Gumbel draw (tests, deterministic inference);
    `eta_override` bypasses the relevance heads entirely (test hook).
    """
    if eta_override is not None:
        eta = T.as_tensor(eta_override)
        if eta.data.ndim == 1:
            eta = Tensor(eta.data[None, :])
    else:
        reps = (z.h_v, z.h_s, z.h_vs)
        eta = T.concat(
            [
                T.sigmoid(
                    T.affine(T.concat([reps[k], dec_state], axis=1), params.rel_w[k], params.rel_b[k])
                )
                for k in range(3)
            ],
            axis=1,
        )
    rho = T.div_rows(eta, T.sum_rows(eta))
    batch = rho.data.shape[0]
    c_rho = T.mul(rho, Tensor(np.tile(cfg.c, (batch, 1))))
    pi = T.div_rows(c_rho, T.sum_rows(c_rho))
    if cfg.variant == "softmax":
        g = np.zeros((batch, 3))
    elif noise is not None:
        g = np.asarray(noise, dtype=np.float64)
    else:
        if rng is None:
            raise ConfigError(f"variant {cfg.variant!r} needs an rng or explicit noise")
        g = rng.gumbel((batch, 3))
    zeta = T.softmax(T.add(T.log(pi), Tensor(g)), temperature=cfg.tau)
    if cfg.variant == "st-gumbel":
        zeta = T.st_onehot(zeta)
    return zeta


def dma_mix(z: EncodedRepresentations, zeta: Tensor, params: DmaParams) -> Tensor:
    """Weighted sum of the projected representations, sum_k zeta_k W_k h_k.

    zeta must lie on the probability simplex row-wise.  When a zeta column
    is identically zero the corresponding projection is skipped, so absent
    representations are never touched.
    """
    reps = (z.h_v, z.h_s, z.h_vs)
    out = None
    for k in range(3):
        col = T.slice(zeta, 1, k, k + 1)
        if not col.requires_grad and not np.any(col.data):
            continue
        term = T.scale_rows(T.matmul(reps[k], params.proj[k]), col)
        out = term if out is None else T.add(out, term)
    if out is None:
        raise ConfigError("dma_mix: all attention weights are zero")
    return out


def decode_step(
    prev_token,
    dec_state: Tensor,
    z: EncodedRepresentations,
    cfg: DmaConfig,
    params: DecoderParams,
    rng: Rng | None = None,
    *,
    noise: np.ndarray | None = None,
    fixed_zeta: np.ndarray | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """One word step: returns (logits, new decoder state, attention used).

    `fixed_zeta` pins the attention to a constant row (used by the
    single-representation model variants); otherwise the weights come from
    `dma_weights`.
    """
    prev = np.atleast_1d(np.asarray(prev_token, dtype=np.int64))
    if fixed_zeta is not None:
        zeta = Tensor(np.broadcast_to(np.asarray(fixed_zeta, dtype=np.float64), (prev.shape[0], 3)).copy())
    else:
        zeta = dma_weights(z, dec_state, cfg, params.dma, rng, noise=noise)
    mixed = dma_mix(z, zeta, params.dma)
    x = T.concat([T.embedding_lookup(params.embedding, prev), mixed], axis=1)
    new_state = gru_step(x, dec_state, params.gru)
    logits = T.matmul(new_state, params.w_out)
    return logits, new_state, zeta


def generate(
    z: EncodedRepresentations,
    cfg: DmaConfig,
    params: DecoderParams,
    max_len: int = 15,
    beam: int = 1,
    *,
    fixed_zeta: np.ndarray | None = None,
    rng: Rng | None = None,
    sample_noise: bool = False,
    bos_id: int = BOS_ID,
    eos_id: int = EOS_ID,
) -> tuple[list[int], AttentionTrace]:
    """Decode one caption (batch of one) from the encoded representations.

    Starts from BOS and stops at EOS or after `max_len` tokens; the
    returned ids exclude both markers.  With beam == 1 this is greedy
    argmax decoding; larger beams keep the `beam` best partial hypotheses
    by total log-probability (no length normalization).  Inference is
    deterministic: the noise term is zero regardless of the training
    variant unless `sample_noise` is set, in which case `rng` supplies
    Gumbel draws.
    """
    if max_len < 1 or beam < 1:
        raise ConfigError(f"max_len and beam must be >= 1, got {max_len}, {beam}")

    def step_noise():
        if not sample_noise:
            return np.zeros((1, 3))
        if rng is None:
            raise ConfigError("sample_noise generation needs an rng")
        return rng.gumbel((1, 3))

    hid = params.gru.hidden
    start = Tensor(np.zeros((1, hid)))
    # (cumulative logprob, tokens, state, prev id, trace)
    alive = [(0.0, [], start, bos_id, AttentionTrace())]
    done: list[tuple[float, list[int], AttentionTrace]] = []
    for _ in range(max_len):
        candidates = []
        for score, toks, state, prev, trace in alive:
            logits, new_state, zeta = decode_step(
                prev, state, z, cfg, params, rng, noise=step_noise(), fixed_zeta=fixed_zeta
            )
            row = logits.data[0]
            logp = row - (row.max() + np.log(np.exp(row - row.max()).sum()))
            order = np.argsort(logp)[::-1][:beam]
            for tok in order:
                candidates.append((score + logp[tok], toks, new_state, int(tok), zeta.data[0], trace))
        candidates.sort(key=lambda cand: -cand[0])
        alive = []
        for score, toks, state, tok, zrow, trace in candidates[:beam]:
            new_trace = AttentionTrace(
                zetas=list(trace.zetas), modalities=list(trace.modalities), tokens=list(trace.tokens)
            )
            new_trace.append(zrow, tok)
            if tok == eos_id:
                done.append((score, toks, new_trace))
            else:
                alive.append((score, toks + [tok], state, tok, new_trace))
        if not alive:
            break
    for score, toks, state, prev, trace in alive:
        done.append((score, toks, trace))
    best = max(done, key=lambda d: d[0])
    return best[1], best[2]
