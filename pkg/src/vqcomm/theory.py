"""Sensitivity/dimensionality bound calculators and numerical checks.

Covers the two headline concentration bounds (with and without the
discretization bottleneck), their coarser Euclidean covering-number forms,
a Monte Carlo check of the underlying per-cell concentration step, and the
Gaussian-vector analyses (variance sweep, displacement field, attention
robustness to novel distractors).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Parameter
from .optim import Adam
from .quantizer import Codebook, QuantizerConfig, kmeans_init, quantize

_MAX_ENUMERABLE_CELLS = 4096
_LOG_FLOAT_MAX = math.log(np.finfo(np.float64).max)


@dataclass
class BoundInputs:
    """Parameters shared by the bound calculators; unused fields are ignored."""

    G: int = 1
    L: int = 2
    m: int = 1
    n: int = 1000
    delta: float = 0.05
    alpha: float = 1.0
    R_H: float = 1.0
    varsigma_bar: float = 0.0
    zeta: float = 1.0
    C_J: float = 1.0
    L_d: float = 1.0
    rho: int = 1

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0,1), got {self.delta}")
        if self.n < 1:
            raise ValueError(f"sample count must be positive, got {self.n}")
        if self.L < 1 or self.m < 1:
            raise ValueError("L and m must be positive")
        if self.G < 0:
            raise ValueError(f"head count must be non-negative, got {self.G}")
        if self.alpha < 0 or self.R_H < 0 or self.varsigma_bar < 0:
            raise ValueError("alpha, R_H and varsigma_bar must be non-negative")
        if self.rho < 1:
            raise ValueError(f"rho must be a positive integer, got {self.rho}")


def bound_with_discretization(inputs: BoundInputs) -> float:
    """alpha * sqrt((G ln L + ln(2/delta)) / (2n))."""
    num = inputs.G * math.log(inputs.L) + math.log(2.0 / inputs.delta)
    return inputs.alpha * math.sqrt(num / (2.0 * inputs.n))


def bound_without_discretization(inputs: BoundInputs) -> float:
    """alpha * sqrt((m ln(4 sqrt(n m)) + ln(2/delta)) / (2n)) + varsigma_bar * R_H / sqrt(n)."""
    num = inputs.m * math.log(4.0 * math.sqrt(inputs.n * inputs.m)) + math.log(2.0 / inputs.delta)
    first = inputs.alpha * math.sqrt(num / (2.0 * inputs.n))
    return first + inputs.varsigma_bar * inputs.R_H / math.sqrt(inputs.n)


def _sqrt_ratio_logspace(log_lead: float, rest: float, n: int) -> float:
    """sqrt((exp(log_lead) + rest) / n), safe when exp(log_lead) overflows."""
    if log_lead < 700.0:
        return math.sqrt((math.exp(log_lead) + rest) / n)
    # leading term dominates any representable rest
    log_val = 0.5 * (log_lead - math.log(n))
    if log_val > _LOG_FLOAT_MAX:
        return math.inf
    return math.exp(log_val)


def covering_bound_with(inputs: BoundInputs) -> float:
    """C_J sqrt((4 L^G + 2 L m + 2 zeta + 2 ln(1/delta)) / n) + sqrt(L_d^(2/rho) / n)."""
    log_lead = math.log(4.0) + inputs.G * math.log(inputs.L)
    rest = 2.0 * inputs.L * inputs.m + 2.0 * inputs.zeta + 2.0 * math.log(1.0 / inputs.delta)
    first = inputs.C_J * _sqrt_ratio_logspace(log_lead, rest, inputs.n)
    second = math.sqrt(inputs.L_d ** (2.0 / inputs.rho) / inputs.n)
    return first + second


def covering_bound_without(inputs: BoundInputs) -> float:
    """C_J sqrt((4 (4 sqrt(m))^m + 2 zeta + 2 ln(1/delta)) / n) + sqrt(L_d^(2/rho) / n) + varsigma R_H."""
    log_lead = math.log(4.0) + inputs.m * math.log(4.0 * math.sqrt(inputs.m))
    rest = 2.0 * inputs.zeta + 2.0 * math.log(1.0 / inputs.delta)
    first = inputs.C_J * _sqrt_ratio_logspace(log_lead, rest, inputs.n)
    second = math.sqrt(inputs.L_d ** (2.0 / inputs.rho) / inputs.n)
    return first + second + inputs.varsigma_bar * inputs.R_H


# ---------------------------------------------------------------------------
# Monte Carlo check of the per-cell concentration step
# ---------------------------------------------------------------------------


@dataclass
class TrialRecord:
    gaps: np.ndarray
    bound: float
    violated: np.ndarray
    violation_rate: float
    cell_count: int


def _cell_ids(samples: np.ndarray, entries: np.ndarray, L: int, G: int) -> np.ndarray:
    """Map each sample to the id of its quantization cell (0 .. L^G - 1)."""
    d = entries.shape[1]
    segs = samples.reshape(samples.shape[0], G, d)
    d2 = ((segs[:, :, None, :] - entries[None, None, :, :]) ** 2).sum(axis=-1)
    idx = d2.argmin(axis=-1)
    weights = L ** np.arange(G, dtype=np.int64)
    return idx @ weights


def verify_hoeffding(
    L: int,
    G: int,
    d: int,
    n: int,
    delta: float,
    trials: int,
    seed: int,
    input_std: float = 1.0,
    ref_multiplier: int = 100,
) -> TrialRecord:
    """Check the max-cell deviation bound empirically over fresh samples.

    Fixes a random codebook and a Gaussian input distribution, estimates
    reference cell probabilities from ``ref_multiplier * n`` draws, then per
    trial compares fresh empirical frequencies against the closed-form bound.
    """
    cells = L**G
    if cells > _MAX_ENUMERABLE_CELLS:
        raise ValueError(f"L^G = {cells} exceeds enumeration guard {_MAX_ENUMERABLE_CELLS}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    entries = rng.normal(size=(L, d))
    m = G * d

    ref = rng.normal(scale=input_std, size=(ref_multiplier * n, m)) if input_std > 0 else np.zeros((ref_multiplier * n, m))
    p_ref = np.bincount(_cell_ids(ref, entries, L, G), minlength=cells) / (ref_multiplier * n)

    bound = bound_with_discretization(BoundInputs(G=G, L=L, n=n, delta=delta, alpha=1.0))
    gaps = np.zeros(trials)
    for t in range(trials):
        draw = rng.normal(scale=input_std, size=(n, m)) if input_std > 0 else np.zeros((n, m))
        p_hat = np.bincount(_cell_ids(draw, entries, L, G), minlength=cells) / n
        gaps[t] = np.abs(p_ref - p_hat).max()
    violated = gaps > bound
    return TrialRecord(
        gaps=gaps,
        bound=bound,
        violated=violated,
        violation_rate=float(violated.mean()),
        cell_count=cells,
    )


# ---------------------------------------------------------------------------
# Gaussian-vector analyses
# ---------------------------------------------------------------------------


def _sub_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def gaussian_variance_sweep(
    m: int,
    L_values: list[int],
    G_values: list[int],
    samples: int = 256,
    trials: int = 20,
    seed: int = 0,
) -> list[dict]:
    """Total variance retained by quantized standard-Gaussian vectors.

    Per (L, G, trial): draw vectors, fit a codebook to their heads with
    k-means, quantize, and record the summed per-dimension variance.
    """
    rows = []
    for L in L_values:
        for G in G_values:
            if m % G != 0:
                raise ValueError(f"m = {m} not divisible by G = {G}")
            d = m // G
            variances = np.zeros(trials)
            raw = np.zeros(trials)
            for t in range(trials):
                rng = _sub_rng(seed, L, G, t)
                x = rng.standard_normal((samples, m))
                book = kmeans_init(x.reshape(samples * G, d), L, seed=rng)
                idx = _cell_indices_per_head(x, book.entries.data, G)
                q = book.entries.data[idx].reshape(samples, m)
                variances[t] = _total_variance(q)
                raw[t] = x.var(axis=0).sum()
            rows.append(
                {
                    "L": L,
                    "G": G,
                    "trials": trials,
                    "samples": samples,
                    "mean_total_variance": float(variances.mean()),
                    "mean_raw_variance": float(raw.mean()),
                }
            )
    return rows


def _cell_indices_per_head(x: np.ndarray, entries: np.ndarray, G: int) -> np.ndarray:
    d = entries.shape[1]
    segs = x.reshape(x.shape[0], G, d)
    d2 = ((segs[:, :, None, :] - entries[None, None, :, :]) ** 2).sum(axis=-1)
    return d2.argmin(axis=-1)


def _total_variance(q: np.ndarray) -> float:
    """Summed per-dimension variance, aggregated over distinct rows.

    Quantized batches repeat few distinct vectors; grouping keeps the
    single-representable-point case at exactly zero.
    """
    uniq, counts = np.unique(q, axis=0, return_counts=True)
    w = counts / counts.sum()
    mu = (w[:, None] * uniq).sum(axis=0)
    dev = uniq - mu
    return float(((dev * dev) * w[:, None]).sum())


def vector_field(grid_range: float, grid_steps: int, codebook: Codebook) -> list[dict]:
    """Displacement q(h) - h on a square grid for a 2-D codebook (G = 1)."""
    if codebook.d != 2:
        raise ValueError(f"vector_field needs 2-D codes, got d = {codebook.d}")
    axis = np.linspace(-grid_range, grid_range, grid_steps)
    rows = []
    for x in axis:
        for y in axis:
            point = np.array([x, y])
            d2 = ((codebook.entries.data - point) ** 2).sum(axis=1)
            j = int(d2.argmin())
            code = codebook.entries.data[j]
            rows.append(
                {
                    "x": float(x),
                    "y": float(y),
                    "dx": float(code[0] - x),
                    "dy": float(code[1] - y),
                    "code": j + 1,
                }
            )
    return rows


def attention_robustness(
    train_distractors: int,
    test_distractors: int,
    quantize_on: bool,
    seed: int,
    dim: int = 16,
    L: int = 16,
    G: int = 4,
    train_episodes: int = 512,
    eval_episodes: int = 512,
    steps: int = 60,
    batch: int = 64,
    lr: float = 0.05,
    warmup_vectors: int = 256,
) -> dict:
    """Train a single attention layer to retrieve a fixed target vector.

    Items are the target plus fresh Gaussian distractors in random order; a
    learned query produces attention over items, and the (optionally
    quantized) attention output is matched against the items to pick one.
    Evaluation uses more, never-seen distractors.
    """
    rng = _sub_rng(seed, 0)
    target = rng.normal(size=dim)
    query = Parameter(rng.normal(size=(dim, 1)) * 0.1, name="attn.query")
    cfg = QuantizerConfig(L=L, G=G, m=dim)
    book = Codebook(L, dim // G)
    opt = Adam([query, book.entries] if quantize_on else [query], lr=lr)

    def make_batch(gen, count, distractors):
        items = gen.normal(size=(count, distractors + 1, dim))
        labels = gen.integers(0, distractors + 1, size=count)
        items[np.arange(count), labels] = target
        return items, labels

    def forward(items, quantizing):
        t_items = Tensor(items)
        scores = ad.scale(ad.matmul(t_items, query), 1.0 / math.sqrt(dim))
        alpha = ad.softmax(ad.transpose(scores))  # (B, 1, D+1)
        out = ad.reshape(ad.matmul(alpha, t_items), (items.shape[0], dim))
        q_out = None
        if quantizing:
            q_out = quantize(out, cfg, book)
            out = q_out.z
        logits = ad.reshape(
            ad.matmul(t_items, ad.reshape(out, (items.shape[0], dim, 1))),
            (items.shape[0], items.shape[1]),
        )
        return logits, out, q_out

    data_rng = _sub_rng(seed, 1)
    collected: list[np.ndarray] = []
    quantizing = False
    for step in range(steps):
        items, labels = make_batch(data_rng, batch, train_distractors)
        if quantize_on and not quantizing:
            # warmup: continuous path while collecting pre-quantization outputs
            logits, out, q_out = forward(items, quantizing=False)
            collected.append(out.data.copy())
            if sum(len(c) for c in collected) >= warmup_vectors:
                segs = np.concatenate(collected).reshape(-1, dim // G)
                book.set_entries(kmeans_init(segs, L, seed=_sub_rng(seed, 2)).entries.data)
                quantizing = True
        else:
            logits, out, q_out = forward(items, quantizing=quantizing)
        loss = ad.cross_entropy(logits, labels)
        if q_out is not None:
            aux = ad.add(
                ad.scale(q_out.codebook_loss, cfg.codebook_loss_weight),
                ad.scale(q_out.commitment_loss, cfg.beta),
            )
            loss = ad.add(loss, aux)
        opt.zero_grad()
        ad.backward(loss)
        if quantize_on and book.entries.grad is None:
            book.entries.grad = np.zeros_like(book.entries.data)
        opt.step()

    eval_rng = _sub_rng(seed, 3)
    items, labels = make_batch(eval_rng, eval_episodes, test_distractors)
    logits, _, _ = forward(items, quantizing=quantizing)
    accuracy = float((logits.data.argmax(axis=1) == labels).mean())

    train_items, train_labels = make_batch(eval_rng, eval_episodes, train_distractors)
    train_logits, _, _ = forward(train_items, quantizing=quantizing)
    train_accuracy = float((train_logits.data.argmax(axis=1) == train_labels).mean())
    return {
        "accuracy": accuracy,
        "train_accuracy": train_accuracy,
        "quantized": bool(quantize_on),
        "train_distractors": train_distractors,
        "test_distractors": test_distractors,
    }
