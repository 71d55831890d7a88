"""Multi-head vector quantization of communication vectors.

A length-m vector is cut into G contiguous heads of dimension d = m/G;
each head snaps to its nearest row of a shared L x d codebook. Gradients
pass straight through the snap; the codebook and commitment terms route
gradients to the codebook and the sender respectively.

Code indices are 1-based (1..L) throughout the public surface.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .nn import Parameter

BINARY_MAGIC = b"VQCB"
BINARY_VERSION = 1


class UninitializedCodebook(RuntimeError):
    """Raised when quantizing through a codebook that was never initialized."""


@dataclass
class QuantizerConfig:
    L: int
    G: int
    m: int
    beta: float = 0.25
    codebook_loss_weight: float = 1.0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"codebook size must be positive, got {self.L}")
        if self.G < 1:
            raise ValueError(f"head count must be positive, got {self.G}")
        if self.m < 1:
            raise ValueError(f"vector dimension must be positive, got {self.m}")
        if self.m % self.G != 0:
            raise ShapeError(f"segment: {self.m} not divisible by {self.G}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.codebook_loss_weight <= 0:
            raise ValueError(f"codebook_loss_weight must be positive, got {self.codebook_loss_weight}")

    @property
    def d(self) -> int:
        return self.m // self.G


class Codebook:
    """Shared table of L trainable code vectors of dimension d."""

    def __init__(self, L: int, d: int, entries: np.ndarray | None = None, initialized: bool = False):
        if entries is None:
            entries = np.zeros((L, d))
        entries = np.asarray(entries, dtype=np.float64)
        if entries.shape != (L, d):
            raise ShapeError(f"codebook: expected entries of shape {(L, d)}, got {entries.shape}")
        self.entries = Parameter(entries, name="codebook.entries")
        self.initialized = initialized

    @property
    def L(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1]

    def set_entries(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.entries.shape:
            raise ShapeError(f"codebook: expected {self.entries.shape}, got {values.shape}")
        self.entries.data[...] = values
        self.initialized = True


@dataclass
class QuantizationOutput:
    """Quantized vector plus per-head indices and the two auxiliary losses."""

    z: Tensor
    indices: np.ndarray  # 1-based, shape (G,) or (batch, G)
    codebook_loss: Tensor
    commitment_loss: Tensor
    num_vectors: int = 1


@dataclass
class CodebookStats:
    usage: np.ndarray  # length L, counts per code
    perplexity: float


def segment(h, G: int) -> list[Tensor]:
    """Cut a vector (or batch of vectors) into G contiguous heads."""
    h = ad.as_tensor(h)
    m = h.shape[-1]
    if m % G != 0:
        raise ShapeError(f"segment: {m} not divisible by {G}")
    return ad.split(h, G, axis=-1)


def nearest_code(s, codebook: Codebook) -> int:
    """1-based index of the codebook row nearest to ``s`` (ties: lowest index)."""
    if not codebook.initialized:
        raise UninitializedCodebook("codebook must be initialized before lookup")
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (codebook.d,):
        raise ShapeError(f"nearest_code: expected shape {(codebook.d,)}, got {s.shape}")
    d2 = ((codebook.entries.data - s) ** 2).sum(axis=1)
    return int(d2.argmin()) + 1


def _nearest_indices(segments: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """0-based argmin over codebook rows for segments of shape (..., d)."""
    d2 = ((segments[..., None, :] - entries) ** 2).sum(axis=-1)
    return d2.argmin(axis=-1)


def quantize(h, config: QuantizerConfig, codebook: Codebook) -> QuantizationOutput:
    """Snap each head of ``h`` to its nearest code; straight-through backward.

    ``h`` may be a single vector of length m or a batch of shape (B, m).
    Losses are the per-vector head averages, then averaged over the batch.
    """
    if not codebook.initialized:
        raise UninitializedCodebook("codebook must be initialized before quantize")
    h = ad.as_tensor(h)
    if h.shape[-1] != config.m:
        raise ShapeError(f"quantize: expected last dim {config.m}, got {h.shape}")
    if codebook.d != config.d:
        raise ShapeError(f"quantize: codebook dim {codebook.d} != m/G = {config.d}")
    single = h.ndim == 1
    hb = ad.reshape(h, (1, config.m)) if single else h
    batch = hb.shape[0]

    segs = ad.reshape(hb, (batch, config.G, config.d))
    idx0 = _nearest_indices(segs.data, codebook.entries.data)
    picked = ad.gather_rows(codebook.entries, idx0)  # (B, G, d), grads -> codebook

    # straight-through: forward value is the snapped vector, backward is identity on h
    zq = codebook.entries.data[idx0].reshape(batch, config.m)
    z = ad.straight_through(hb, zq)

    norm = 1.0 / (batch * config.G)
    codebook_loss = ad.scale(ad.tsum(ad.sqdist(ad.stop_gradient(segs), picked)), norm)
    commitment_loss = ad.scale(ad.tsum(ad.sqdist(segs, ad.stop_gradient(picked))), norm)

    indices = (idx0 + 1).astype(np.int64)
    if single:
        z = ad.reshape(z, (config.m,))
        indices = indices[0]
    return QuantizationOutput(
        z=z,
        indices=indices,
        codebook_loss=codebook_loss,
        commitment_loss=commitment_loss,
        num_vectors=batch,
    )


def gumbel_quantize(
    h,
    config: QuantizerConfig,
    codebook: Codebook,
    temperature: float,
    rng: np.random.Generator | None = None,
    hard: bool = False,
    noise: np.ndarray | None = None,
) -> QuantizationOutput:
    """Gumbel-Softmax relaxation: per head, sample a convex combination of codes.

    Logits are negative squared distances to the codes. With ``hard`` the
    sample is snapped to the argmax code with a straight-through gradient
    onto the soft mixture. Losses are computed against the argmax code,
    exactly as in ``quantize``.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if not codebook.initialized:
        raise UninitializedCodebook("codebook must be initialized before quantize")
    h = ad.as_tensor(h)
    single = h.ndim == 1
    hb = ad.reshape(h, (1, config.m)) if single else h
    batch = hb.shape[0]

    segs = ad.reshape(hb, (batch, config.G, config.d))
    seg4 = ad.reshape(segs, (batch, config.G, 1, config.d))
    logits = ad.scale(ad.sqdist(seg4, codebook.entries), -1.0)  # (B, G, L)
    if noise is None:
        if rng is None:
            raise ValueError("gumbel_quantize needs an rng when noise is not given")
        noise = rng.gumbel(size=logits.shape)
    noise = np.broadcast_to(np.asarray(noise, dtype=np.float64), logits.shape)
    y = ad.softmax(ad.scale(ad.add(logits, Tensor(noise)), 1.0 / temperature))
    z_soft = ad.reshape(ad.matmul(y, codebook.entries), (batch, config.m))

    idx0 = (logits.data + noise).argmax(axis=-1)
    if hard:
        zq = codebook.entries.data[idx0].reshape(batch, config.m)
        z = ad.straight_through(z_soft, zq)
    else:
        z = z_soft

    picked = ad.gather_rows(codebook.entries, idx0)
    norm = 1.0 / (batch * config.G)
    codebook_loss = ad.scale(ad.tsum(ad.sqdist(ad.stop_gradient(segs), picked)), norm)
    commitment_loss = ad.scale(ad.tsum(ad.sqdist(segs, ad.stop_gradient(picked))), norm)

    indices = (idx0 + 1).astype(np.int64)
    if single:
        z = ad.reshape(z, (config.m,))
        indices = indices[0]
    return QuantizationOutput(
        z=z,
        indices=indices,
        codebook_loss=codebook_loss,
        commitment_loss=commitment_loss,
        num_vectors=batch,
    )


def combined_aux_loss(outputs, config: QuantizerConfig) -> Tensor:
    """codebook_loss_weight * mean(codebook) + beta * mean(commitment)."""
    if isinstance(outputs, QuantizationOutput):
        outputs = [outputs]
    outputs = list(outputs)
    if not outputs:
        raise ValueError("combined_aux_loss: no quantization outputs")
    inv = 1.0 / len(outputs)
    cb = ad.scale(_sum_scalars([o.codebook_loss for o in outputs]), inv)
    cm = ad.scale(_sum_scalars([o.commitment_loss for o in outputs]), inv)
    return ad.add(ad.scale(cb, config.codebook_loss_weight), ad.scale(cm, config.beta))


def _sum_scalars(ts: list[Tensor]) -> Tensor:
    total = ts[0]
    for t in ts[1:]:
        total = ad.add(total, t)
    return total


def codebook_stats(outputs, L: int | None = None) -> CodebookStats:
    """Usage histogram over code indices and its exponentiated entropy."""
    if isinstance(outputs, QuantizationOutput):
        outputs = [outputs]
    outputs = list(outputs)
    if L is None:
        if not outputs:
            return CodebookStats(usage=np.zeros(0, dtype=np.int64), perplexity=1.0)
        L = int(max(int(np.max(o.indices)) for o in outputs))
    usage = np.zeros(L, dtype=np.int64)
    for o in outputs:
        flat = np.asarray(o.indices).reshape(-1)
        usage += np.bincount(flat - 1, minlength=L)[:L]
    total = usage.sum()
    if total == 0:
        return CodebookStats(usage=usage, perplexity=1.0)
    p = usage[usage > 0] / total
    entropy = -(p * np.log(p)).sum()
    return CodebookStats(usage=usage, perplexity=float(np.exp(entropy)))


# ---------------------------------------------------------------------------
# k-means initialization
# ---------------------------------------------------------------------------


def lloyd(samples: np.ndarray, L: int, iters: int, rng: np.random.Generator) -> np.ndarray:
    """Lloyd's algorithm; empty clusters re-seed to the farthest sample."""
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    if n >= L:
        seed_idx = rng.choice(n, size=L, replace=False)
    else:
        seed_idx = rng.choice(n, size=L, replace=True)
    centroids = samples[seed_idx].copy()
    prev_assign = None
    for _ in range(iters):
        d2 = ((samples[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
        assign = d2.argmin(axis=1)
        for j in range(L):
            members = samples[assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
        empty = [j for j in range(L) if not (assign == j).any()]
        for j in empty:
            dist = ((samples - centroids[assign]) ** 2).sum(axis=-1)
            far = int(dist.argmax())
            centroids[j] = samples[far]
            assign[far] = j
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign
    return centroids


def kmeans_init(samples: np.ndarray, L: int, iters: int = 25, seed: int | np.random.Generator = 0) -> Codebook:
    """Build an initialized codebook from Lloyd's algorithm over ``samples``."""
    if L <= 0:
        raise ValueError(f"codebook size must be positive, got {L}")
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] < 1:
        raise ValueError("kmeans_init needs at least one sample")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centroids = lloyd(samples, L, iters, rng)
    return Codebook(L, samples.shape[1], entries=centroids, initialized=True)


def inertia(samples: np.ndarray, centroids: np.ndarray) -> float:
    d2 = ((samples[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
    return float(d2.min(axis=1).sum())


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_codebook(path, codebook: Codebook, config: QuantizerConfig, fmt: str = "binary") -> None:
    """Write codebook entries plus the quantizer header; binary form is bit-exact."""
    if fmt == "binary":
        header = struct.pack(
            "<4sIIIIdd",
            BINARY_MAGIC,
            BINARY_VERSION,
            config.L,
            config.G,
            config.m,
            config.beta,
            config.codebook_loss_weight,
        )
        with open(path, "wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(codebook.entries.data).tobytes())
    elif fmt == "json":
        payload = {
            "version": BINARY_VERSION,
            "L": config.L,
            "G": config.G,
            "m": config.m,
            "beta": config.beta,
            "codebook_loss_weight": config.codebook_loss_weight,
            "entries": codebook.entries.data.tolist(),
        }
        with open(path, "w") as f:
            json.dump(payload, f)
    else:
        raise ValueError(f"unknown codebook format {fmt!r}")


def load_codebook(path, fmt: str = "binary") -> tuple[Codebook, QuantizerConfig]:
    if fmt == "binary":
        with open(path, "rb") as f:
            raw = f.read()
        head_size = struct.calcsize("<4sIIIIdd")
        magic, version, L, G, m, beta, weight = struct.unpack("<4sIIIIdd", raw[:head_size])
        if magic != BINARY_MAGIC:
            raise ValueError(f"not a codebook file (magic {magic!r})")
        if version != BINARY_VERSION:
            raise ValueError(f"unsupported codebook version {version}")
        config = QuantizerConfig(L=L, G=G, m=m, beta=beta, codebook_loss_weight=weight)
        entries = np.frombuffer(raw[head_size:], dtype=np.float64).reshape(L, config.d).copy()
    elif fmt == "json":
        with open(path) as f:
            payload = json.load(f)
        config = QuantizerConfig(
            L=payload["L"],
            G=payload["G"],
            m=payload["m"],
            beta=payload["beta"],
            codebook_loss_weight=payload["codebook_loss_weight"],
        )
        entries = np.asarray(payload["entries"], dtype=np.float64)
    else:
        raise ValueError(f"unknown codebook format {fmt!r}")
    return Codebook(config.L, config.d, entries=entries, initialized=True), config
