"""Shared plumbing for injecting a quantization site into a model."""

from __future__ import annotations

import copy

import numpy as np

from ..autodiff import Tensor
from ..quantizer import (
    Codebook,
    QuantizationOutput,
    QuantizerConfig,
    gumbel_quantize,
    kmeans_init,
    quantize,
)

VALID_SITES = {
    "gnn": ("communication_result", "communication_input"),
    "rim": ("communication_result", "communication_input", "recurrent_update", "raw_input"),
    "transformer": ("communication_result",),
}


class ConfigError(ValueError):
    """Invalid model/quantizer wiring."""


def check_site(architecture: str, site: str) -> str:
    valid = VALID_SITES.get(architecture)
    if valid is None:
        raise ConfigError(f"unknown architecture {architecture!r}")
    if site not in valid:
        raise ConfigError(f"site {site!r} invalid for {architecture!r}; choose from {valid}")
    return site


class CommunicationQuantizer:
    """One shared codebook serving every discretization site of a model.

    Lifecycle: ``collecting`` passes vectors through unchanged while caching
    them for k-means; after ``initialize()`` every ``apply`` call snaps its
    input through the codebook.
    """

    def __init__(
        self,
        config: QuantizerConfig,
        method: str = "vq",
        temperature: float = 1.0,
        warmup_vectors: int = 512,
        rng: np.random.Generator | None = None,
    ):
        if method not in ("vq", "gumbel"):
            raise ConfigError(f"unknown quantization method {method!r}")
        self.config = config
        self.codebook = Codebook(config.L, config.d)
        self.method = method
        self.temperature = float(temperature)
        self.warmup_vectors = int(warmup_vectors)
        self.rng = rng
        self.hard = False  # gumbel only: argmax codes at evaluation
        self._reservoir = np.zeros((0, config.d))
        self._collected_count = 0

    @property
    def active(self) -> bool:
        return self.codebook.initialized

    def apply(self, h: Tensor) -> tuple[Tensor, QuantizationOutput | None]:
        if not self.active:
            # keep only the freshest warmup vectors: early ones come from a
            # barely-trained sender and would seed k-means poorly
            flat = h.data.reshape(-1, self.config.d)
            self._reservoir = np.concatenate([self._reservoir, flat])[-self.warmup_vectors :]
            self._collected_count += flat.shape[0]
            return h, None
        if self.method == "gumbel":
            if self.hard:
                # evaluation: deterministic argmax, no sampling
                out = gumbel_quantize(
                    h, self.config, self.codebook, temperature=self.temperature, noise=0.0, hard=True
                )
            else:
                out = gumbel_quantize(
                    h, self.config, self.codebook, temperature=self.temperature, rng=self.rng
                )
        else:
            out = quantize(h, self.config, self.codebook)
        return out.z, out

    def initialize(self, seed: int | np.random.Generator = 0) -> None:
        """Run k-means over the collected warmup vectors and enable quantization."""
        if not len(self._reservoir):
            raise ConfigError("no vectors collected for codebook initialization")
        book = kmeans_init(self._reservoir, self.config.L, seed=seed)
        self.codebook.set_entries(book.entries.data)
        self._reservoir = np.zeros((0, self.config.d))

    def collected_count(self) -> int:
        return self._collected_count


def ablation_site(model, site: str):
    """Model variant with the quantization point moved to ``site``.

    Parameters (and the shared codebook) are the same objects as in the
    original model; only the site selection differs.
    """
    from .gnn import GnnModel
    from .rim import RimModel

    if isinstance(model, GnnModel):
        arch = "gnn"
    elif isinstance(model, RimModel):
        arch = "rim"
    else:
        raise ConfigError(f"ablation sites are defined for GNN and RIM models, not {type(model).__name__}")
    check_site(arch, site)
    if arch == "rim" and model.quantizer is not None:
        expected = model.input_dim if site == "raw_input" else model.hidden
        if model.quantizer.config.m != expected:
            raise ConfigError(
                f"quantizer dimension {model.quantizer.config.m} does not match site {site!r} (needs {expected})"
            )
    variant = copy.copy(model)
    variant.site = site
    return variant
