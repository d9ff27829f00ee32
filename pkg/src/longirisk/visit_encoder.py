"""Per-visit encoder: frozen image encoder stub, view/laterality
conditioning, self-attention over the four images, attention pooling."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .cohort import SLOT_KEYS, SLOTS
from .errors import ConfigError, ContractError, DimensionError
from .layers import Module, TransformerBlock

MODES = ("random_projection", "passthrough")


class ImageEncoderStub(Module):
    """Frozen stand-in for the CNN image encoder.

    ``random_projection`` flattens a 3-channel image and multiplies it by a
    fixed Gaussian matrix; ``passthrough`` returns precomputed embeddings
    unchanged. Nothing here ever receives a gradient.
    """

    def __init__(self, mode: str, d_img: int, resolution: tuple[int, int], rng: np.random.Generator):
        if mode not in MODES:
            raise ConfigError(f"unknown encoder mode {mode!r}; expected one of {MODES}")
        self.mode = mode
        self.d_img = d_img
        self.resolution = tuple(resolution)
        if mode == "random_projection":
            n = 3 * self.resolution[0] * self.resolution[1]
            self.projection = Tensor(rng.normal(0.0, 1.0 / np.sqrt(n), size=(d_img, n)))
        else:
            self.projection = None

    @property
    def input_shape(self) -> tuple[int, ...]:
        if self.mode == "passthrough":
            return (self.d_img,)
        return (3, *self.resolution)

    def __call__(self, img) -> Tensor:
        img = ag.as_tensor(img)
        lead = img.ndim - len(self.input_shape)
        if lead < 0 or img.shape[lead:] != self.input_shape:
            raise DimensionError(f"image encoder expects trailing shape {self.input_shape}, got {img.shape}")
        if self.mode == "passthrough":
            return img
        flat = img.reshape(-1, self.projection.shape[1])
        out = ag.matmul(flat, ag.transpose(self.projection))
        return out.reshape(*img.shape[:lead], self.d_img)


def encode_image(stub: ImageEncoderStub, img) -> Tensor:
    return stub(img)


class ViewConditioner(Module):
    """``h = (W_scale e_slot) * x + W_shift e_slot`` with one learned
    embedding per (laterality, view) slot and matrices shared by all slots.

    Initialised near the identity map so an untrained (or frozen) conditioner
    still passes the image embedding through.
    """

    def __init__(self, d_img: int, d_e: int, rng: np.random.Generator):
        self.embeddings = Tensor(1.0 + 0.1 * rng.normal(size=(len(SLOTS), d_e)), requires_grad=True)
        scale = 0.1 * rng.normal(size=(d_img, d_e)) / np.sqrt(d_e)
        if d_e == d_img:
            scale += np.eye(d_img)
        else:
            scale += 1.0 / d_e
        self.w_scale = Tensor(scale, requires_grad=True)
        self.w_shift = Tensor(0.02 * rng.normal(size=(d_img, d_e)) / np.sqrt(d_e), requires_grad=True)

    def slot_affine(self) -> tuple[Tensor, Tensor]:
        """(4, d_img) scale and shift rows, one per slot in ``SLOT_KEYS`` order."""
        e = self.embeddings
        return ag.matmul(e, ag.transpose(self.w_scale)), ag.matmul(e, ag.transpose(self.w_shift))

    def __call__(self, x: Tensor) -> Tensor:
        """Condition a (..., 4, d_img) stack whose slots follow ``SLOT_KEYS``."""
        x = ag.as_tensor(x)
        if x.ndim < 2 or x.shape[-2:] != (len(SLOTS), self.w_scale.shape[0]):
            raise DimensionError(f"conditioner expects (..., 4, {self.w_scale.shape[0]}), got {x.shape}")
        scale, shift = self.slot_affine()
        return ag.add(ag.mul(x, ag.expand(scale, x.shape)), ag.expand(shift, x.shape))


def slot_index(slot) -> int:
    if isinstance(slot, str) and slot in SLOT_KEYS:
        return SLOT_KEYS.index(slot)
    if tuple(slot) in SLOTS:
        return SLOTS.index(tuple(slot))
    raise ContractError(f"unknown slot {slot!r}; expected one of {SLOT_KEYS}")


def condition(vc: ViewConditioner, x, slot) -> Tensor:
    """Condition a single embedding for one (laterality, view) slot."""
    i = slot_index(slot)
    x = ag.as_tensor(x)
    if x.shape != (vc.w_scale.shape[0],):
        raise DimensionError(f"expected embedding of width {vc.w_scale.shape[0]}, got {x.shape}")
    scale, shift = vc.slot_affine()
    return ag.add(ag.mul(x, scale[i]), shift[i])


class AttentionPooler(Module):
    def __init__(self, d: int, rng: np.random.Generator):
        self.scorer = Tensor(rng.normal(0.0, 1.0 / np.sqrt(d), size=(1, d)), requires_grad=True)
        self.last_weights: np.ndarray | None = None

    def __call__(self, tokens: Tensor) -> Tensor:
        n, t, d = tokens.shape
        scores = ag.matmul(tokens, ag.transpose(self.scorer)).reshape(n, t)
        weights = ag.softmax(scores, axis=-1)
        self.last_weights = weights.data
        return ag.tsum(ag.mul(tokens, ag.expand(weights.reshape(n, t, 1), tokens.shape)), axis=1)


class VisitEncoder(Module):
    def __init__(
        self,
        mode: str,
        d_img: int,
        resolution: tuple[int, int],
        rng: np.random.Generator,
        n_heads: int = 1,
        d_e: int | None = None,
        frozen: bool = True,
    ):
        self.stub = ImageEncoderStub(mode, d_img, resolution, rng)
        self.conditioner = ViewConditioner(d_img, d_e or d_img, rng)
        self.block = TransformerBlock(d_img, n_heads, rng)
        self.pooler = AttentionPooler(d_img, rng)
        self.frozen = frozen
        if frozen:
            self.freeze()

    @property
    def d_visit(self) -> int:
        return self.stub.d_img

    def aggregate(self, tokens: Tensor) -> Tensor:
        """(N, 4, d) stub embeddings -> (N, d) visit embeddings."""
        return aggregate_visit(self, self.conditioner(tokens))

    def __call__(self, images) -> Tensor:
        """(N, 4, *input_shape) images -> (N, d) visit embeddings."""
        return self.aggregate(self.stub(images))


def aggregate_visit(encoder: VisitEncoder, tokens) -> Tensor:
    """Self-attention block over the 4 conditioned image tokens, then
    attention pooling. Accepts (4, d) or (N, 4, d)."""
    tokens = ag.as_tensor(tokens)
    single = tokens.ndim == 2
    if single:
        tokens = tokens.reshape(1, *tokens.shape)
    if tokens.ndim != 3 or tokens.shape[1] != len(SLOTS):
        raise ContractError(f"a visit has exactly {len(SLOTS)} image tokens, got shape {tokens.shape}")
    if tokens.shape[2] != encoder.d_visit:
        raise DimensionError(f"token width {tokens.shape[2]} != {encoder.d_visit}")
    pooled = encoder.pooler(encoder.block(tokens))
    return pooled.reshape(encoder.d_visit) if single else pooled
