"""Compact latent-diffusion stack for the real backend.

This is not a pretrained checkpoint: it is a small, seeded, CPU-friendly
stack wired exactly like the production conditioning graph so the service
can honor every part of the protocol, including concept fine-tuning.

Wiring contract it preserves:

* decoupled cross-attention: one query projection serves a text branch and
  an image branch with its own key/value projections, combined as
  text + lambda_ip * image;
* structural conditioning: edge features from a separate control encoder
  enter the denoiser as an additive residual scaled by lambda_cn;
* concept fine-tuning trains ONLY the denoiser and the image-token
  projection network against the noise-prediction MSE, with the image
  encoder, text encoder, latent codec, and control encoder frozen;
  the reference image is augmented (flip / resize / small rotation) and
  captions are drawn from a fixed neutral-template list.
"""

from __future__ import annotations

import copy
import hashlib
import math
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch import nn

LATENT_CH = 4
LATENT_HW = 16
COND_DIM = 64
ATTN_DIM = 32
HID = 16

NEUTRAL_PROMPTS = [
    line
    for line in (Path(__file__).parent / "neutral_prompts.txt").read_text().splitlines()
    if line.strip()
]

T_STEPS = 1000


def _beta_schedule() -> torch.Tensor:
    return torch.linspace(1e-4, 0.02, T_STEPS, dtype=torch.float64)


def _freeze(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(False)
    return module


def _to_tensor_rgb(img: np.ndarray, size: int) -> torch.Tensor:
    pil = Image.fromarray(img[..., :3].astype(np.uint8), "RGB").resize(
        (size, size), Image.BILINEAR
    )
    return torch.from_numpy(np.array(pil)).float().permute(2, 0, 1) / 255.0


def _to_tensor_gray(img: np.ndarray, size: int) -> torch.Tensor:
    pil = Image.fromarray(img.astype(np.uint8), "L").resize((size, size), Image.BILINEAR)
    return torch.from_numpy(np.array(pil)).float().unsqueeze(0) / 255.0


class ImageTokenizer(nn.Module):
    """Frozen stand-in for a pretrained image encoder: 4x4 grid of 8x8
    patches of the 32x32-resized image, linearly projected to tokens."""

    def __init__(self):
        super().__init__()
        self.proj = nn.Linear(8 * 8 * 3, COND_DIM)

    def forward(self, img: torch.Tensor) -> torch.Tensor:  # (3, 32, 32)
        patches = img.unfold(1, 8, 8).unfold(2, 8, 8)  # (3, 4, 4, 8, 8)
        tokens = patches.permute(1, 2, 0, 3, 4).reshape(16, -1)
        return self.proj(tokens)  # (16, COND_DIM)


class TokenProjection(nn.Module):
    """Trainable projection network refining image tokens (the part that
    concept fine-tuning adapts)."""

    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(COND_DIM, COND_DIM), nn.GELU(), nn.Linear(COND_DIM, COND_DIM)
        )

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.net(tokens)


def encode_prompt(prompt: str) -> torch.Tensor:
    """Frozen deterministic text features: every word hashes to a fixed
    pseudo-embedding."""
    words = prompt.split()[:8] or [""]
    rows = []
    for w in words:
        seed = int.from_bytes(hashlib.sha256(w.encode()).digest()[:8], "little") % (2**31)
        g = torch.Generator().manual_seed(seed)
        rows.append(torch.randn(COND_DIM, generator=g))
    return torch.stack(rows)


class LatentCodec(nn.Module):
    """Frozen conv pair standing in for a latent autoencoder."""

    def __init__(self):
        super().__init__()
        self.enc = nn.Conv2d(3, LATENT_CH, 3, padding=1)
        self.dec = nn.Conv2d(LATENT_CH, 3, 3, padding=1)

    def encode(self, img: torch.Tensor) -> torch.Tensor:
        return self.enc(img.unsqueeze(0)).squeeze(0) * 2.0

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.dec(z.unsqueeze(0) / 2.0).squeeze(0))


class ControlEncoder(nn.Module):
    """Frozen edge-conditioning branch; its features are added to the
    denoiser's mid features scaled by lambda_cn."""

    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(1, HID, 3, padding=1), nn.SiLU(), nn.Conv2d(HID, HID, 3, padding=1)
        )

    def forward(self, edge: torch.Tensor) -> torch.Tensor:  # (1, 16, 16)
        return self.net(edge.unsqueeze(0)).squeeze(0)


class DecoupledCrossAttention(nn.Module):
    """Shared-query two-branch cross-attention (text + lambda_ip * image)."""

    def __init__(self):
        super().__init__()
        self.q = nn.Linear(HID, ATTN_DIM, bias=False)
        self.k_txt = nn.Linear(COND_DIM, ATTN_DIM, bias=False)
        self.v_txt = nn.Linear(COND_DIM, ATTN_DIM, bias=False)
        self.k_img = nn.Linear(COND_DIM, ATTN_DIM, bias=False)
        self.v_img = nn.Linear(COND_DIM, ATTN_DIM, bias=False)
        self.out = nn.Linear(ATTN_DIM, HID, bias=False)

    @staticmethod
    def _attend(q, k, v):
        w = torch.softmax(q @ k.T / math.sqrt(ATTN_DIM), dim=-1)
        return w @ v

    def forward(self, x, f_txt, f_img, lambda_ip: float):
        q = self.q(x)
        z = self._attend(q, self.k_txt(f_txt), self.v_txt(f_txt))
        if f_img is not None and lambda_ip != 0.0:
            z = z + lambda_ip * self._attend(q, self.k_img(f_img), self.v_img(f_img))
        return self.out(z)


class Denoiser(nn.Module):
    """Tiny conditional noise predictor over the 4x16x16 latent."""

    def __init__(self):
        super().__init__()
        self.t_proj = nn.Linear(32, HID)
        self.conv_in = nn.Conv2d(LATENT_CH, HID, 3, padding=1)
        self.block1 = nn.Conv2d(HID, HID, 3, padding=1)
        self.attn = DecoupledCrossAttention()
        self.mid = nn.Conv2d(HID, HID, 3, padding=1)
        self.block2 = nn.Conv2d(HID, HID, 3, padding=1)
        self.conv_out = nn.Conv2d(HID, LATENT_CH, 3, padding=1)

    @staticmethod
    def _t_embedding(t: int) -> torch.Tensor:
        half = 16
        freqs = torch.exp(-math.log(10000.0) * torch.arange(half) / (half - 1))
        ang = t * freqs
        return torch.cat([torch.sin(ang), torch.cos(ang)])

    def forward(self, z_t, t: int, f_txt, f_img, lambda_ip: float,
                f_cn=None, lambda_cn: float = 0.0):
        temb = self.t_proj(self._t_embedding(t))  # (HID,)
        h = self.conv_in(z_t.unsqueeze(0)).squeeze(0)
        h = F.silu(self.block1(h.unsqueeze(0)).squeeze(0) + temb[:, None, None])
        flat = h.reshape(HID, -1).T  # (256, HID)
        flat = flat + self.attn(flat, f_txt, f_img, lambda_ip)
        h = flat.T.reshape(HID, LATENT_HW, LATENT_HW)
        h = self.mid(h.unsqueeze(0)).squeeze(0)
        if f_cn is not None:
            h = h + lambda_cn * f_cn  # structural residual
        h = F.silu(self.block2(h.unsqueeze(0)).squeeze(0))
        return self.conv_out(h.unsqueeze(0)).squeeze(0)


class TinyLatentDiffusion:
    """The assembled stack plus sampling and concept fine-tuning."""

    MODEL_NAMES = ["tiny-ldm-denoiser", "tiny-edge-control", "tiny-image-adapter"]
    SAMPLER = "ddim"

    def __init__(self, init_seed: int = 1234, sample_steps: int = 8):
        torch.manual_seed(init_seed)
        self.codec = _freeze(LatentCodec())
        self.image_tokens = _freeze(ImageTokenizer())
        self.control = _freeze(ControlEncoder())
        self.denoiser = Denoiser()
        self.projection = TokenProjection()
        self.sample_steps = sample_steps

        beta = _beta_schedule()
        self.alpha_bar = torch.cumprod(1.0 - beta, dim=0).float()

    # conditioning -------------------------------------------------------

    def text_features(self, prompt: str) -> torch.Tensor:
        return encode_prompt(prompt)

    def image_features(self, img: np.ndarray, projection: TokenProjection) -> torch.Tensor:
        tokens = self.image_tokens(_to_tensor_rgb(img, 32))
        return projection(tokens)

    # sampling -----------------------------------------------------------

    def _noise_to(self, z0: torch.Tensor, t: int, eps: torch.Tensor) -> torch.Tensor:
        ab = self.alpha_bar[t]
        return torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps

    @torch.no_grad()
    def generate(
        self,
        prompt: str,
        reference: np.ndarray,
        edge_map: np.ndarray,
        lambda_ip: float,
        lambda_cn: float,
        seed: int,
        width: int,
        height: int,
        keep_image: np.ndarray | None = None,
        keep_mask: np.ndarray | None = None,
        denoiser: Denoiser | None = None,
        projection: TokenProjection | None = None,
    ) -> np.ndarray:
        denoiser = denoiser or self.denoiser
        projection = projection or self.projection
        g = torch.Generator().manual_seed(seed & 0x7FFFFFFF)

        f_txt = self.text_features(prompt)
        f_img = self.image_features(reference, projection)
        f_cn = self.control(_to_tensor_gray(edge_map, LATENT_HW))

        keep_z = None
        keep_m = None
        if keep_image is not None and keep_mask is not None:
            keep_z = self.codec.encode(_to_tensor_rgb(keep_image, LATENT_HW))
            keep_m = (_to_tensor_gray(keep_mask, LATENT_HW) > 0.5).float()

        z = torch.randn(LATENT_CH, LATENT_HW, LATENT_HW, generator=g)
        taus = torch.linspace(T_STEPS - 1, 0, self.sample_steps).long().tolist()
        for i, t in enumerate(taus):
            if keep_z is not None:
                eps_k = torch.randn(z.shape, generator=g)
                z = keep_m * self._noise_to(keep_z, t, eps_k) + (1.0 - keep_m) * z
            eps_hat = denoiser(z, t, f_txt, f_img, lambda_ip, f_cn, lambda_cn)
            ab = self.alpha_bar[t]
            z0_hat = (z - torch.sqrt(1.0 - ab) * eps_hat) / torch.sqrt(ab)
            if i + 1 < len(taus):
                ab_next = self.alpha_bar[taus[i + 1]]
                z = torch.sqrt(ab_next) * z0_hat + torch.sqrt(1.0 - ab_next) * eps_hat
            else:
                z = z0_hat
        if keep_z is not None:
            z = keep_m * keep_z + (1.0 - keep_m) * z

        rgb = self.codec.decode(z).clamp(0, 1)
        img8 = (rgb * 255.0).round().byte().permute(1, 2, 0).numpy()
        pil = Image.fromarray(img8, "RGB").resize((width, height), Image.BILINEAR)
        return np.asarray(pil)

    # concept fine-tuning --------------------------------------------------

    @staticmethod
    def _augment(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        pil = Image.fromarray(img[..., :3].astype(np.uint8), "RGB")
        if rng.uniform() < 0.5:
            pil = pil.transpose(Image.FLIP_LEFT_RIGHT)
        scale = float(rng.uniform(0.8, 1.2))
        w, h = pil.size
        pil = pil.resize((max(8, int(w * scale)), max(8, int(h * scale))), Image.BILINEAR)
        pil = pil.rotate(float(rng.uniform(-10.0, 10.0)), resample=Image.BILINEAR,
                         fillcolor=(255, 255, 255))
        return np.asarray(pil)

    def invert(
        self, reference: np.ndarray, steps: int, seed: int,
        lr: float = 1e-3, batch_size: int = 4,
    ) -> tuple[Denoiser, TokenProjection, list[float]]:
        """Fine-tune copies of the denoiser and projection on one image.

        Per step: sample `batch_size` augmented crops, a neutral caption,
        a timestep, and a noise draw; minimize MSE between predicted and
        true noise (image-branch weight fixed to 1 during training; the
        control branch does not participate).  The base weights are never
        touched: the tuned copies are returned with the loss trace.
        """
        torch.manual_seed(seed & 0x7FFFFFFF)
        rng = np.random.default_rng(seed & 0x7FFFFFFFFFFF)
        denoiser = copy.deepcopy(self.denoiser)
        projection = copy.deepcopy(self.projection)
        params = list(denoiser.parameters()) + list(projection.parameters())
        opt = torch.optim.Adam(params, lr=lr)

        trace: list[float] = []
        for _ in range(steps):
            opt.zero_grad()
            loss = torch.zeros(())
            for _ in range(batch_size):
                aug = self._augment(reference, rng)
                prompt = NEUTRAL_PROMPTS[int(rng.integers(len(NEUTRAL_PROMPTS)))].format("object")
                z0 = self.codec.encode(_to_tensor_rgb(aug, LATENT_HW))
                t = int(rng.integers(T_STEPS))
                eps = torch.randn(z0.shape)
                z_t = self._noise_to(z0, t, eps)
                f_txt = self.text_features(prompt)
                f_img = self.image_tokens(_to_tensor_rgb(aug, 32))
                f_img = projection(f_img)
                pred = denoiser(z_t, t, f_txt, f_img, lambda_ip=1.0)
                loss = loss + torch.mean((pred - eps) ** 2)
            loss = loss / batch_size
            loss.backward()
            opt.step()
            trace.append(float(loss.detach()))
        return denoiser, projection, trace
