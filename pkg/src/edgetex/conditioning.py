"""Reference numerics for the generator's conditioning pathways.

Small dense-matrix implementations of scaled dot-product cross-attention,
its decoupled text+image form with a shared query, the additive structural
residual, and DDPM-style forward noising.  These exist for property testing
and documentation; no neural network lives here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _as2d(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-d matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class AttnWeights:
    """Projection weights: w_q/w_k/w_v for the text path, w_k_img/w_v_img
    for the image path.  All project into the same attention dimension."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_k_img: np.ndarray | None = None
    w_v_img: np.ndarray | None = None


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def attention_weights(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Row-stochastic attention matrix Softmax(q k^T / sqrt(d))."""
    d = q.shape[1]
    if k.shape[1] != d:
        raise ValueError(f"query dim {d} != key dim {k.shape[1]}")
    return _softmax_rows(q @ k.T / np.sqrt(d))


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Softmax(q k^T / sqrt(d)) v with row-wise softmax."""
    if k.shape[0] != v.shape[0]:
        raise ValueError("key and value token counts differ")
    return attention_weights(q, k) @ v


def cross_attention(z: np.ndarray, f: np.ndarray, w: AttnWeights) -> np.ndarray:
    """Single-head cross-attention of queries from z over context tokens f."""
    z = _as2d(z, "z")
    f = _as2d(f, "f")
    q = z @ w.w_q
    k = f @ w.w_k
    v = f @ w.w_v
    return attention(q, k, v)


def decoupled_cross_attention(
    z: np.ndarray,
    f_txt: np.ndarray,
    f_img: np.ndarray,
    w: AttnWeights,
    lambda_ip: float,
) -> np.ndarray:
    """Text cross-attention plus lambda_ip times an image cross-attention.

    Both branches share the query projection of z; the image branch uses
    its own key/value weights.  lambda_ip = 0 reduces exactly to the text
    branch, and the output is affine in lambda_ip.
    """
    if w.w_k_img is None or w.w_v_img is None:
        raise ValueError("decoupled attention needs image-branch weights")
    z = _as2d(z, "z")
    f_txt = _as2d(f_txt, "f_txt")
    f_img = _as2d(f_img, "f_img")
    q = z @ w.w_q
    txt = attention(q, f_txt @ w.w_k, f_txt @ w.w_v)
    img = attention(q, f_img @ w.w_k_img, f_img @ w.w_v_img)
    return txt + lambda_ip * img


def structural_residual(f_un: np.ndarray, f_cn: np.ndarray, lambda_cn: float) -> np.ndarray:
    """Add the control branch's features to the backbone's: f_un + lambda_cn * f_cn."""
    f_un = np.asarray(f_un, dtype=np.float64)
    f_cn = np.asarray(f_cn, dtype=np.float64)
    if f_un.shape != f_cn.shape:
        raise ValueError(f"shape mismatch {f_un.shape} vs {f_cn.shape}")
    return f_un + lambda_cn * f_cn


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta forward-diffusion schedule with cumulative alpha products."""

    beta: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if len(beta) != len(ab) or len(beta) == 0:
            raise ValueError("beta and alpha_bar must be equal-length and non-empty")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise ValueError("beta values must lie in (0, 1)")
        if np.any(np.diff(ab) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        expected = np.cumprod(1.0 - beta)
        if np.max(np.abs(expected - ab)) > 1e-12:
            raise ValueError("alpha_bar is not the cumulative product of (1 - beta)")

    @property
    def T(self) -> int:
        return len(self.beta)


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """DDPM-standard linear beta schedule; T = 1 keeps just the start value."""
    if T < 1:
        raise ValueError("T must be >= 1")
    beta = np.linspace(beta_start, beta_end, T)
    return NoiseSchedule(beta=beta, alpha_bar=np.cumprod(1.0 - beta))


def forward_noise(z0: np.ndarray, t: int, sched: NoiseSchedule, eps: np.ndarray) -> np.ndarray:
    """sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps.

    Variance-preserving: the two coefficients' squares sum to 1 exactly.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ValueError(f"shape mismatch {z0.shape} vs {eps.shape}")
    if not 0 <= t < sched.T:
        raise IndexError(f"step {t} out of range for schedule of length {sched.T}")
    ab = sched.alpha_bar[t]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps
