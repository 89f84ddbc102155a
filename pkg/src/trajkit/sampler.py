"""Annealed conditional sampling with classifier-free guidance.

For the first ``T_c`` respaced steps (step 1 is the noisiest) the denoiser
sees the entity-trajectory pairs with the LoRA scalar applied; after that the
loop falls back to plain text-conditioned guidance. Updates are DDIM, with
``eta`` blending in ancestral noise when nonzero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import SamplerError, ValidationError
from .pose import PoseSequence

TRAIN_STEPS = 1000
BETA_START = 1e-4
BETA_END = 0.02
DEFAULT_STEPS = 50
DEFAULT_W = 12.5
DEFAULT_TC = 25
DEFAULT_ALPHA_LORA = 0.4
NEGATIVE_MODES = ("uncond", "static_pose")
DEFAULT_LATENT_SHAPE = (2, 4, 4, 8)

Pair = tuple[str, PoseSequence]


@dataclass(frozen=True)
class SamplerSchedule:
    """Respaced VP schedule plus guidance settings.

    ``timesteps`` runs from the noisiest training index down to 0;
    ``alphas[i]`` and ``sigmas[i]`` belong to step ``i + 1``.
    """

    T: int
    respaced_steps: int
    w: float
    T_c: int
    alpha_lora: float
    eta: float
    timesteps: NDArray
    alphas: NDArray
    sigmas: NDArray

    def __post_init__(self) -> None:
        if not 0 <= self.T_c <= self.respaced_steps:
            raise ValidationError(f"T_c={self.T_c} outside [0, {self.respaced_steps}]", "T_c", "0 <= T_c <= steps")
        if not self.eta >= 0:
            raise ValidationError(f"eta must be >= 0, got {self.eta}", "eta", ">= 0")
        if not self.alpha_lora >= 0:
            raise ValidationError(f"alpha_lora must be >= 0, got {self.alpha_lora}", "alpha_lora", ">= 0")


def training_alphas_cumprod(T: int = TRAIN_STEPS, beta_start: float = BETA_START, beta_end: float = BETA_END) -> NDArray:
    betas = np.linspace(beta_start, beta_end, T)
    return np.cumprod(1.0 - betas)


def respaced_indices(T: int, steps: int) -> NDArray[np.int64]:
    """Uniform-stride training indices in ascending order, e.g. 0, 20, ..., 980."""
    if not 1 <= steps <= T:
        raise ValidationError(f"respaced steps must be in [1, {T}], got {steps}", "respaced_steps", f"1 <= steps <= {T}")
    return np.arange(0, T, T // steps)[:steps]


def make_schedule(
    respaced_steps: int = DEFAULT_STEPS,
    w: float = DEFAULT_W,
    T_c: int = DEFAULT_TC,
    alpha_lora: float = DEFAULT_ALPHA_LORA,
    eta: float = 0.0,
    T: int = TRAIN_STEPS,
) -> SamplerSchedule:
    ab = training_alphas_cumprod(T)
    idx = respaced_indices(T, respaced_steps)[::-1].copy()
    a = np.sqrt(ab[idx])
    # derive sigma from alpha^2 so the VP identity holds to rounding
    s = np.sqrt(1.0 - a * a)
    return SamplerSchedule(T, respaced_steps, float(w), int(T_c), float(alpha_lora), float(eta), idx, a, s)


def cfg_epsilon(eps_cond: NDArray, eps_uncond: NDArray, w: float) -> NDArray:
    """``(1 + w) * eps_cond - w * eps_uncond``."""
    eps_cond, eps_uncond = np.asarray(eps_cond), np.asarray(eps_uncond)
    if eps_cond.shape != eps_uncond.shape:
        raise ValidationError(f"shape mismatch {eps_cond.shape} vs {eps_uncond.shape}", "eps_uncond", "same shape as eps_cond")
    return (1.0 + w) * eps_cond - w * eps_uncond


class Denoiser(Protocol):
    """Noise predictor contract used by :func:`annealed_sample`."""

    def conditioned(self, x: NDArray, t: int, text: str, pairs: Sequence[Pair] | None, alpha_lora: float) -> NDArray: ...

    def base(self, x: NDArray, t: int, text: str) -> NDArray: ...


def static_pairs(pairs: Sequence[Pair]) -> list[Pair]:
    """Same entities, each pose sequence frozen at its first frame."""
    return [(e, p.static_copy()) for e, p in pairs]


@dataclass
class SampleResult:
    x0: NDArray
    conditioned_steps: int
    base_steps: int
    trace: list[float] = field(default_factory=list)  # sigma used at each step


def _check(eps: NDArray, x: NDArray, step: int, branch: str) -> NDArray:
    eps = np.asarray(eps)
    if eps.shape != x.shape:
        raise SamplerError(f"{branch} denoiser returned shape {eps.shape}, expected {x.shape}", step)
    if not np.all(np.isfinite(eps)):
        raise SamplerError(f"{branch} denoiser returned non-finite values", step)
    return eps


def annealed_sample(
    denoiser: Denoiser,
    schedule: SamplerSchedule,
    text: str,
    pairs: Sequence[Pair] = (),
    negative_mode: str = "uncond",
    seed: int = 0,
    shape: tuple[int, ...] = DEFAULT_LATENT_SHAPE,
    x_init: NDArray | None = None,
) -> SampleResult:
    """Run the annealed guidance loop and return the final clean estimate."""
    if negative_mode not in NEGATIVE_MODES:
        raise ValidationError(f"unknown negative mode {negative_mode!r}", "negative_mode", " | ".join(NEGATIVE_MODES))
    if len(pairs) > 3:
        raise ValidationError(f"at most 3 entity-trajectory pairs, got {len(pairs)}", "pairs", "<= 3")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape) if x_init is None else np.array(x_init, dtype=np.float64)
    neg_pairs = static_pairs(pairs) if negative_mode == "static_pose" else None
    S = schedule.respaced_steps
    n_cond = n_base = 0
    trace = []
    x0 = x
    for i in range(S):
        step = i + 1
        t = int(schedule.timesteps[i])
        a, s = schedule.alphas[i], schedule.sigmas[i]
        if step <= schedule.T_c:
            pos = _check(denoiser.conditioned(x, t, text, list(pairs), schedule.alpha_lora), x, step, "conditioned")
            if negative_mode == "static_pose":
                neg = denoiser.conditioned(x, t, "", neg_pairs, schedule.alpha_lora)
            else:
                neg = denoiser.base(x, t, "")
            neg = _check(neg, x, step, "negative")
            n_cond += 1
        else:
            pos = _check(denoiser.base(x, t, text), x, step, "base")
            neg = _check(denoiser.base(x, t, ""), x, step, "negative")
            n_base += 1
        eps = cfg_epsilon(pos, neg, schedule.w)
        x0 = (x - s * eps) / a
        trace.append(float(s))
        if step < S:
            a_n, s_n = schedule.alphas[i + 1], schedule.sigmas[i + 1]
            if schedule.eta > 0:
                c = schedule.eta * (s_n / s) * np.sqrt(max(0.0, 1.0 - (a / a_n) ** 2))
                x = a_n * x0 + np.sqrt(max(0.0, s_n**2 - c**2)) * eps + c * rng.standard_normal(shape)
            else:
                x = a_n * x0 + s_n * eps
        if not np.all(np.isfinite(x0)):
            raise SamplerError("sampler diverged", step)
    return SampleResult(x0, n_cond, n_base, trace)


def eps_from_v(x: NDArray, v: NDArray, alpha: float, sigma: float) -> NDArray:
    """Noise prediction from a velocity prediction ``v = alpha * eps - sigma * x0``."""
    return sigma * x + alpha * v


# --------------------------------------------------------------------------
# toy denoisers


@dataclass
class LinearDenoiser:
    """``eps = k * x`` with separate gains for the two branches; ignores conditions."""

    k_cond: float = 0.3
    k_base: float = 0.2
    k_uncond: float | None = None

    def conditioned(self, x, t, text, pairs, alpha_lora):
        return (self.k_cond if text else self._ku()) * x

    def base(self, x, t, text):
        return (self.k_base if text else self._ku()) * x

    def _ku(self) -> float:
        return self.k_base if self.k_uncond is None else self.k_uncond


@dataclass
class ToyDenoiser:
    """Small deterministic denoiser whose output depends on text, poses and ``alpha_lora``.

    The prediction is ``k * x`` plus a bias built from a hash of the text and
    the mean translation of each pose sequence.
    """

    k: float = 0.25
    pose_gain: float = 0.05

    def _text_bias(self, text: str, shape) -> NDArray:
        from .injector import token_embedding

        D = shape[-1]
        v = sum((token_embedding(tok, D) for tok in text.split()), np.zeros(D))
        return np.broadcast_to(0.01 * v, shape)

    def base(self, x, t, text):
        return self.k * x + self._text_bias(text, x.shape)

    def conditioned(self, x, t, text, pairs, alpha_lora):
        out = self.base(x, t, text) * (1.0 + 0.1 * alpha_lora)
        for _, seq in pairs or ():
            m = seq.translations.mean(axis=0)
            out = out + self.pose_gain * np.resize(m, x.shape[-1])
        return out


@dataclass
class RecordingDenoiser:
    """Wraps a denoiser and logs every call as ``(branch, text, pairs)``."""

    inner: Denoiser
    calls: list = field(default_factory=list)

    def conditioned(self, x, t, text, pairs, alpha_lora):
        self.calls.append(("conditioned", t, text, pairs))
        return self.inner.conditioned(x, t, text, pairs, alpha_lora)

    def base(self, x, t, text):
        self.calls.append(("base", t, text, None))
        return self.inner.base(x, t, text)

    def count(self, branch: str) -> int:
        return sum(1 for c in self.calls if c[0] == branch)


def linear_ddim_reference(schedule: SamplerSchedule, x_T: NDArray, k_cond: float, k_base: float, k_uncond: float) -> NDArray:
    """Closed-form result of the loop for :class:`LinearDenoiser` in ``uncond`` mode (eta 0).

    Each step multiplies ``x`` by a scalar, so the output is ``x_T`` times a product.
    """
    w = schedule.w
    factor = 1.0
    S = schedule.respaced_steps
    for i in range(S):
        kappa = (1 + w) * k_cond - w * k_uncond if i < schedule.T_c else (1 + w) * k_base - w * k_uncond
        a, s = schedule.alphas[i], schedule.sigmas[i]
        g0 = (1.0 - s * kappa) / a
        if i == S - 1:
            factor *= g0
        else:
            factor *= schedule.alphas[i + 1] * g0 + schedule.sigmas[i + 1] * kappa
    return factor * np.asarray(x_T)
