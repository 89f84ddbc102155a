"""Minimal diffusion-transformer block hosting the object injector.

The block works on latent video tokens ``(F~, H~, W~, D)``. Sublayers, all
residual, run in this order: timestep-scaled RMS norm, per-frame spatial
self-attention, optional injector, RMS norm, full spatiotemporal
self-attention, optional injector, RMS norm, feed-forward. Injector
conditions are per latent frame: frame ``f`` attends to its own fused
``(N * L_max, D)`` slab.

Every op has a hand-written backward pass, checked against central finite
differences by :func:`grad_check`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import NumericError, ValidationError
from .injector import (
    InjectorParams,
    condition_tokens,
    encode_entities,
    fuse_entity_pose,
    gated_attention_bwd,
    gated_attention_fwd,
    lora_merge,
    sample_pose_rows,
)
from .nn import (
    AttnWeights,
    attention_bwd,
    attention_fwd,
    ffn_bwd,
    ffn_fwd,
    rmsnorm_bwd,
    rmsnorm_fwd,
    timestep_embedding,
)
from .pose import PoseSequence

MODES = ("no_injector", "with_injector_after_2d", "with_injector_after_3d")
ATTN_LAYERS = ("spatial", "temporal")
LORA_TARGETS = tuple(f"{layer}.{n}" for layer in ATTN_LAYERS for n in AttnWeights.NAMES)
FD_STEP = 1e-5


@dataclass(frozen=True)
class BlockParams:
    """Frozen base-block weights.

    ``time_w`` ``(3, D, D)`` and ``time_b`` ``(3, D)`` map the timestep
    embedding to the three norm scales, ``1 + time_w[i] @ emb + time_b[i]``.
    """

    spatial: AttnWeights
    temporal: AttnWeights
    w1: NDArray
    b1: NDArray
    w2: NDArray
    b2: NDArray
    time_w: NDArray
    time_b: NDArray

    @property
    def D(self) -> int:
        return self.spatial.wq.shape[0]

    def astype(self, dtype) -> BlockParams:
        c = lambda a: np.asarray(a, dtype=dtype)  # noqa: E731
        return BlockParams(
            self.spatial.astype(dtype),
            self.temporal.astype(dtype),
            c(self.w1),
            c(self.b1),
            c(self.w2),
            c(self.b2),
            c(self.time_w),
            c(self.time_b),
        )


def init_block(rng: np.random.Generator, D: int = 8, hidden: int | None = None, *, zero_bias: bool = False) -> BlockParams:
    """Random base block with ``1/sqrt(D)``-scaled weights."""
    H = hidden or 2 * D
    s = 1.0 / np.sqrt(D)
    attn = lambda: AttnWeights(*(s * rng.standard_normal((D, D)) for _ in range(4)))  # noqa: E731
    bias = (lambda n: np.zeros(n)) if zero_bias else (lambda n: 0.1 * rng.standard_normal(n))
    return BlockParams(
        spatial=attn(),
        temporal=attn(),
        w1=s * rng.standard_normal((H, D)),
        b1=bias(H),
        w2=rng.standard_normal((D, H)) / np.sqrt(H),
        b2=bias(D),
        time_w=0.1 * s * rng.standard_normal((3, D, D)),
        time_b=bias(3 * D).reshape(3, D),
    )


def _effective_attn(base: BlockParams, inj: InjectorParams | None, layer: str) -> AttnWeights:
    w = getattr(base, layer)
    if inj is None or not inj.lora:
        return w
    mats = []
    for n in AttnWeights.NAMES:
        W = getattr(w, n)
        key = f"{layer}.{n}"
        if key in inj.lora:
            A, B = inj.lora[key]
            W = lora_merge(W, A, B, inj.lora_alpha)
        mats.append(W)
    return AttnWeights(*mats)


def _norm_scales(base: BlockParams, t: float, dtype) -> NDArray:
    emb = timestep_embedding(t, base.D)
    return (1.0 + base.time_w @ emb + base.time_b).astype(dtype, copy=False)


def dit_block_fwd(
    x: NDArray,
    conditions: NDArray | None,
    t: float,
    base: BlockParams,
    inj: InjectorParams | None = None,
    mode: str = "no_injector",
):
    """Forward pass; ``conditions`` is the fused ``(F~, N, L_max, D)`` tensor."""
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}", "mode", " | ".join(MODES))
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[-1] != base.D:
        raise ValidationError(f"latent video must be (F~, H~, W~, {base.D}), got {x.shape}", "x", "(F~, H~, W~, D)")
    Fl, H, W, D = x.shape
    M = H * W
    use_inj = mode != "no_injector"
    cond = None
    if use_inj:
        if inj is None or conditions is None:
            raise ValidationError(f"mode {mode} needs injector params and conditions", "conditions", "present")
        conditions = np.asarray(conditions)
        if conditions.ndim != 4 or conditions.shape[0] != Fl or conditions.shape[-1] != D:
            raise ValidationError(
                f"conditions {conditions.shape} do not match latent video {x.shape}", "conditions", "(F~, N, L_max, D)"
            )
        cond = condition_tokens(conditions).astype(x.dtype, copy=False)
    scales = _norm_scales(base, t, x.dtype)
    sp = _effective_attn(base, inj, "spatial")
    tp = _effective_attn(base, inj, "temporal")

    h = x.reshape(Fl, M, D)
    c = {}
    n1, c["n1"] = rmsnorm_fwd(h, scales[0])
    a1, c["a1"] = attention_fwd(n1, n1, sp)
    h = h + a1
    if mode == "with_injector_after_2d":
        h, c["inj"] = gated_attention_fwd(h, cond, inj.attn, inj.gate)
    n2, c["n2"] = rmsnorm_fwd(h.reshape(1, Fl * M, D), scales[1])
    a2, c["a2"] = attention_fwd(n2, n2, tp)
    h = h + a2.reshape(Fl, M, D)
    if mode == "with_injector_after_3d":
        h, c["inj"] = gated_attention_fwd(h, cond, inj.attn, inj.gate)
    n3, c["n3"] = rmsnorm_fwd(h, scales[2])
    f, c["ffn"] = ffn_fwd(n3, base.w1, base.b1, base.w2, base.b2)
    h = h + f
    if not np.all(np.isfinite(h)):
        raise NumericError("DiT block produced non-finite values")
    cache = (c, mode, x.shape, conditions.shape if use_inj else None, inj, base)
    return h.reshape(x.shape), cache


def toy_dit_block(
    x: NDArray,
    conditions: NDArray | None,
    t: float,
    base: BlockParams,
    inj: InjectorParams | None = None,
    mode: str = "no_injector",
) -> NDArray:
    """Run one block and return the updated latent video."""
    return dit_block_fwd(x, conditions, t, base, inj, mode)[0]


def _lora_grads(dW: NDArray, A: NDArray, B: NDArray, alpha: float) -> tuple[NDArray, NDArray]:
    # W' = W + alpha A B^T  =>  dA = alpha dW B,  dB = alpha dW^T A
    return alpha * dW @ B, alpha * dW.T @ A


def dit_block_bwd(dout: NDArray, cache):
    """Returns ``(dx, dconditions, grads)``.

    ``grads`` covers the injector (``attn.*``, ``gate``, ``lora.*``) and the
    effective attention matrices of both layers (``spatial.*``, ``temporal.*``).
    """
    c, mode, xshape, cshape, inj, base = cache
    Fl, H, W, D = xshape
    M = H * W
    grads: dict[str, NDArray] = {}
    dcond = None

    dh = dout.reshape(Fl, M, D)
    dn3, _ = ffn_bwd(dh, c["ffn"])
    dh = dh + rmsnorm_bwd(dn3, c["n3"])
    if mode == "with_injector_after_3d":
        dh, dcond, g = gated_attention_bwd(dh, c["inj"])
        grads.update(g)
    dn2q, dn2kv, g = attention_bwd(dh.reshape(1, Fl * M, D), c["a2"])
    grads.update({f"temporal.{k}": v for k, v in g.items()})
    dh = dh + rmsnorm_bwd(dn2q + dn2kv, c["n2"]).reshape(Fl, M, D)
    if mode == "with_injector_after_2d":
        dh, dcond, g = gated_attention_bwd(dh, c["inj"])
        grads.update(g)
    dn1q, dn1kv, g = attention_bwd(dh, c["a1"])
    grads.update({f"spatial.{k}": v for k, v in g.items()})
    dh = dh + rmsnorm_bwd(dn1q + dn1kv, c["n1"])

    if inj is not None:
        for key, (A, B) in inj.lora.items():
            dA, dB = _lora_grads(grads[key], A, B, inj.lora_alpha)
            grads[f"lora.{key}.A"] = dA
            grads[f"lora.{key}.B"] = dB
    if dcond is not None:
        dcond = dcond.reshape(cshape)
    return dh.reshape(xshape), dcond, grads


# --------------------------------------------------------------------------
# injector training objective


@dataclass(frozen=True)
class InjectorBatch:
    """Fixed toy batch for the denoising objective ``sum((eps - block(x))**2)``."""

    x: NDArray
    eps: NDArray
    t: float
    Z_e: NDArray
    poses: tuple[PoseSequence, ...]
    base: BlockParams
    mode: str = "with_injector_after_2d"

    def astype(self, dtype) -> InjectorBatch:
        return InjectorBatch(
            np.asarray(self.x, dtype=dtype),
            np.asarray(self.eps, dtype=dtype),
            self.t,
            np.asarray(self.Z_e, dtype=dtype),
            self.poses,
            self.base.astype(dtype),
            self.mode,
        )


def make_injector_batch(
    rng: np.random.Generator,
    poses: Sequence[PoseSequence],
    prompts: Sequence[str],
    *,
    latent_hw: tuple[int, int] = (2, 2),
    t: float = 500.0,
    base: BlockParams | None = None,
    factor: int = 4,
    mode: str = "with_injector_after_2d",
) -> InjectorBatch:
    F = poses[0].num_frames
    Fl = 1 + (F - 1) // factor
    base = base or init_block(rng)
    D = base.D
    shape = (Fl, *latent_hw, D)
    return InjectorBatch(
        rng.standard_normal(shape),
        rng.standard_normal(shape),
        float(t),
        encode_entities(list(prompts), D=D),
        tuple(poses),
        base,
        mode,
    )


def injector_forward(params: InjectorParams, batch: InjectorBatch):
    rows = np.stack([sample_pose_rows(p, params.factor) for p in batch.poses], axis=1).astype(batch.x.dtype)  # (F~, N, 12)
    Z_P = rows @ params.pose_w.T + params.pose_b
    Z_Pe = fuse_entity_pose(batch.Z_e, Z_P)
    out, cache = dit_block_fwd(batch.x, Z_Pe, batch.t, batch.base, params, batch.mode)
    return out, (cache, rows)


def injector_loss(params: InjectorParams, batch: InjectorBatch) -> float:
    out, _ = injector_forward(params, batch)
    r = batch.eps - out
    return float(np.sum(r * r))


def injector_loss_and_grad(params: InjectorParams, batch: InjectorBatch) -> tuple[float, dict[str, NDArray]]:
    """Loss and gradients keyed like :meth:`InjectorParams.arrays`."""
    out, (cache, rows) = injector_forward(params, batch)
    r = batch.eps - out
    loss = float(np.sum(r * r))
    _, dZ_Pe, g = dit_block_bwd(-2.0 * r, cache)
    dZ_P = dZ_Pe.sum(axis=2)  # (F~, N, D)
    grads = {
        "pose_w": np.einsum("fnd,fnk->dk", dZ_P, rows),
        "pose_b": dZ_P.sum(axis=(0, 1)),
        "gate": g["gate"],
    }
    grads.update({f"attn.{n}": g[f"attn.{n}"] for n in AttnWeights.NAMES})
    for key in params.lora:
        grads[f"lora.{key}.A"] = g[f"lora.{key}.A"]
        grads[f"lora.{key}.B"] = g[f"lora.{key}.B"]
    return loss, grads


# --------------------------------------------------------------------------
# finite-difference checking


def finite_difference(loss: Callable[[dict[str, NDArray]], float], params: Mapping[str, NDArray], step: float = FD_STEP) -> dict[str, NDArray]:
    """Central differences of ``loss`` in float64, one coordinate at a time."""
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    out = {}
    for name, arr in base.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss(base)
            flat[i] = orig - step
            lm = loss(base)
            flat[i] = orig
            gflat[i] = (lp - lm) / (2 * step)
        out[name] = g
    return out


def relative_error(analytic: NDArray, numeric: NDArray) -> float:
    """Normwise ``|a - n| / max(|a|, |n|)``; 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - n) / denom)


def gradient_errors(
    loss_and_grad: Callable[[dict[str, NDArray]], tuple[float, dict[str, NDArray]]],
    params: Mapping[str, NDArray],
    step: float = FD_STEP,
    loss_fd: Callable[[dict[str, NDArray]], float] | None = None,
) -> dict[str, float]:
    """Per-tensor relative error between analytic and finite-difference gradients.

    ``loss_fd`` overrides the function differenced numerically, e.g. a float64
    twin of a single-precision ``loss_and_grad``.
    """
    _, analytic = loss_and_grad(dict(params))
    fd = finite_difference(loss_fd or (lambda p: loss_and_grad(p)[0]), params, step)
    return {k: relative_error(analytic[k], fd[k]) for k in params}


def grad_check(
    loss_and_grad: Callable[[dict[str, NDArray]], tuple[float, dict[str, NDArray]]],
    params: Mapping[str, NDArray],
    step: float = FD_STEP,
    loss_fd: Callable[[dict[str, NDArray]], float] | None = None,
) -> float:
    """Max relative error over all parameter tensors."""
    return max(gradient_errors(loss_and_grad, params, step, loss_fd).values())


def injector_grad_check(params: InjectorParams, batch: InjectorBatch, dtype=np.float64, step: float = FD_STEP) -> dict[str, float]:
    """Per-group errors for the injector objective; analytic side runs in ``dtype``."""
    b_an = batch.astype(dtype)
    b64 = batch.astype(np.float64)

    def lg(arrs):
        return injector_loss_and_grad(params.with_arrays({k: np.asarray(v, dtype=dtype) for k, v in arrs.items()}), b_an)

    def lf(arrs):
        return injector_loss(params.with_arrays(arrs), b64)

    start = {k: np.array(v, dtype=np.float64) for k, v in params.arrays().items()}
    return gradient_errors(lg, start, step, lf)


def default_grad_check_setup(seed: int = 0) -> tuple[InjectorParams, InjectorBatch]:
    """The reference toy problem: F~=2 (F=5), 2x2 latent grid, N=2, D=8, gate 0.7, rank-2 LoRA on all attention."""
    from .traj import line_template, generate_template, arc_template

    rng = np.random.default_rng(seed)
    base = init_block(rng)
    poses = (generate_template(line_template(3.0), 5, 20.0), generate_template(arc_template(1.5, 90.0, 1), 5, 20.0))
    batch = make_injector_batch(rng, poses, ["a person in red", "a dog"], base=base)
    D = base.D
    lora = {k: (0.3 * rng.standard_normal((D, 2)), 0.3 * rng.standard_normal((D, 2))) for k in LORA_TARGETS}
    params = InjectorParams(
        pose_w=0.2 * rng.standard_normal((D, 12)),
        pose_b=0.1 * rng.standard_normal(D),
        attn=AttnWeights(*(rng.standard_normal((D, D)) / np.sqrt(D) for _ in range(4))),
        gate=0.7,
        lora=lora,
        lora_alpha=0.4,
    )
    return params, batch
