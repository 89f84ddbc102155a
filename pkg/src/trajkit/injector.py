"""Toy 3D-motion grounded object injector.

Entity prompts become zero-padded ``(L_max, D)`` slabs through a frozen
hash embedding, pose sequences become ``(F~, D)`` rows through a linear map
plus temporal interval sampling, and the two are added entity-wise. The fused
tokens reach the video tokens through a gated self-attention layer whose
output is truncated to the video rows and scaled by ``tanh(gate)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import NumericError, ValidationError
from .nn import AttnWeights, attention_bwd, attention_fwd
from .pose import PoseSequence
from .textio import canonical_dumps, loads

D_MODEL = 8
L_MAX = 20
N_MAX = 3
DOWNSAMPLE = 4
POSE_DIM = 12


def tokenize(text: str) -> list[str]:
    return text.split()


def token_embedding(token: str, D: int = D_MODEL) -> NDArray[np.float64]:
    """Unit-norm pseudo-embedding seeded by a hash of the token string."""
    seed = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")
    v = np.random.default_rng(seed).standard_normal(D)
    return v / np.linalg.norm(v)


def encode_entities(prompts: Sequence[Sequence[str] | str], L_max: int = L_MAX, D: int = D_MODEL) -> NDArray[np.float64]:
    """Stack entity prompts into ``(N, L_max, D)``; rows past each prompt are zero."""
    if len(prompts) > N_MAX:
        raise ValidationError(f"at most {N_MAX} entities, got {len(prompts)}", "prompts", f"<= {N_MAX}")
    out = np.zeros((len(prompts), L_max, D))
    for n, p in enumerate(prompts):
        tokens = tokenize(p) if isinstance(p, str) else list(p)
        if len(tokens) > L_max:
            raise ValidationError(f"prompt {n} has {len(tokens)} tokens, limit is {L_max}", f"prompts[{n}]", f"<= {L_max} tokens")
        for l, tok in enumerate(tokens):
            out[n, l] = token_embedding(tok, D)
    return out


def latent_frames(F: int, factor: int = DOWNSAMPLE) -> int:
    """Causal temporal compression: frame 0 plus every ``factor``-th frame after it."""
    if F < 1:
        raise ValidationError(f"frame count must be >= 1, got {F}", "F", ">= 1")
    return 1 + (F - 1) // factor


def sample_pose_rows(seq: PoseSequence, factor: int = DOWNSAMPLE) -> NDArray[np.float64]:
    """Flattened 12-float rows of the frames kept by interval sampling, ``(F~, 12)``."""
    return seq.as_rows()[::factor]


def lora_merge(W: ArrayLike, A: ArrayLike, B: ArrayLike, alpha: float) -> NDArray:
    """``W + alpha * A @ B.T``."""
    W, A, B = np.asarray(W), np.asarray(A), np.asarray(B)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1] or W.shape != (A.shape[0], B.shape[0]):
        raise ValidationError(
            f"LoRA shapes do not agree: W {W.shape}, A {A.shape}, B {B.shape}", "lora", "W (d, d'), A (d, r), B (d', r)"
        )
    return W + alpha * (A @ B.T)


@dataclass(frozen=True)
class InjectorParams:
    """Trainable injector weights plus the LoRA adaptor on the base block.

    ``lora`` maps a base-matrix name such as ``"spatial.wq"`` to its ``(A, B)``
    pair; the adaptor contributes ``lora_alpha * A @ B.T``.
    """

    pose_w: NDArray
    pose_b: NDArray
    attn: AttnWeights
    gate: float = 0.0
    lora: dict[str, tuple[NDArray, NDArray]] = field(default_factory=dict)
    lora_alpha: float = 1.0
    L_max: int = L_MAX
    n_max: int = N_MAX
    factor: int = DOWNSAMPLE

    def __post_init__(self) -> None:
        D = self.pose_w.shape[0]
        if self.pose_w.shape != (D, POSE_DIM) or self.pose_b.shape != (D,):
            raise ValidationError(f"pose encoder must be ({D}, 12) + ({D},)", "pose_w", "shape (D, 12)")
        for name, m in self.attn.as_dict().items():
            if m.shape != (D, D):
                raise ValidationError(f"attn.{name} must be ({D}, {D}), got {m.shape}", f"attn.{name}", "shape (D, D)")
        for name, (A, B) in self.lora.items():
            if A.ndim != 2 or A.shape != B.shape or A.shape[1] < 1:
                raise ValidationError(f"LoRA {name}: A {A.shape} and B {B.shape} must both be (d, r>=1)", f"lora.{name}", "r >= 1")
        if not self.lora_alpha >= 0:
            raise ValidationError(f"lora_alpha must be >= 0, got {self.lora_alpha}", "lora_alpha", ">= 0")
        if not all(np.all(np.isfinite(a)) for a in self.arrays().values()):
            raise ValidationError("injector parameters must be finite", "params", "finite")

    @property
    def D(self) -> int:
        return self.pose_w.shape[0]

    @property
    def beta(self) -> float:
        return float(np.tanh(self.gate))

    def arrays(self) -> dict[str, NDArray]:
        """Trainable tensors keyed by dotted name."""
        out = {"pose_w": self.pose_w, "pose_b": self.pose_b, "gate": np.array(self.gate)}
        out.update({f"attn.{k}": v for k, v in self.attn.as_dict().items()})
        for name, (A, B) in self.lora.items():
            out[f"lora.{name}.A"] = A
            out[f"lora.{name}.B"] = B
        return out

    def with_arrays(self, arrays: dict[str, NDArray]) -> InjectorParams:
        """Copy with some trainable tensors replaced (keys as in :meth:`arrays`)."""
        cur = {**self.arrays(), **arrays}
        attn = AttnWeights(*(cur[f"attn.{n}"] for n in AttnWeights.NAMES))
        lora = {name: (cur[f"lora.{name}.A"], cur[f"lora.{name}.B"]) for name in self.lora}
        return replace(self, pose_w=cur["pose_w"], pose_b=cur["pose_b"], attn=attn, gate=float(cur["gate"]), lora=lora)

    def astype(self, dtype) -> InjectorParams:
        return self.with_arrays({k: np.asarray(v, dtype=dtype) for k, v in self.arrays().items() if k != "gate"})


def init_injector(
    base_spatial: AttnWeights,
    rng: np.random.Generator,
    *,
    lora_targets: Sequence[str] = (),
    rank: int = 2,
    lora_alpha: float = 1.0,
    pose_scale: float = 0.1,
) -> InjectorParams:
    """Fresh injector: attention copied from the base spatial layer, gate 0, LoRA ``B = 0``."""
    D = base_spatial.wq.shape[0]
    lora = {name: (rng.standard_normal((D, rank)) / np.sqrt(D), np.zeros((D, rank))) for name in lora_targets}
    return InjectorParams(
        pose_w=pose_scale * rng.standard_normal((D, POSE_DIM)),
        pose_b=np.zeros(D),
        attn=base_spatial.copy(),
        gate=0.0,
        lora=lora,
        lora_alpha=lora_alpha,
    )


def encode_poses(seq: PoseSequence, params: InjectorParams) -> NDArray[np.float64]:
    """``(F~, D)`` pose embeddings: interval-sample frames, then the linear map."""
    rows = sample_pose_rows(seq, params.factor)
    return rows @ params.pose_w.T + params.pose_b


def encode_pose_batch(seqs: Sequence[PoseSequence], params: InjectorParams) -> NDArray[np.float64]:
    """``(F~, N, D)`` embeddings for N entities sharing a frame count."""
    return np.stack([encode_poses(s, params) for s in seqs], axis=1)


def fuse_entity_pose(Z_e: ArrayLike, Z_P: ArrayLike) -> NDArray:
    """Entity-wise addition: ``out[f, n, l] = Z_e[n, l] + Z_P[f, n]``, shape ``(F~, N, L_max, D)``."""
    Z_e, Z_P = np.asarray(Z_e), np.asarray(Z_P)
    if Z_e.ndim != 3 or Z_P.ndim != 3 or Z_e.shape[0] != Z_P.shape[1] or Z_e.shape[2] != Z_P.shape[2]:
        raise ValidationError(
            f"cannot fuse entity embeddings {Z_e.shape} with pose embeddings {Z_P.shape}", "Z_P", "(F~, N, D) vs (N, L, D)"
        )
    return Z_e[None, :, :, :] + Z_P[:, :, None, :]


def condition_tokens(Z_Pe: NDArray) -> NDArray:
    """Flatten fused conditions to per-frame token lists ``(F~, N * L_max, D)``."""
    F, N, L, D = Z_Pe.shape
    return Z_Pe.reshape(F, N * L, D)


def gated_attention_fwd(x: NDArray, cond: NDArray, attn: AttnWeights, gate: float):
    """Batched gated self-attention: ``x`` ``(B, M, D)``, ``cond`` ``(B, C, D)``.

    Queries come only from the ``M`` video rows; that equals attending over the
    full concatenation and truncating the output to its first ``M`` rows.
    """
    T = np.concatenate([x, cond.astype(x.dtype, copy=False)], axis=-2)
    A, cache = attention_fwd(x, T, attn)
    beta = np.tanh(gate)
    out = x + beta * A
    if not np.all(np.isfinite(out)):
        raise NumericError("gated attention produced non-finite values")
    return out, (cache, A, gate, x.shape[-2])


def gated_attention_bwd(dout: NDArray, cache):
    """Returns ``(dx, dcond, grads)``; ``grads`` holds ``attn.*`` and ``gate``."""
    att_cache, A, gate, M = cache
    beta = np.tanh(gate)
    dA = beta * dout
    dXq, dT, wg = attention_bwd(dA, att_cache)
    dx = dout + dXq + dT[..., :M, :]
    dcond = dT[..., M:, :]
    grads = {f"attn.{k}": v for k, v in wg.items()}
    grads["gate"] = np.array((1.0 - beta**2) * np.sum(dout * A))
    return dx, dcond, grads


def gated_self_attention(x: ArrayLike, z_frame: ArrayLike, params: InjectorParams) -> NDArray:
    """One latent frame: ``x`` ``(M, D)`` video tokens, ``z_frame`` ``(N * L_max, D)`` conditions."""
    x = np.asarray(x, dtype=np.float64) if not isinstance(x, np.ndarray) else x
    z = np.asarray(z_frame, dtype=x.dtype).reshape(-1, x.shape[-1])
    # no shortcut at gate 0: x + 0 * attention is already x exactly
    out, _ = gated_attention_fwd(x[None], z[None], params.attn, params.gate)
    return out[0]


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: InjectorParams) -> bytes:
    """Named tensors with shapes as canonical JSON text."""
    tensors = {
        name: {"shape": list(np.shape(a)), "data": [float(x) for x in np.ravel(a)]} for name, a in params.arrays().items()
    }
    doc = {
        "format_version": 1,
        "dtype": str(np.asarray(params.pose_w).dtype),
        "lora_alpha": params.lora_alpha,
        "lora_targets": sorted(params.lora),
        "L_max": params.L_max,
        "n_max": params.n_max,
        "factor": params.factor,
        "tensors": tensors,
    }
    return canonical_dumps(doc).encode("utf-8")


def load_checkpoint(data: bytes | str) -> InjectorParams:
    doc = loads(data)
    try:
        dtype = np.dtype(doc["dtype"])
        arrays = {}
        for name, t in doc["tensors"].items():
            a = np.asarray(t["data"], dtype=np.float64).astype(dtype)
            shape = tuple(t["shape"])
            if a.size != int(np.prod(shape)):
                raise ValidationError(f"tensor {name}: {a.size} values for shape {shape}", f"tensors.{name}", "size == prod(shape)")
            arrays[name] = a.reshape(shape)
        attn = AttnWeights(*(arrays[f"attn.{n}"] for n in AttnWeights.NAMES))
        lora = {n: (arrays[f"lora.{n}.A"], arrays[f"lora.{n}.B"]) for n in doc["lora_targets"]}
        return InjectorParams(
            arrays["pose_w"],
            arrays["pose_b"],
            attn,
            float(arrays["gate"]),
            lora,
            float(doc["lora_alpha"]),
            int(doc["L_max"]),
            int(doc["n_max"]),
            int(doc["factor"]),
        )
    except KeyError as exc:
        raise ValidationError(f"checkpoint is missing {exc.args[0]}", str(exc.args[0]), "required") from None
