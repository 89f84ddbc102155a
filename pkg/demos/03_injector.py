# %% [markdown]
# # Toy motion injector inside a DiT block
#
# Entity prompts and their pose sequences are embedded, added entity-wise and
# handed to a gated self-attention layer sitting after the spatial attention
# of a small transformer block. With the gate at zero the layer is an exact
# identity, so plugging it in leaves the base block untouched.

# %%
import numpy as np

from trajkit.dit import LORA_TARGETS, default_grad_check_setup, init_block, injector_grad_check, toy_dit_block
from trajkit.injector import encode_entities, encode_pose_batch, fuse_entity_pose, init_injector
from trajkit.traj import arc_template, generate_template, line_template

rng = np.random.default_rng(0)
base = init_block(rng)
inj = init_injector(base.spatial, rng, lora_targets=LORA_TARGETS, lora_alpha=0.4)

poses = [generate_template(line_template(3.0), 9), generate_template(arc_template(1.5, 90.0, 1), 9)]
Z_e = encode_entities(["a man in a red hoodie", "a dog"])
Z_P = encode_pose_batch(poses, inj)
cond = fuse_entity_pose(Z_e, Z_P)
print("entity slabs", Z_e.shape, "pose rows", Z_P.shape, "fused", cond.shape)

x = rng.standard_normal((cond.shape[0], 2, 2, 8))
plain = toy_dit_block(x, None, 500.0, base)
with_inj = toy_dit_block(x, cond, 500.0, base, inj, "with_injector_after_2d")
print("identical at gate 0:", np.array_equal(plain, with_inj))

# %%
opened = inj.with_arrays({"gate": np.array(0.7)})
a = toy_dit_block(x, cond, 500.0, base, opened, "with_injector_after_2d")
b = toy_dit_block(x, cond, 500.0, base, opened, "with_injector_after_3d")
print("max change from the injector: %.3e" % np.abs(a - plain).max())
print("placement difference (after 2D vs after 3D): %.3e" % np.abs(a - b).max())

# %% [markdown]
# Every layer has a hand-written backward pass. The finite-difference check
# compares it against central differences for each trainable tensor.

# %%
params, batch = default_grad_check_setup()
errs = injector_grad_check(params, batch)
for k in ("pose_w", "pose_b", "gate", "attn.wq", "lora.spatial.wq.A", "lora.temporal.wo.B"):
    print(f"{k:22s} {errs[k]:.2e}")
print("max over all tensors: %.2e" % max(errs.values()))
