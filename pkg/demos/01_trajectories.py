# %% [markdown]
# # Template trajectories and scene composition
#
# Every entity path starts as a named template: a handful of control points
# on a 5 x 5 m stage. A centripetal Catmull-Rom spline runs through them and
# is resampled at equal arc length. Headings follow the tangent with zero roll.

# %%
import numpy as np

from trajkit.pose import rotation_angle_between
from trajkit.traj import EntitySlot, compose_scene, default_template_library, generate_template

lib = default_template_library()
print(len(lib), "templates")
print(sorted({t.family for t in lib}))

# %% [markdown]
# Equal arc-length sampling gives equal steps between frames, even on curved paths.

# %%
circle = next(t for t in lib if t.family == "circle")
seq = generate_template(circle, 100, 20.0)
steps = np.linalg.norm(np.diff(seq.translations, axis=0), axis=1)
print(circle.name, "step mean %.4f m, spread %.2f%%" % (steps.mean(), 100 * np.ptp(steps) / steps.mean()))

# %% [markdown]
# A turn-back template ends facing the opposite way.

# %%
tb = next(t for t in lib if t.family == "turn_back_180")
seq = generate_template(tb)
print(tb.name, "heading change %.2f deg" % rotation_angle_between(seq.rotations[0], seq.rotations[-1]))

# %% [markdown]
# Composition places up to three entities. Each gets a random rotation and
# shift on the stage, retried until every pair keeps 0.5 m of clearance.

# %%
by_name = {t.name: t for t in lib}
slots = [EntitySlot(by_name["line_length3"]), EntitySlot(by_name["arc_radius1_sweep90_side1"], "animal")]
scene = compose_scene(slots, 100, 20.0, seed=7)
for e in scene.entities:
    print(e.entity_id, e.kind, "scale", e.scale_factor, "start", np.round(e.trajectory.translations[0], 3))
