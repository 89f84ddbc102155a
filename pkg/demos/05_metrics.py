# %% [markdown]
# # Trajectory metrics and caption statistics
#
# TransErr aligns the estimate to the ground truth at the first frame, then
# averages the per-frame position gap in meters. RotErr averages the
# geodesic angle between orientations in degrees.

# %%
import numpy as np

from trajkit.metrics import entity_distribution, evaluate, histogram_csv
from trajkit.pose import PoseSequence, rot_z

F = 11
eye = np.repeat(np.eye(3)[None], F, axis=0)
gt = PoseSequence(eye, np.zeros((F, 3)))
drift = PoseSequence(eye, np.column_stack([0.1 * np.arange(F), np.zeros((F, 2))]) + [5.0, 5.0, 0.0])
print("drift case:", evaluate(drift, gt).trans_err, "m")

R = np.stack([np.eye(3)] * 5 + [rot_z(90)] * 5)
half = PoseSequence(R, np.zeros((10, 3)))
print("half-turned case:", evaluate(half, PoseSequence(R[:1].repeat(10, 0), np.zeros((10, 3)))).rot_err, "deg")

# %% [markdown]
# The entity counter matches whole words against a keyword map, so
# "manager" never counts as "man", and regular plurals are folded in.

# %%
captions = ["A man walks his dog", "Two dogs and a puppy", "The manager waves", "a polar bear on ice"]
hist = entity_distribution(captions)
print(histogram_csv({k: v for k, v in hist.items() if v}))
