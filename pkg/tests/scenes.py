"""Random scene factory shared by the serialization tests."""

import numpy as np
from scipy.spatial.transform import Rotation

from trajkit.pose import PoseSequence
from trajkit.traj import SceneComposition, SceneEntity

_WORDS = ("a", "man", "zebra", "in", "red", "naïve", 'quoted "hat"', "back\\slash", "tab\there", "雪")


def random_scene(seed: int) -> SceneComposition:
    rng = np.random.default_rng(seed)
    F = int(rng.integers(1, 30))
    fps = float(rng.choice([20.0, 24.0, 29.97, rng.uniform(1, 120)]))
    ents = []
    for i in range(int(rng.integers(1, 4))):
        R = Rotation.random(F, random_state=rng).as_matrix().reshape(F, 3, 3)
        T = np.column_stack([rng.uniform(-2.5, 2.5, (F, 2)), rng.normal(0, 10.0 ** rng.uniform(-8, 1), F)])
        if rng.random() < 0.2:
            T[rng.random(F) < 0.5] = 0.0
        kind = str(rng.choice(["human", "animal"]))
        prompt = " ".join(rng.choice(_WORDS, int(rng.integers(0, 8))))
        scale = float(rng.choice([1.0, 0.6, rng.uniform(0.01, 5)]))
        ents.append(SceneEntity(f"e{i}_{rng.integers(1000)}", prompt, scale, PoseSequence(R, T, fps), kind))
    return SceneComposition(tuple(ents), str(rng.choice(["city", "desert", "forest", "hdri", "dusk ☾"])))


def scenes_equal(a: SceneComposition, b: SceneComposition) -> bool:
    if (a.location_tag, a.stage_size, len(a.entities)) != (b.location_tag, b.stage_size, len(b.entities)):
        return False
    return all(
        (x.entity_id, x.prompt, x.scale_factor, x.kind) == (y.entity_id, y.prompt, y.scale_factor, y.kind)
        and x.trajectory == y.trajectory
        for x, y in zip(a.entities, b.entities)
    )
