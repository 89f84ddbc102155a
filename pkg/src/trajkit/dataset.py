"""Surround-capture dataset manifests and the ``.poseq`` scene document.

A manifest samples compositions (one to three asset/template pairs on one
location) without replacement from their full cross-product, then expands
each composition into one clip per rig camera. Scenes are not stored in the
manifest; :meth:`Manifest.scene` rebuilds them from the composition seed.

Both document types are canonical JSON: sorted keys, two-space indent,
scalar-only containers on one line, floats in shortest round-trip form
(integral values without the trailing ``.0``), newline terminated.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .camera import NUM_CAMERAS, CameraRig, Intrinsics, build_rig
from .errors import PoseValidationError, ValidationError
from .injector import L_MAX, tokenize
from .pose import COORDINATE_CONVENTION, PoseSequence
from .textio import canonical_dumps, loads as _loads
from .traj import (
    DEFAULT_FPS,
    DEFAULT_FRAMES,
    MAX_ENTITIES,
    STAGE_SIZE,
    EntitySlot,
    SceneComposition,
    SceneEntity,
    TrajectoryTemplate,
    compose_scene,
    default_template_library,
    scale_for,
)

FORMAT_VERSION = 1
POSEQ_EXT = ".poseq"
MANIFEST_EXT = ".manifest"
DEFAULT_LOCATIONS = ("city", "desert", "forest", "hdri")
KINDS = ("human", "animal")


class BudgetError(ValidationError):
    """More compositions were requested than distinct ones exist."""

    def __init__(self, budget: int, maximum: int):
        super().__init__(f"budget {budget} exceeds the {maximum} distinct compositions available", "budget", f"<= {maximum}")
        self.budget = budget
        self.maximum = maximum


@dataclass(frozen=True)
class AssetRecord:
    asset_id: str
    kind: str
    prompt_text: str
    scale_factor: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"asset kind must be one of {KINDS}, got {self.kind!r}", "kind", "human|animal")
        n = len(tokenize(self.prompt_text))
        if n > L_MAX:
            raise ValidationError(f"prompt of asset {self.asset_id} has {n} tokens", "prompt_text", f"<= {L_MAX} tokens")
        if self.scale_factor is None:
            object.__setattr__(self, "scale_factor", scale_for(self.kind))


_HUMAN_WHO = ("man", "woman", "boy", "girl", "elderly man", "elderly woman", "young man", "young woman")
_HUMAN_WEAR = ("a red hoodie", "a grey suit", "denim overalls", "a yellow raincoat", "a green tracksuit")
_ANIMALS = (
    "lion", "tiger", "zebra", "giraffe", "elephant", "bear", "wolf", "fox", "deer", "horse",
    "cow", "sheep", "goat", "pig", "dog", "cat", "rabbit", "kangaroo", "panda", "camel",
    "rhinoceros", "hippopotamus", "leopard", "cheetah", "moose", "gorilla", "chimpanzee", "ostrich", "crocodile", "penguin",
)  # fmt: skip


def default_assets() -> tuple[AssetRecord, ...]:
    """70 procedural assets: 40 people (who x clothing) and 30 animals."""
    humans = [
        AssetRecord(f"human_{i:02d}", "human", f"a {who} wearing {wear}")
        for i, (who, wear) in enumerate(itertools.product(_HUMAN_WHO, _HUMAN_WEAR))
    ]
    animals = [AssetRecord(f"animal_{i:02d}", "animal", f"a {name}") for i, name in enumerate(_ANIMALS)]
    return tuple(humans + animals)


# --------------------------------------------------------------------------
# combinatorics


def unrank_combination(rank: int, n: int, k: int) -> tuple[int, ...]:
    """The ``rank``-th k-subset of ``range(n)`` in lexicographic order."""
    if not 0 <= rank < math.comb(n, k):
        raise ValueError(f"rank {rank} out of range for C({n}, {k})")
    out = []
    x = 0
    for i in range(k, 0, -1):
        while True:
            c = math.comb(n - x - 1, i - 1)
            if rank < c:
                break
            rank -= c
            x += 1
        out.append(x)
        x += 1
    return tuple(out)


def composition_count(num_assets: int, num_templates: int, num_locations: int, max_entities: int = MAX_ENTITIES) -> int:
    """Distinct (asset set, template set, location) triples with 1..max_entities entities."""
    per_loc = sum(math.comb(num_assets, n) * math.comb(num_templates, n) for n in range(1, max_entities + 1))
    return num_locations * per_loc


def _unrank_composition(idx: int, A: int, K: int, L: int, max_entities: int):
    per_loc = composition_count(A, K, 1, max_entities)
    loc, r = divmod(idx, per_loc)
    for n in range(1, max_entities + 1):
        block = math.comb(A, n) * math.comb(K, n)
        if r < block:
            a_rank, t_rank = divmod(r, math.comb(K, n))
            return unrank_combination(a_rank, A, n), unrank_combination(t_rank, K, n), loc
        r -= block
    raise AssertionError("rank outside composition space")


# --------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class Composition:
    composition_id: int
    asset_ids: tuple[str, ...]
    template_names: tuple[str, ...]
    location_tag: str
    seed: int


@dataclass(frozen=True)
class Clip:
    clip_id: str
    composition_id: int
    camera_index: int
    location_tag: str


@dataclass(frozen=True)
class Manifest:
    assets: tuple[AssetRecord, ...]
    templates: tuple[TrajectoryTemplate, ...]
    locations: tuple[str, ...]
    compositions: tuple[Composition, ...]
    clips: tuple[Clip, ...]
    seed: int
    frame_count: int = DEFAULT_FRAMES
    fps: float = DEFAULT_FPS
    rig: CameraRig | None = None

    def __post_init__(self) -> None:
        ids = [c.clip_id for c in self.clips]
        if len(set(ids)) != len(ids):
            raise ValidationError("clip ids are not unique", "clips.clip_id", "unique")
        if len(self.clips) != NUM_CAMERAS * len(self.compositions):
            raise ValidationError(
                f"{len(self.clips)} clips for {len(self.compositions)} compositions",
                "clips",
                "compositions x 12",
            )

    @property
    def counts(self) -> dict[str, int]:
        by_n = {n: 0 for n in range(1, MAX_ENTITIES + 1)}
        for c in self.compositions:
            by_n[len(c.asset_ids)] += 1
        return {
            "compositions": len(self.compositions),
            "clips": len(self.clips),
            "cameras": NUM_CAMERAS,
            **{f"entities_{n}": k for n, k in by_n.items()},
        }

    def scene(self, composition_id: int) -> SceneComposition:
        """Rebuild the placed scene for one composition."""
        comp = self.compositions[composition_id]
        assets = {a.asset_id: a for a in self.assets}
        templates = {t.name: t for t in self.templates}
        slots = [
            EntitySlot(templates[t], assets[a].kind, assets[a].prompt_text, a)
            for a, t in zip(comp.asset_ids, comp.template_names)
        ]
        return compose_scene(slots, self.frame_count, self.fps, comp.seed, location_tag=comp.location_tag)


def enumerate_manifest(
    assets: Sequence[AssetRecord] | None = None,
    templates: Sequence[TrajectoryTemplate] | None = None,
    locations: Sequence[str] = DEFAULT_LOCATIONS,
    budget: int = 1,
    seed: int = 0,
    *,
    max_entities: int = MAX_ENTITIES,
    frame_count: int = DEFAULT_FRAMES,
    fps: float = DEFAULT_FPS,
    rig: CameraRig | None = None,
) -> Manifest:
    """Sample ``budget`` distinct compositions and expand each to 12 camera clips."""
    assets = tuple(default_assets() if assets is None else assets)
    templates = tuple(default_template_library() if templates is None else templates)
    locations = tuple(locations)
    if not (assets and templates and locations):
        raise ValidationError("assets, templates and locations must be non-empty", "inputs", "non-empty")
    if budget < 1:
        raise ValidationError(f"budget must be at least 1, got {budget}", "budget", ">= 1")
    if len({t.name for t in templates}) != len(templates):
        raise ValidationError("template names are not unique", "templates", "unique names")
    A, K, L = len(assets), len(templates), len(locations)
    total = composition_count(A, K, L, max_entities)
    if budget > total:
        raise BudgetError(budget, total)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=budget, replace=False)
    comp_seeds = rng.integers(0, 2**31 - 1, size=budget)
    comps = []
    for cid, (idx, cseed) in enumerate(zip(picks.tolist(), comp_seeds.tolist())):
        a_idx, t_idx, loc = _unrank_composition(idx, A, K, L, max_entities)
        order = np.random.default_rng(cseed).permutation(len(t_idx))
        comps.append(
            Composition(
                cid,
                tuple(assets[i].asset_id for i in a_idx),
                tuple(templates[t_idx[j]].name for j in order),
                locations[loc],
                int(cseed),
            )
        )
    clips = tuple(
        Clip(f"c{c.composition_id:06d}_cam{k:02d}", c.composition_id, k, c.location_tag)
        for c in comps
        for k in range(NUM_CAMERAS)
    )
    return Manifest(assets, templates, locations, tuple(comps), clips, seed, frame_count, fps, rig or build_rig())


def _require(doc: dict, key: str, types: tuple[type, ...], where: str = "") -> Any:
    if not isinstance(doc, dict) or key not in doc:
        raise ValidationError(f"missing field {where}{key}", where + key, "required")
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, types):
        raise ValidationError(f"field {where}{key} has type {type(v).__name__}", where + key, f"type {types[0].__name__}")
    return v


# --------------------------------------------------------------------------
# .poseq


def scene_to_dict(scene: SceneComposition) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "coordinate_convention": COORDINATE_CONVENTION,
        "frame_count": scene.num_frames,
        "fps": scene.fps,
        "location_tag": scene.location_tag,
        "stage_size": scene.stage_size,
        "entities": [
            {
                "id": e.entity_id,
                "kind": e.kind,
                "prompt": e.prompt,
                "scale": e.scale_factor,
                "poses": e.trajectory.as_rows().tolist(),
            }
            for e in scene.entities
        ],
    }


def serialize_pose_sequence(scene: SceneComposition) -> bytes:
    """Canonical ``.poseq`` bytes; each pose row is R row-major then T (12 numbers)."""
    return canonical_dumps(scene_to_dict(scene)).encode("utf-8")


def parse_pose_sequence(data: bytes | str) -> SceneComposition:
    """Parse and validate a ``.poseq`` document.

    Raises :class:`ParseError` for malformed syntax and :class:`ValidationError`
    for schema or invariant violations.
    """
    doc = _loads(data)
    if not isinstance(doc, dict):
        raise ValidationError("document root must be an object", "<root>", "object")
    version = _require(doc, "format_version", (int,))
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported format_version {version}", "format_version", f"== {FORMAT_VERSION}")
    conv = _require(doc, "coordinate_convention", (str,))
    if conv != COORDINATE_CONVENTION:
        raise ValidationError(f"unsupported coordinate convention {conv!r}", "coordinate_convention", COORDINATE_CONVENTION)
    F = _require(doc, "frame_count", (int,))
    if F < 1:
        raise ValidationError(f"frame_count {F} < 1", "frame_count", ">= 1")
    fps = float(_require(doc, "fps", (int, float)))
    if not fps > 0:
        raise ValidationError(f"fps {fps} must be positive", "fps", "> 0")
    location = _require(doc, "location_tag", (str,))
    stage = float(_require(doc, "stage_size", (int, float)))
    ents_doc = _require(doc, "entities", (list,))
    ents = []
    for i, ed in enumerate(ents_doc):
        where = f"entities[{i}]."
        eid = _require(ed, "id", (str,), where)
        kind = _require(ed, "kind", (str,), where)
        prompt = _require(ed, "prompt", (str,), where)
        scale = float(_require(ed, "scale", (int, float), where))
        rows = _require(ed, "poses", (list,), where)
        if len(rows) != F:
            raise ValidationError(
                f"{where}poses has {len(rows)} rows but frame_count is {F}", where + "poses", "len == frame_count"
            )
        for f, row in enumerate(rows):
            if not (
                isinstance(row, list)
                and len(row) == 12
                and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row)
            ):
                raise ValidationError(f"{where}poses[{f}] must be 12 numbers", f"{where}poses[{f}]", "12 numbers")
        try:
            seq = PoseSequence.from_rows(np.array(rows, dtype=np.float64).reshape(F, 12), fps)
        except PoseValidationError as exc:
            raise ValidationError(f"{where}poses: {exc}", where + "poses", "orthonormal rotation, finite values") from None
        ents.append(SceneEntity(eid, prompt, scale, seq, kind))
    return SceneComposition(tuple(ents), location, stage)


# --------------------------------------------------------------------------
# .manifest


def _template_dict(t: TrajectoryTemplate) -> dict:
    return {
        "name": t.name,
        "family": t.family,
        "duration": t.duration,
        "params": [[k, v] for k, v in t.params],
        "control_points": [list(p) for p in t.control_points],
    }


def manifest_to_dict(m: Manifest) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "coordinate_convention": COORDINATE_CONVENTION,
        "seed": m.seed,
        "frame_count": m.frame_count,
        "fps": m.fps,
        "stage_size": STAGE_SIZE,
        "locations": list(m.locations),
        "counts": m.counts,
        "rig": m.rig.to_dict() if m.rig is not None else None,
        "assets": [
            {"asset_id": a.asset_id, "kind": a.kind, "prompt": a.prompt_text, "scale": a.scale_factor} for a in m.assets
        ],
        "templates": [_template_dict(t) for t in m.templates],
        "compositions": [
            {
                "id": c.composition_id,
                "assets": list(c.asset_ids),
                "templates": list(c.template_names),
                "location": c.location_tag,
                "seed": c.seed,
            }
            for c in m.compositions
        ],
        "clips": [
            {"clip_id": c.clip_id, "composition": c.composition_id, "camera": c.camera_index, "location": c.location_tag}
            for c in m.clips
        ],
    }


def serialize_manifest(m: Manifest) -> bytes:
    return canonical_dumps(manifest_to_dict(m)).encode("utf-8")


def parse_manifest(data: bytes | str) -> Manifest:
    """Load a ``.manifest`` document. The rig is rebuilt from its look-at, radius, height and intrinsics."""
    doc = _loads(data)
    if not isinstance(doc, dict):
        raise ValidationError("document root must be an object", "<root>", "object")
    if _require(doc, "format_version", (int,)) != FORMAT_VERSION:
        raise ValidationError("unsupported format_version", "format_version", f"== {FORMAT_VERSION}")
    assets = tuple(
        AssetRecord(
            _require(a, "asset_id", (str,)), _require(a, "kind", (str,)), _require(a, "prompt", (str,)), float(a["scale"])
        )
        for a in _require(doc, "assets", (list,))
    )
    templates = tuple(
        TrajectoryTemplate(
            _require(t, "family", (str,)),
            tuple(tuple(p) for p in _require(t, "control_points", (list,))),
            float(_require(t, "duration", (int, float))),
            tuple((str(k), v) for k, v in _require(t, "params", (list,))),
            _require(t, "name", (str,)),
        )
        for t in _require(doc, "templates", (list,))
    )
    comps = tuple(
        Composition(
            _require(c, "id", (int,)),
            tuple(_require(c, "assets", (list,))),
            tuple(_require(c, "templates", (list,))),
            _require(c, "location", (str,)),
            _require(c, "seed", (int,)),
        )
        for c in _require(doc, "compositions", (list,))
    )
    clips = tuple(
        Clip(
            _require(c, "clip_id", (str,)),
            _require(c, "composition", (int,)),
            _require(c, "camera", (int,)),
            _require(c, "location", (str,)),
        )
        for c in _require(doc, "clips", (list,))
    )
    rig_doc = doc.get("rig")
    rig = None
    if rig_doc is not None:
        cams = _require(rig_doc, "cameras", (list,), "rig.")
        if not cams:
            raise ValidationError("rig has no cameras", "rig.cameras", "12 cameras")
        c0 = cams[0]
        intr = Intrinsics(
            *(float(_require(c0, k, (int, float), "rig.cameras[0].")) for k in ("fx", "fy", "cx", "cy")),
            *(_require(c0, k, (int,), "rig.cameras[0].") for k in ("width", "height")),
        )
        rig = build_rig(
            _require(rig_doc, "look_at", (list,), "rig."),
            float(_require(rig_doc, "radius", (int, float), "rig.")),
            float(_require(rig_doc, "height", (int, float), "rig.")),
            intr,
        )
    return Manifest(
        assets,
        templates,
        tuple(_require(doc, "locations", (list,))),
        comps,
        clips,
        _require(doc, "seed", (int,)),
        _require(doc, "frame_count", (int,)),
        float(_require(doc, "fps", (int, float))),
        rig,
    )
