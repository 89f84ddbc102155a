"""Trajectory accuracy metrics and caption entity counting."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import LengthMismatchError, ValidationError
from .pose import PoseSequence, align_first_frame, rotation_angles_between
from .textio import canonical_dumps, loads

REPORT_FIELDS = ("clip_id", "entity_id", "trans_err_m", "rot_err_deg")


@dataclass(frozen=True)
class TrajectoryError:
    trans_err: float
    rot_err: float
    per_frame_trans: tuple[float, ...] = ()
    per_frame_rot: tuple[float, ...] = ()


def _check_lengths(est: PoseSequence, gt: PoseSequence) -> None:
    if est.num_frames != gt.num_frames:
        raise LengthMismatchError(est.num_frames, gt.num_frames)


def trans_errors(est: PoseSequence, gt: PoseSequence) -> np.ndarray:
    """Per-frame translation error in meters after first-frame alignment."""
    _check_lengths(est, gt)
    aligned = align_first_frame(est, gt)
    return np.linalg.norm(aligned.translations - gt.translations, axis=1)


def trans_err(est: PoseSequence, gt: PoseSequence) -> float:
    """Mean translation error (meters); no scale normalization."""
    return float(np.mean(trans_errors(est, gt)))


def rot_err(est: PoseSequence, gt: PoseSequence) -> float:
    """Mean geodesic rotation error in degrees; no rotational alignment."""
    _check_lengths(est, gt)
    return float(np.mean(rotation_angles_between(est, gt)))


def evaluate(est: PoseSequence, gt: PoseSequence) -> TrajectoryError:
    t = trans_errors(est, gt)
    r = rotation_angles_between(est, gt)
    return TrajectoryError(float(np.mean(t)), float(np.mean(r)), tuple(map(float, t)), tuple(map(float, r)))


# --------------------------------------------------------------------------
# reports


def report_rows(pairs: Iterable[tuple[str, str, PoseSequence, PoseSequence]]) -> list[dict]:
    """``(clip_id, entity_id, est, gt)`` tuples to metric rows."""
    rows = []
    for clip_id, entity_id, est, gt in pairs:
        e = evaluate(est, gt)
        rows.append({"clip_id": clip_id, "entity_id": entity_id, "trans_err_m": e.trans_err, "rot_err_deg": e.rot_err})
    return rows


def write_report(rows: Sequence[Mapping]) -> str:
    return canonical_dumps({"rows": [dict(r) for r in rows]})


def read_report(text: str) -> list[dict]:
    doc = loads(text)
    rows = doc.get("rows") if isinstance(doc, dict) else None
    if not isinstance(rows, list) or any(not isinstance(r, dict) or set(r) != set(REPORT_FIELDS) for r in rows):
        raise ValidationError("report must be {rows: [...]} with fields " + ", ".join(REPORT_FIELDS), "rows", "metric rows")
    return rows


# --------------------------------------------------------------------------
# entity distribution

STOPWORDS = frozenset(
    """a an the and or but with without of in on at to from into onto over under near by for
    is are was were be been being walks walking runs running moves moving stands standing
    this that these those it its his her their there here while then than as very some
    left right forward back around across along through up down slowly quickly""".split()
)

_WORD = re.compile(r"[a-z]+")

DEFAULT_CLASSES: dict[str, tuple[str, ...]] = {
    "human": ("man", "men", "woman", "women", "person", "people", "boy", "girl", "child", "children", "kid", "adult"),
    "dog": ("dog", "puppy", "puppies"),
    "cat": ("cat", "kitten"),
    "horse": ("horse", "pony", "ponies"),
    "cow": ("cow", "cattle", "bull", "calf"),
    "sheep": ("sheep", "lamb"),
    "goat": ("goat",),
    "pig": ("pig", "hog"),
    "deer": ("deer", "stag"),
    "elk": ("elk", "moose"),
    "bear": ("bear",),
    "polar bear": ("polar bear",),
    "panda": ("panda",),
    "wolf": ("wolf", "wolves"),
    "fox": ("fox",),
    "lion": ("lion", "lioness"),
    "tiger": ("tiger",),
    "leopard": ("leopard",),
    "cheetah": ("cheetah",),
    "jaguar": ("jaguar",),
    "elephant": ("elephant",),
    "giraffe": ("giraffe",),
    "zebra": ("zebra",),
    "rhinoceros": ("rhinoceros", "rhino"),
    "hippopotamus": ("hippopotamus", "hippo"),
    "camel": ("camel",),
    "kangaroo": ("kangaroo",),
    "koala": ("koala",),
    "monkey": ("monkey",),
    "gorilla": ("gorilla",),
    "chimpanzee": ("chimpanzee", "chimp"),
    "rabbit": ("rabbit", "bunny", "bunnies", "hare"),
    "squirrel": ("squirrel",),
    "mouse": ("mouse", "mice", "rat"),
    "raccoon": ("raccoon",),
    "skunk": ("skunk",),
    "hedgehog": ("hedgehog",),
    "boar": ("boar",),
    "buffalo": ("buffalo", "bison"),
    "donkey": ("donkey", "mule"),
    "llama": ("llama", "alpaca"),
    "crocodile": ("crocodile", "alligator"),
    "turtle": ("turtle", "tortoise"),
    "lizard": ("lizard",),
    "snake": ("snake",),
    "frog": ("frog", "toad"),
    "chicken": ("chicken", "hen", "rooster"),
    "duck": ("duck",),
    "goose": ("goose", "geese"),
    "penguin": ("penguin",),
    "ostrich": ("ostrich",),
    "bird": ("bird",),
    "dinosaur": ("dinosaur",),
    "robot": ("robot", "android"),
    "astronaut": ("astronaut",),
    "soldier": ("soldier",),
    "knight": ("knight",),
    "firefighter": ("firefighter",),
    "police officer": ("police officer", "policeman", "policewoman"),
    "chef": ("chef",),
    "doctor": ("doctor", "nurse"),
    "athlete": ("athlete", "runner", "jogger"),
    "dancer": ("dancer",),
    "clown": ("clown",),
}


def _variants(word: str) -> set[str]:
    out = {word, word + "s", word + "es"}
    if word.endswith("y") and len(word) > 1 and word[-2] not in "aeiou":
        out.add(word[:-1] + "ies")
    return out


def _compile(classes: Mapping[str, Sequence[str]]) -> list[tuple[str, list[tuple[tuple[str, ...], set[str]]]]]:
    compiled = []
    for cls, kws in classes.items():
        pats = []
        for kw in kws:
            words = tuple(_WORD.findall(kw.lower()))
            if not words:
                raise ValidationError(f"class {cls!r} has an empty keyword", f"classes.{cls}", "non-empty keyword")
            if any(w in STOPWORDS for w in words):
                raise ValidationError(f"keyword {kw!r} contains a stopword", f"classes.{cls}", "no stopwords")
            # plural forms apply to the head (last) word
            pats.append((words[:-1], _variants(words[-1])))
        compiled.append((cls, pats))
    return compiled


def noun_candidates(caption: str) -> list[str]:
    """Lower-cased word tokens with stopwords removed."""
    return [w for w in _WORD.findall(caption.lower()) if w not in STOPWORDS]


def entity_distribution(captions: Iterable[str], keyword_classes: Mapping[str, Sequence[str]] | None = None) -> dict[str, int]:
    """Count captions mentioning each class; a caption counts at most once per class.

    Matching is case-insensitive on whole words; a keyword's last word also
    matches its regular plural (``dog`` -> ``dogs``, ``puppy`` -> ``puppies``).
    """
    classes = DEFAULT_CLASSES if keyword_classes is None else keyword_classes
    if not classes:
        raise ValidationError("keyword map is empty", "keyword_classes", "non-empty")
    compiled = _compile(classes)
    hist = {cls: 0 for cls in classes}
    for cap in captions:
        toks = noun_candidates(cap)
        for cls, pats in compiled:
            if any(_matches(toks, prefix, heads) for prefix, heads in pats):
                hist[cls] += 1
    return hist


def _matches(toks: list[str], prefix: tuple[str, ...], heads: set[str]) -> bool:
    k = len(prefix)
    for i in range(k, len(toks)):
        if toks[i] in heads and tuple(toks[i - k : i]) == prefix:
            return True
    return False


def histogram_csv(hist: Mapping[str, int]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("class", "count"))
    for cls in sorted(hist):
        w.writerow((cls, int(hist[cls])))
    return buf.getvalue()
