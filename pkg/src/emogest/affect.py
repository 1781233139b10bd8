"""Gesture-based affective features and the emotion-term -> VAD lexicon.

The 15 affective features (7 angles, 5 distance ratios, 3 area ratios) are
scale-free geometric cues of upper-body expansion/contraction, computed from
the FK positions of the root, neck, head, shoulder, elbow, and wrist joints.
Their exact geometry is data: a versioned definition table that ships as a
JSON asset and can be swapped without code changes.

The one non-relative ingredient is the vertical axis used by the torso-lean
angle, so the features are invariant to translation, uniform scaling, and
rotation about the vertical, and all features except torso lean are
invariant to arbitrary rotations.
"""

from __future__ import annotations

import difflib
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import numerics as nm
from .numerics import value
from .skeleton import SkeletonDef

N_FEATURES = 15

# shared numeric guards; the loss pipeline differentiates through these
NORM_EPS_SQ = 1e-14  # inside sqrt of every vector norm, caps the gradient
DEN_FLOOR = 1e-6  # minimum denominator distance / area
RATIO_CAP = 1e3
COS_CLIP = 1e-11  # keeps arccos away from its infinite-slope endpoints

AFFECT_FORMAT = "emogest-affect-features"


class AffectError(ValueError):
    pass


@dataclass
class AffectTable:
    """Feature definition table: joint names per angle/ratio feature."""

    vertical_axis: np.ndarray
    angles: list  # (vertex, ray_a, ray_b); rays may be "@vertical"
    distance_ratios: list  # ((a, b), (c, d))
    area_ratios: list  # ((a, b, c), (d, e, f))
    version: int = 1

    def __post_init__(self):
        self.vertical_axis = np.asarray(self.vertical_axis, dtype=np.float64)
        n = len(self.angles) + len(self.distance_ratios) + len(self.area_ratios)
        if n != N_FEATURES:
            raise AffectError(f"feature table defines {n} features, expected {N_FEATURES}")

    @classmethod
    def from_json(cls, doc: dict) -> "AffectTable":
        if doc.get("format") != AFFECT_FORMAT:
            raise AffectError(f"not an affect feature table (format={doc.get('format')!r})")
        return cls(
            vertical_axis=np.array(doc["vertical_axis"]),
            angles=[(a["vertex"], a["rays"][0], a["rays"][1]) for a in doc["angles"]],
            distance_ratios=[
                (tuple(d["numerator"]), tuple(d["denominator"])) for d in doc["distance_ratios"]
            ],
            area_ratios=[
                (tuple(d["numerator"]), tuple(d["denominator"])) for d in doc["area_ratios"]
            ],
            version=doc.get("version", 1),
        )

    @classmethod
    def load(cls, path) -> "AffectTable":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


_default_table = None


def default_affect_table() -> AffectTable:
    global _default_table
    if _default_table is None:
        text = resources.files("emogest").joinpath("assets/affect_features_v1.json").read_text()
        _default_table = AffectTable.from_json(json.loads(text))
    return _default_table


def _norm(v):
    return nm.sqrt(nm.sum_(v * v, axis=-1, keepdims=True) + NORM_EPS_SQ)


def _cross(u, v):
    ux, uy, uz = u[..., 0:1], u[..., 1:2], u[..., 2:3]
    vx, vy, vz = v[..., 0:1], v[..., 1:2], v[..., 2:3]
    return nm.concat([uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx], axis=-1)


def _triangle_area(a, b, c):
    return 0.5 * _norm(_cross(b - a, c - a))[..., 0:1]


def extract_affective_info(positions, skeleton: SkeletonDef, table: AffectTable | None = None):
    """Affective features plus a degeneracy flag.

    ``positions`` has shape (..., J, 3); the result has shape (..., 15).
    The flag reports whether any denominator clamp or ratio cap was hit
    anywhere in the batch.  Works on plain arrays and autodiff Tensors.
    """
    table = table or default_affect_table()
    j = skeleton.n_joints
    if value(positions).shape[-2:] != (j, 3):
        raise AffectError(f"positions must end in ({j}, 3), got {value(positions).shape}")

    def joint(name):
        return positions[..., skeleton.joint_index(name), :]

    degenerate = False
    feats = []

    for vertex, ray_a, ray_b in table.angles:
        pv = joint(vertex)
        u = joint(ray_a) - pv if ray_a != "@vertical" else table.vertical_axis + 0.0 * pv
        w = joint(ray_b) - pv if ray_b != "@vertical" else table.vertical_axis + 0.0 * pv
        nu, nw = _norm(u), _norm(w)
        den = nm.clip(nu * nw, DEN_FLOOR**2, None)
        degenerate |= bool((value(nu) * value(nw) < DEN_FLOOR**2).any())
        cos = nm.sum_(u * w, axis=-1, keepdims=True) / den
        feats.append(nm.arccos(nm.clip(cos, -1.0 + COS_CLIP, 1.0 - COS_CLIP)))

    for (a, b), (c, d) in table.distance_ratios:
        num = _norm(joint(a) - joint(b))
        den = _norm(joint(c) - joint(d))
        degenerate |= bool((value(den) < DEN_FLOOR).any())
        ratio = num / nm.clip(den, DEN_FLOOR, None)
        degenerate |= bool((value(ratio) > RATIO_CAP).any())
        feats.append(nm.clip(ratio, None, RATIO_CAP))

    for (a, b, c), (d, e, f) in table.area_ratios:
        num = _triangle_area(joint(a), joint(b), joint(c))
        den = _triangle_area(joint(d), joint(e), joint(f))
        degenerate |= bool((value(den) < DEN_FLOOR).any())
        ratio = num / nm.clip(den, DEN_FLOOR, None)
        degenerate |= bool((value(ratio) > RATIO_CAP).any())
        feats.append(nm.clip(ratio, None, RATIO_CAP))

    return nm.concat(feats, axis=-1), degenerate


def extract_affective(positions, skeleton: SkeletonDef, table: AffectTable | None = None):
    return extract_affective_info(positions, skeleton, table)[0]


def affective_distance(a, b) -> float:
    """Squared Euclidean distance between two feature vectors."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.sum(diff * diff))


# ---------------------------------------------------------------------------
# emotion lexicon

REQUIRED_TERMS = (
    "afraid", "amused", "angry", "ashamed", "disgusted", "joyous",
    "neutral", "proud", "relieved", "sad", "surprised",
)


class LexiconError(ValueError):
    pass


class EmotionLexicon:
    """Lowercase emotion term -> VAD point in [0, 1]^3."""

    def __init__(self, entries: dict):
        self.entries = {}
        for term, vad in entries.items():
            vad = tuple(float(v) for v in vad)
            if len(vad) != 3 or any(not 0.0 <= v <= 1.0 for v in vad):
                raise LexiconError(f"term {term!r} has VAD outside [0, 1]: {vad}")
            self.entries[term.casefold()] = vad
        missing = [t for t in REQUIRED_TERMS if t not in self.entries]
        if missing:
            raise LexiconError(f"lexicon is missing required terms: {missing}")

    def __len__(self):
        return len(self.entries)

    def terms(self):
        return sorted(self.entries)


def load_lexicon(path) -> EmotionLexicon:
    entries = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise LexiconError(f"{path}:{line_no}: expected term + 3 values, got {len(parts)} fields")
            term, *vals = parts
            try:
                entries[term] = tuple(float(v) for v in vals)
            except ValueError:
                raise LexiconError(f"{path}:{line_no}: bad VAD value in {vals}") from None
    return EmotionLexicon(entries)


_default_lexicon = None


def default_lexicon() -> EmotionLexicon:
    global _default_lexicon
    if _default_lexicon is None:
        with resources.as_file(
            resources.files("emogest").joinpath("assets/vad_lexicon_v1.tsv")
        ) as p:
            _default_lexicon = load_lexicon(p)
    return _default_lexicon


def vad_lookup(term: str, lex: EmotionLexicon) -> tuple:
    key = term.strip().casefold()
    if key in lex.entries:
        return lex.entries[key]
    near = difflib.get_close_matches(key, lex.entries.keys(), n=3, cutoff=0.4)
    hint = f"; nearest known terms: {', '.join(near)}" if near else f"; known terms: {', '.join(lex.terms())}"
    raise LexiconError(f"unknown emotion term {term!r}{hint}")
