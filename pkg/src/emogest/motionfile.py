"""Gesture file I/O: the canonical text format and BVH import/export.

Canonical format: a self-describing text file with a fixed-order header
(skeleton hash, fps, joint/frame counts, sentence, attribute annotations)
followed by one frame per line of 4*J reals.  Reals are written with
``repr`` so a write/read round trip is bit-exact.

BVH: standard HIERARCHY/MOTION files.  Rotations survive a round trip to
within Euler re-encoding tolerance; root translation is ignored (the root
is pinned at the origin) and imported skeletons get identity SoS/EoS poses.
"""

from __future__ import annotations

import numpy as np

from . import quat
from .attributes import AgentAttributes
from .skeleton import JOINT_COUNT, GestureSequence, SkeletonDef

MAGIC = "EMOGEST-GESTURE v1"


class ParseError(ValueError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# canonical format

_HEADER_KEYS = (
    "skeleton_hash",
    "fps",
    "joints",
    "frames",
    "sentence",
    "task",
    "vad",
    "gender",
    "handedness",
    "emotion_term",
)


def write_canonical(seq: GestureSequence, path):
    if "\n" in seq.sentence:
        raise ValueError("sentence must be a single line")
    attrs = seq.attributes
    lines = [MAGIC]
    fields = {
        "skeleton_hash": seq.skeleton.content_hash(),
        "fps": _fmt(seq.fps),
        "joints": str(seq.skeleton.n_joints),
        "frames": str(seq.n_frames),
        "sentence": seq.sentence,
        "task": attrs.task if attrs else "-",
        "vad": " ".join(_fmt(v) for v in attrs.vad) if attrs else "-",
        "gender": attrs.gender if attrs else "-",
        "handedness": attrs.handedness if attrs else "-",
        "emotion_term": (attrs.emotion_term or "-") if attrs else "-",
    }
    for key in _HEADER_KEYS:
        lines.append(f"{key}: {fields[key]}")
    lines.append("---")
    flat = seq.rotations.reshape(seq.n_frames, -1)
    for row in flat:
        lines.append(" ".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_canonical(path, skeleton: SkeletonDef) -> GestureSequence:
    with open(path) as fh:
        raw = fh.read().split("\n")
    if not raw or raw[0] != MAGIC:
        raise ParseError(path, 1, f"expected header {MAGIC!r}")

    fields = {}
    for i, key in enumerate(_HEADER_KEYS):
        line_no = 2 + i
        if line_no > len(raw):
            raise ParseError(path, line_no, f"missing header field {key!r}")
        line = raw[line_no - 1]
        prefix = f"{key}:"
        if not line.startswith(prefix):
            raise ParseError(path, line_no, f"expected field {key!r}, got {line!r}")
        fields[key] = line[len(prefix) :].strip() if key != "sentence" else line[len(prefix) + 1 :]

    sep_no = 2 + len(_HEADER_KEYS)
    if sep_no > len(raw) or raw[sep_no - 1] != "---":
        raise ParseError(path, sep_no, "missing '---' separator")

    if fields["skeleton_hash"] != skeleton.content_hash():
        raise ParseError(
            path, 2, f"skeleton hash {fields['skeleton_hash']} does not match "
            f"{skeleton.content_hash()} ({skeleton.name})"
        )
    try:
        fps = float(fields["fps"])
        n_joints = int(fields["joints"])
        n_frames = int(fields["frames"])
    except ValueError as e:
        raise ParseError(path, 3, f"bad numeric header: {e}") from None
    if n_joints != skeleton.n_joints:
        raise ParseError(path, 4, f"joint count {n_joints} != skeleton's {skeleton.n_joints}")

    if fields["task"] == "-":
        attrs = None
    else:
        try:
            vad = tuple(float(v) for v in fields["vad"].split())
        except ValueError:
            raise ParseError(path, 8, f"bad vad triple {fields['vad']!r}") from None
        term = fields["emotion_term"]
        attrs = AgentAttributes(
            task=fields["task"],
            vad=vad,
            gender=fields["gender"],
            handedness=fields["handedness"],
            emotion_term=None if term == "-" else term,
        )

    frame_lines = raw[sep_no:]
    while frame_lines and frame_lines[-1] == "":
        frame_lines.pop()
    if len(frame_lines) != n_frames:
        raise ParseError(
            path, sep_no + len(frame_lines) + 1,
            f"header declares {n_frames} frames but file has {len(frame_lines)}",
        )
    width = 4 * n_joints
    rotations = np.empty((n_frames, n_joints, 4))
    for t, line in enumerate(frame_lines):
        parts = line.split()
        if len(parts) != width:
            raise ParseError(path, sep_no + t + 1, f"expected {width} reals, got {len(parts)}")
        try:
            rotations[t] = np.array([float(p) for p in parts]).reshape(n_joints, 4)
        except ValueError as e:
            raise ParseError(path, sep_no + t + 1, f"bad real: {e}") from None
    return GestureSequence(
        skeleton=skeleton, fps=fps, rotations=rotations, attributes=attrs,
        sentence=fields["sentence"],
    )


# ---------------------------------------------------------------------------
# BVH

_AXIS_INDEX = {"X": 0, "Y": 1, "Z": 2}


def _axis_quat(axis: str, rad: np.ndarray) -> np.ndarray:
    """Quaternions for rotations about a principal axis; rad shape (...,)."""
    half = 0.5 * np.asarray(rad)
    q = np.zeros(half.shape + (4,))
    q[..., 0] = np.cos(half)
    q[..., 1 + _AXIS_INDEX[axis]] = np.sin(half)
    return q


def export_bvh(seq: GestureSequence, path):
    sk = seq.skeleton
    kids = sk.children()
    lines = ["HIERARCHY"]

    def emit(joint: int, depth: int):
        pad = "  " * depth
        kind = "ROOT" if joint == 0 else "JOINT"
        lines.append(f"{pad}{kind} {sk.names[joint]}")
        lines.append(pad + "{")
        ox, oy, oz = sk.offsets[joint]
        lines.append(f"{pad}  OFFSET {ox:.10f} {oy:.10f} {oz:.10f}")
        if joint == 0:
            lines.append(
                f"{pad}  CHANNELS 6 Xposition Yposition Zposition "
                "Xrotation Yrotation Zrotation"
            )
        else:
            lines.append(f"{pad}  CHANNELS 3 Xrotation Yrotation Zrotation")
        if kids[joint]:
            for c in kids[joint]:
                emit(c, depth + 1)
        else:
            lines.append(f"{pad}  End Site")
            lines.append(pad + "  {")
            lines.append(f"{pad}    OFFSET 0.0000000000 0.0100000000 0.0000000000")
            lines.append(pad + "  }")
        lines.append(pad + "}")

    emit(0, 0)
    lines.append("MOTION")
    lines.append(f"Frames: {seq.n_frames}")
    lines.append(f"Frame Time: {repr(1.0 / seq.fps)}")
    eulers = np.degrees(quat.to_euler(seq.rotations))  # (T, J, 3), intrinsic XYZ
    for t in range(seq.n_frames):
        vals = ["0.0", "0.0", "0.0"]
        for j in range(sk.n_joints):
            vals.extend(f"{v:.10f}" for v in eulers[t, j])
        lines.append(" ".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_bvh(path, joint_map: dict | None = None) -> GestureSequence:
    """Read a BVH file into a GestureSequence.

    ``joint_map`` renames BVH joints to canonical names; with 23 joints and
    matching names it can be omitted.  Translation channels are parsed and
    discarded.  The imported skeleton carries identity SoS/EoS poses.
    """
    with open(path) as fh:
        raw = fh.read().split("\n")

    tokens = []  # (token, line_no)
    for i, line in enumerate(raw, start=1):
        for tok in line.split():
            tokens.append((tok, i))
    pos = 0

    def peek():
        return tokens[pos][0] if pos < len(tokens) else None

    def take(expected=None):
        nonlocal pos
        if pos >= len(tokens):
            last = tokens[-1][1] if tokens else 1
            raise ParseError(path, last, f"unexpected end of file (wanted {expected or 'token'})")
        tok, line_no = tokens[pos]
        pos += 1
        if expected is not None and tok != expected:
            raise ParseError(path, line_no, f"expected {expected!r}, got {tok!r}")
        return tok, line_no

    names, parents, offsets, channels = [], [], [], []

    def parse_joint(parent: int):
        kind, line_no = take()
        if kind not in ("ROOT", "JOINT"):
            raise ParseError(path, line_no, f"expected ROOT/JOINT, got {kind!r}")
        name, _ = take()
        index = len(names)
        names.append(name)
        parents.append(parent)
        take("{")
        take("OFFSET")
        try:
            offsets.append([float(take()[0]) for _ in range(3)])
        except ValueError:
            raise ParseError(path, tokens[pos - 1][1], "bad OFFSET value") from None
        take("CHANNELS")
        count_tok, count_line = take()
        try:
            n_chan = int(count_tok)
        except ValueError:
            raise ParseError(path, count_line, f"bad channel count {count_tok!r}") from None
        chans = []
        for _ in range(n_chan):
            chan, chan_line = take()
            if chan not in (
                "Xposition", "Yposition", "Zposition",
                "Xrotation", "Yrotation", "Zrotation",
            ):
                raise ParseError(path, chan_line, f"unknown channel {chan!r}")
            chans.append(chan)
        channels.append(chans)
        while True:
            nxt = peek()
            if nxt in ("JOINT",):
                parse_joint(index)
            elif nxt == "End":
                take("End")
                take("Site")
                take("{")
                take("OFFSET")
                for _ in range(3):
                    take()
                take("}")
            elif nxt == "}":
                take("}")
                return
            elif nxt is None:
                raise ParseError(path, tokens[-1][1], "unexpected end of hierarchy")
            else:
                raise ParseError(path, tokens[pos][1], f"unexpected token {nxt!r}")

    take("HIERARCHY")
    if peek() != "ROOT":
        raise ParseError(path, tokens[pos][1] if pos < len(tokens) else 1, "missing ROOT joint")
    parse_joint(-1)

    if peek() != "MOTION":
        last = tokens[pos][1] if pos < len(tokens) else (tokens[-1][1] if tokens else 1)
        raise ParseError(path, last, "missing MOTION section")
    take("MOTION")
    take("Frames:")
    n_frames_tok, nf_line = take()
    try:
        n_frames = int(n_frames_tok)
    except ValueError:
        raise ParseError(path, nf_line, f"bad frame count {n_frames_tok!r}") from None
    take("Frame")
    take("Time:")
    ft_tok, ft_line = take()
    try:
        frame_time = float(ft_tok)
    except ValueError:
        raise ParseError(path, ft_line, f"bad frame time {ft_tok!r}") from None
    if frame_time <= 0:
        raise ParseError(path, ft_line, f"frame time must be positive, got {frame_time}")

    if joint_map is not None:
        missing = [n for n in names if n not in joint_map]
        if missing:
            raise ParseError(path, 1, f"joint_map does not cover BVH joints {missing}")
        names = [joint_map[n] for n in names]
    if len(names) != JOINT_COUNT:
        raise ParseError(path, 1, f"expected {JOINT_COUNT} joints after mapping, got {len(names)}")

    j = len(names)
    identity = np.zeros((j, 4))
    identity[:, 0] = 1.0
    sk = SkeletonDef(
        names=names,
        parents=np.array(parents),
        offsets=np.array(offsets),
        sos_pose=identity.copy(),
        eos_pose=identity.copy(),
        name="bvh-import",
    )

    values_per_frame = sum(len(c) for c in channels)
    flat = []
    frame_line_by_value = []
    while pos < len(tokens):
        tok, line_no = take()
        try:
            flat.append(float(tok))
        except ValueError:
            raise ParseError(path, line_no, f"bad motion value {tok!r}") from None
        frame_line_by_value.append(line_no)
    if len(flat) != n_frames * values_per_frame:
        where = frame_line_by_value[-1] if frame_line_by_value else ft_line
        raise ParseError(
            path, where,
            f"MOTION declares {n_frames} frames x {values_per_frame} values, got {len(flat)}",
        )

    data = np.array(flat).reshape(n_frames, values_per_frame)
    rotations = np.zeros((n_frames, j, 4))
    col = 0
    for ji, chans in enumerate(channels):
        q = np.broadcast_to(np.array([1.0, 0.0, 0.0, 0.0]), (n_frames, 4)).copy()
        for chan in chans:
            vals = data[:, col]
            col += 1
            if chan.endswith("rotation"):
                q = quat.mul(q, _axis_quat(chan[0], np.radians(vals)))
        rotations[:, ji] = q
    return GestureSequence(skeleton=sk, fps=1.0 / frame_time, rotations=rotations)
