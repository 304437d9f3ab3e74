"""Text file formats: trajectories, audio features, phoneme libraries.

Every format is a line-oriented, self-describing container: a versioned
header, one record per item, an explicit `end` marker. Floats are written
with 17 significant digits so write-then-read is bit-exact on the data
model. Readers fail with line or record context and never return partial
data; a record count that disagrees with the header is an integrity error
naming both counts.

Weight files have their own container (see models.save_weights); thin
string wrappers are re-exported here so every format has a reader and a
writer in one place.
"""

from __future__ import annotations

import numpy as np

from .core import KeypointSet, RigidPose
from .errors import FormatError, VersionError
from .lipsync import PhonemeVector
from .models import AudioFeatureSequence, ModelWeights, load_weights, save_weights
from .pipeline import FRAME_RATE, Trajectory

TRAJECTORY_VERSION = 1
AUDIO_VERSION = 1
PHONEMES_VERSION = 1


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _row(values) -> str:
    return " ".join(_fmt(v) for v in np.asarray(values, dtype=np.float64).reshape(-1))


class _Lines:
    """Tokenized line cursor with 1-based positions for error context."""

    def __init__(self, text: str, what: str):
        self.what = what
        self.items = []
        for n, line in enumerate(text.splitlines(), start=1):
            parts = line.split()
            if parts:
                self.items.append((n, parts))
        self.pos = 0

    def next(self) -> tuple:
        if self.pos >= len(self.items):
            raise FormatError(f"{self.what}: unexpected end of file (truncated)")
        item = self.items[self.pos]
        self.pos += 1
        return item

    def fail(self, lineno: int, message: str):
        raise FormatError(f"{self.what} line {lineno}: {message}")


def _check_version(lines: _Lines, tag: str, version: int) -> None:
    lineno, parts = lines.next()
    if len(parts) != 2 or parts[0] != tag:
        lines.fail(lineno, f"expected '{tag} <version>' header, got {' '.join(parts)!r}")
    if parts[1] != str(version):
        raise VersionError(f"{lines.what}: unsupported version {parts[1]!r} (supported: {version})")


def _header_int(lines: _Lines, key: str) -> int:
    lineno, parts = lines.next()
    if len(parts) != 2 or parts[0] != key:
        lines.fail(lineno, f"expected '{key} <int>', got {' '.join(parts)!r}")
    try:
        return int(parts[1])
    except ValueError:
        lines.fail(lineno, f"bad integer for {key}: {parts[1]!r}")


def _floats(lines: _Lines, lineno: int, parts, count: int, what: str) -> np.ndarray:
    if len(parts) != count:
        lines.fail(lineno, f"{what}: expected {count} values, got {len(parts)}")
    try:
        return np.array([float(v) for v in parts])
    except ValueError as exc:
        lines.fail(lineno, f"{what}: {exc}")


# -- trajectories -----------------------------------------------------------

def write_trajectory(traj: Trajectory) -> str:
    has_pose = traj.poses is not None
    out = [
        f"trajectory {TRAJECTORY_VERSION}",
        f"fps {FRAME_RATE}",
        f"n_kp {traj.n_kp}",
        f"frames {len(traj)}",
        f"has_pose {int(has_pose)}",
    ]
    for t, frame in enumerate(traj.frames):
        out.append(f"frame {t} {_row(frame.coords)}")
        if has_pose:
            p = traj.poses[t]
            out.append(f"pose {_row(p.rotation)} {_row(p.translation)} {_fmt(p.scale)}")
    out.append("end")
    return "\n".join(out) + "\n"


def read_trajectory(text: str) -> Trajectory:
    lines = _Lines(text, "trajectory")
    _check_version(lines, "trajectory", TRAJECTORY_VERSION)
    fps = _header_int(lines, "fps")
    if fps != FRAME_RATE:
        raise FormatError(f"trajectory: fps {fps} not supported (expected {FRAME_RATE})")
    n_kp = _header_int(lines, "n_kp")
    declared = _header_int(lines, "frames")
    has_pose = _header_int(lines, "has_pose")
    if has_pose not in (0, 1):
        raise FormatError(f"trajectory: has_pose must be 0 or 1, got {has_pose}")

    frames = []
    poses = []
    while True:
        lineno, parts = lines.next()
        if parts[0] == "end":
            break
        if parts[0] != "frame":
            lines.fail(lineno, f"expected 'frame' or 'end', got {parts[0]!r}")
        try:
            index = int(parts[1])
        except (IndexError, ValueError):
            lines.fail(lineno, "frame record needs an integer index")
        if index != len(frames):
            lines.fail(lineno, f"frame index {index}, expected {len(frames)}")
        coords = _floats(lines, lineno, parts[2:], n_kp * 3, f"frame {index} coords")
        frames.append(KeypointSet(coords.reshape(n_kp, 3)))
        if has_pose:
            p_lineno, p_parts = lines.next()
            if p_parts[0] != "pose":
                lines.fail(p_lineno, f"expected 'pose' record for frame {index}")
            vals = _floats(lines, p_lineno, p_parts[1:], 13, f"frame {index} pose")
            poses.append(RigidPose(vals[:9].reshape(3, 3), vals[9:12], vals[12]))
    if len(frames) != declared:
        raise FormatError(
            f"trajectory: header declares {declared} frames but {len(frames)} records found"
        )
    return Trajectory(tuple(frames), tuple(poses) if has_pose else None)


def write_identity(k: KeypointSet) -> str:
    """An identity grid is a one-frame trajectory without poses."""
    return write_trajectory(Trajectory((k,)))


def read_identity(text: str) -> KeypointSet:
    traj = read_trajectory(text)
    if len(traj) != 1:
        raise FormatError(f"identity file must hold exactly 1 frame, found {len(traj)}")
    return traj.frames[0]


# -- audio features ---------------------------------------------------------

def write_audio_features(audio: AudioFeatureSequence) -> str:
    out = [
        f"audiofeatures {AUDIO_VERSION}",
        f"frames {len(audio)}",
        f"d_audio {audio.d_audio}",
    ]
    for t in range(len(audio)):
        out.append(f"frame {t} {_fmt(audio.rms[t])} {_row(audio.embeddings[t])}")
    out.append("end")
    return "\n".join(out) + "\n"


def read_audio_features(text: str) -> AudioFeatureSequence:
    lines = _Lines(text, "audiofeatures")
    _check_version(lines, "audiofeatures", AUDIO_VERSION)
    declared = _header_int(lines, "frames")
    d_audio = _header_int(lines, "d_audio")
    emb = []
    rms = []
    while True:
        lineno, parts = lines.next()
        if parts[0] == "end":
            break
        if parts[0] != "frame":
            lines.fail(lineno, f"expected 'frame' or 'end', got {parts[0]!r}")
        try:
            index = int(parts[1])
        except (IndexError, ValueError):
            lines.fail(lineno, "frame record needs an integer index")
        if index != len(emb):
            lines.fail(lineno, f"frame index {index}, expected {len(emb)}")
        vals = _floats(lines, lineno, parts[2:], d_audio + 1, f"frame {index}")
        rms.append(vals[0])
        emb.append(vals[1:])
    if len(emb) != declared:
        raise FormatError(
            f"audiofeatures: header declares {declared} frames but {len(emb)} records found"
        )
    return AudioFeatureSequence(np.array(emb), np.array(rms))


# -- phoneme libraries ------------------------------------------------------

def write_phonemes(library: dict) -> str:
    items = list(library.items())
    lip_count = None
    for name, vec in items:
        if not isinstance(vec, PhonemeVector):
            raise FormatError(f"phoneme '{name}' is not a PhonemeVector")
        if name != vec.name:
            raise FormatError(f"phoneme key '{name}' does not match vector name '{vec.name}'")
        if any(ch.isspace() for ch in name) or not name:
            raise FormatError(f"phoneme name {name!r} must be a nonempty token without spaces")
        if lip_count is None:
            lip_count = vec.direction.size // 3
        elif vec.direction.size != lip_count * 3:
            raise FormatError(
                f"phoneme '{name}' direction length {vec.direction.size} differs from "
                f"the library lip rows ({lip_count})"
            )
    out = [
        f"phonemes {PHONEMES_VERSION}",
        f"lip_count {lip_count if lip_count is not None else 0}",
        f"count {len(items)}",
    ]
    for name, vec in items:
        out.append(f"phoneme {name} {_row(vec.direction)}")
    out.append("end")
    return "\n".join(out) + "\n"


def read_phonemes(text: str) -> dict:
    lines = _Lines(text, "phonemes")
    _check_version(lines, "phonemes", PHONEMES_VERSION)
    lip_count = _header_int(lines, "lip_count")
    declared = _header_int(lines, "count")
    library: dict[str, PhonemeVector] = {}
    while True:
        lineno, parts = lines.next()
        if parts[0] == "end":
            break
        if parts[0] != "phoneme":
            lines.fail(lineno, f"expected 'phoneme' or 'end', got {parts[0]!r}")
        if len(parts) < 2:
            lines.fail(lineno, "phoneme record needs a name")
        name = parts[1]
        if name in library:
            lines.fail(lineno, f"duplicate phoneme name '{name}'")
        vals = _floats(lines, lineno, parts[2:], lip_count * 3, f"phoneme '{name}'")
        try:
            library[name] = PhonemeVector(name, vals)
        except Exception as exc:
            lines.fail(lineno, f"phoneme '{name}': {exc}")
    if len(library) != declared:
        raise FormatError(
            f"phonemes: header declares {declared} entries but {len(library)} records found"
        )
    return library


# -- weights ----------------------------------------------------------------

def write_weights(w: ModelWeights) -> str:
    return save_weights(w).decode("utf-8")


def read_weights(text) -> ModelWeights:
    return load_weights(text)
