"""Minimal G-code front end for extrusion printers.

Supports the slicer subset that matters for deposition ordering: linear
moves (G0/G1), absolute/relative positioning (G90/G91), extruder mode
overrides (M82/M83), datum shifts (G92) and comments. Arcs (G2/G3) and
inch units (G20) are rejected; unrecognized commands are ignored so real
slicer output (fan, temperature, homing lines) parses cleanly.

A move becomes a :class:`ToolpathSegment`. A segment is *extruding* iff
it is a G1 with strictly positive net filament advance; retractions and
G0 moves are travel. Zero-length non-extruding moves (feed-only lines,
in-place retracts) produce no segment.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GcodeError",
    "GcodeParseError",
    "UnsupportedCommandError",
    "MachineState",
    "ToolpathSegment",
    "Toolpath",
    "ToolpathStats",
    "parse_gcode",
    "toolpath_stats",
]


class GcodeError(ValueError):
    """Base class for G-code front-end failures. Carries a 1-based line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class GcodeParseError(GcodeError):
    """Malformed numeric field or unparseable word on a recognized command."""


class UnsupportedCommandError(GcodeError):
    """Command outside the supported dialect that cannot be safely ignored."""


# One coordinate word: letter followed by a signed decimal number.
_WORD_RE = re.compile(r"([A-Za-z])\s*([-+]?(?:\d+(?:\.\d*)?|\.\d+))")
# Any letter immediately introducing a field, used to detect malformed numbers.
_LETTER_RE = re.compile(r"[A-Za-z]")


@dataclass
class MachineState:
    """Interpreter state threaded through the program.

    ``position`` is the physical head position in machine coordinates;
    G92 moves the logical datum (``offset``) instead of the head, so
    emitted segments stay connected in the physical frame.
    """

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    extruder: float = 0.0
    extruder_offset: float = 0.0
    feedrate: float | None = None
    absolute_moves: bool = True
    absolute_extruder: bool = True


@dataclass(frozen=True)
class ToolpathSegment:
    """One linear head motion. start == end only for extruding dwells."""

    start: tuple[float, float, float]
    end: tuple[float, float, float]
    extruding: bool
    feedrate: float | None = None

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)


@dataclass
class Toolpath:
    """Ordered motion segments; consecutive segments share endpoints."""

    segments: list[ToolpathSegment] = field(default_factory=list)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray] | None:
        """AABB over endpoints of extruding segments, None if nothing extrudes."""
        pts = [
            p
            for seg in self.segments
            if seg.extruding
            for p in (seg.start, seg.end)
        ]
        if not pts:
            return None
        arr = np.asarray(pts)
        return arr.min(axis=0), arr.max(axis=0)


@dataclass(frozen=True)
class ToolpathStats:
    segment_count: int
    extruding_count: int
    extruding_length: float
    bounds: tuple[np.ndarray, np.ndarray] | None


def _strip_comments(line: str, line_no: int) -> str:
    """Remove ;-to-EOL and parenthesized inline comments."""
    out = []
    depth = 0
    for ch in line:
        if ch == ";" and depth == 0:
            break
        if ch == "(":
            depth += 1
            continue
        if ch == ")":
            if depth == 0:
                raise GcodeParseError("unbalanced ')' in comment", line_no)
            depth -= 1
            continue
        if depth == 0:
            out.append(ch)
    if depth != 0:
        raise GcodeParseError("unterminated '(' comment", line_no)
    return "".join(out)


def _parse_words(body: str, line_no: int) -> dict[str, float]:
    """Split 'X1.5 Y-2 E.3' into a letter->value map, validating numbers."""
    words: dict[str, float] = {}
    pos = 0
    while pos < len(body):
        m = _LETTER_RE.search(body, pos)
        if m is None:
            break
        wm = _WORD_RE.match(body, m.start())
        if wm is None:
            raise GcodeParseError(
                f"malformed numeric field after '{body[m.start()]}'", line_no
            )
        words[wm.group(1).upper()] = float(wm.group(2))
        pos = wm.end()
    return words


def parse_gcode(text: str) -> Toolpath:
    """Interpret a G-code program into a :class:`Toolpath`.

    The machine starts at the origin in absolute positioning and absolute
    extruder mode with zero filament. Deterministic: identical input bytes
    produce an identical toolpath.
    """
    st = MachineState()
    segments: list[ToolpathSegment] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comments(raw, line_no).strip()
        if not body:
            continue
        # Command word is the first letter word on the line; N line numbers
        # are skipped. Lines without a command word are tolerated.
        m = _WORD_RE.match(body)
        if m is None:
            continue
        if m.group(1).upper() == "N":
            rest = body[m.end():].lstrip()
            m = _WORD_RE.match(rest)
            if m is None:
                continue
            body = rest
        letter = m.group(1).upper()
        number = int(float(m.group(2)))
        args = body[m.end():]

        if letter == "G":
            if number in (0, 1):
                words = _parse_words(args, line_no)
                seg = _apply_move(st, words, is_g1=(number == 1))
                if seg is not None:
                    segments.append(seg)
            elif number == 90:
                st.absolute_moves = True
                st.absolute_extruder = True
            elif number == 91:
                st.absolute_moves = False
                st.absolute_extruder = False
            elif number == 92:
                _apply_datum(st, _parse_words(args, line_no))
            elif number == 21:
                pass  # millimeters: the only supported unit
            elif number == 20:
                raise UnsupportedCommandError("G20 inch units not supported", line_no)
            elif number in (2, 3):
                raise UnsupportedCommandError(
                    f"G{number} arc moves not supported", line_no
                )
            # other G codes (homing, bed level, ...) are tolerated as no-ops
        elif letter == "M":
            if number == 82:
                st.absolute_extruder = True
            elif number == 83:
                st.absolute_extruder = False
            # other M codes (temperatures, fans, ...) are tolerated
        # all other command letters tolerated

    return Toolpath(segments)


def _apply_move(st: MachineState, words: dict[str, float], is_g1: bool) -> ToolpathSegment | None:
    if "F" in words:
        st.feedrate = words["F"]

    target = st.position.copy()
    for axis_idx, axis in enumerate("XYZ"):
        if axis in words:
            if st.absolute_moves:
                target[axis_idx] = words[axis] + st.offset[axis_idx]
            else:
                target[axis_idx] = st.position[axis_idx] + words[axis]

    de = 0.0
    if "E" in words:
        if st.absolute_extruder:
            e_target = words["E"] + st.extruder_offset
            de = e_target - st.extruder
            st.extruder = e_target
        else:
            de = words["E"]
            st.extruder += de

    extruding = is_g1 and de > 0.0
    start = tuple(st.position)
    end = tuple(target)
    st.position = target
    if start == end and not extruding:
        return None  # feed-only line or in-place retract: no motion, no deposit
    return ToolpathSegment(start=start, end=end, extruding=extruding, feedrate=st.feedrate)


def _apply_datum(st: MachineState, words: dict[str, float]) -> None:
    """G92: re-declare current logical coordinates without moving the head."""
    for axis_idx, axis in enumerate("XYZ"):
        if axis in words:
            st.offset[axis_idx] = st.position[axis_idx] - words[axis]
    if "E" in words:
        st.extruder_offset = st.extruder - words["E"]


def toolpath_stats(tp: Toolpath) -> ToolpathStats:
    """Segment counts, total extruded path length (mm) and extrusion bounds."""
    ext = [s for s in tp.segments if s.extruding]
    return ToolpathStats(
        segment_count=len(tp.segments),
        extruding_count=len(ext),
        extruding_length=float(sum(s.length for s in ext)),
        bounds=tp.bounds,
    )
