"""Spatio-temporal textual cognitive map (TCM) rendering.

Document grammar (one record per line)::

    #tcm v1 video_id=<id> fps=<fps> T=<0|1> M=<0|1> S=<0|1>
    [F] frame <t>, objects: [<name> (<category>), ...]
    [T] ...            temporal semantics (timestamps, elapsed time, entries/exits)
    [M] ...            motion dynamics (speed, heading, acceleration, relations)
    [S] ...            spatial geometry (position, size, direction, distance)
    [F] narrative
    [T] / [M] ...      one event sentence per line, ordered by time

Every content line depends only on its own section, so switching a section
off removes exactly its lines (the ablation is a line filter). ``[F]`` lines
are always emitted. Objects are named A, B, C, ... by ascending object id.
"""

from __future__ import annotations

import math
import re
import string
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .kinematics import TrackSet
from .relations import DirectionSample, Relation, RelationTimeline

HEADER_RE = re.compile(
    r"^#tcm v1 video_id=(?P<vid>\S+) fps=(?P<fps>\S+) T=(?P<T>[01]) M=(?P<M>[01]) S=(?P<S>[01])$")
LINE_RE = re.compile(r"^\[(?P<tag>[FTMS])\] (?P<text>.*)$")
FRAME_RE = re.compile(r"^frame (?P<t>\d+), objects: \[(?P<objs>.*)\]$")
OBJ_RE = re.compile(r"(?P<name>[A-Z]+) \((?P<cat>[^,()]+), id (?P<oid>-?\d+)\)")

STATIONARY_SPEED = 0.05      # m/s
STATIONARY_RATE_DEG = 0.5    # deg/s
CAMERA_KEY_DIST = 0.25       # m moved before the camera position is restated
CAMERA_KEY_DEG = 5.0         # deg turned before the camera pose is restated


def _angle_deg(r_a: np.ndarray, r_b: np.ndarray) -> float:
    cos = (np.trace(r_a @ r_b.T) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, cos))))


@dataclass(frozen=True)
class TcmConfig:
    include_temporal: bool = True
    include_motion: bool = True
    include_spatial: bool = True
    units: str = "metric"
    rounding: int = 2

    @classmethod
    def from_flags(cls, flags: str, rounding: int = 2) -> "TcmConfig":
        """``"TMS"``, ``"M"``, ``""`` ... -> config."""
        f = flags.upper()
        return cls("T" in f, "M" in f, "S" in f, rounding=rounding)

    @property
    def flags(self) -> str:
        return "".join(c for c, on in zip("TMS", (self.include_temporal, self.include_motion,
                                                  self.include_spatial)) if on)

    def enabled(self, tag: str) -> bool:
        return {"F": True, "T": self.include_temporal, "M": self.include_motion,
                "S": self.include_spatial}[tag]


@dataclass(frozen=True)
class TcmLine:
    tag: str
    text: str

    def render(self) -> str:
        return f"[{self.tag}] {self.text}"


@dataclass(frozen=True)
class FrameBlock:
    t: int
    time_s: float
    header: str
    lines: tuple[TcmLine, ...] = ()


@dataclass(frozen=True)
class CognitiveMap:
    video_id: str
    fps: float
    config: TcmConfig
    frames: tuple[FrameBlock, ...]
    narrative: tuple[TcmLine, ...] = ()
    names: Mapping[int, str] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# formatting helpers


def display_names(ids) -> dict[int, str]:
    letters = string.ascii_uppercase
    out = {}
    for i, oid in enumerate(sorted(ids)):
        name = ""
        n = i
        while True:
            name = letters[n % 26] + name
            n = n // 26 - 1
            if n < 0:
                break
        out[oid] = name
    return out


def fmt(x: float, nd: int) -> str:
    s = f"{x:.{nd}f}"
    # never print a negative zero
    if s.startswith("-") and float(s) == 0.0:
        s = s[1:]
    return s


def fmt_vec(v, nd: int) -> str:
    return "(" + ", ".join(fmt(float(c), nd) for c in v) + ")"


# ---------------------------------------------------------------------------
# rendering


class _Context:
    """Per-video lookups shared by frame rendering and the narrative."""

    def __init__(self, tracks: TrackSet, timeline: RelationTimeline, config: TcmConfig):
        self.tracks = tracks
        self.timeline = timeline
        self.config = config
        self.names = display_names(tracks.ids())
        self.dirs: dict[tuple[int, int], DirectionSample] = {
            (d.t, d.object_id): d for d in timeline.directions}
        self.rels = {}
        for r in timeline.relations:
            self.rels[(r.t, r.pair)] = r
        self.visible_since: dict[tuple[int, int], int] = {}
        for oid in tracks.ids():
            tr = tracks[oid]
            start = None
            for i, t in enumerate(tr.t):
                if tr.observed[i]:
                    start = int(t) if start is None else start
                    self.visible_since[(int(t), oid)] = start
                else:
                    start = None
        dt = 1.0 / tracks.fps
        self._camera_keyframes(tracks, dt, config.rounding)

    def _camera_keyframes(self, tracks: TrackSet, dt: float, nd: int) -> None:
        """Frames that get a camera S line (pose moved enough since the last
        printed one) or a camera M line (printed motion state changed)."""
        c = tracks.camera_centers
        rots = [p.world_from_camera()[0] for p in tracks.poses]
        self.camera_forward = [r[:, 2] for r in rots]
        self.camera_s: set[int] = set()
        self.camera_m: dict[int, str] = {}
        last_s = 0
        last_m = "stationary"
        for t in range(len(c)):
            if t == 0:
                self.camera_s.add(0)
                continue
            moved = np.linalg.norm(c[t] - c[last_s]) >= CAMERA_KEY_DIST
            turned = _angle_deg(rots[t], rots[last_s]) >= CAMERA_KEY_DEG
            if moved or turned:
                self.camera_s.add(t)
                last_s = t
            speed = float(np.linalg.norm(c[t] - c[t - 1])) / dt
            rate = _angle_deg(rots[t], rots[t - 1]) / dt
            parts = []
            if speed >= STATIONARY_SPEED:
                parts.append(f"moving at {fmt(speed, nd)} m/s")
            if rate >= STATIONARY_RATE_DEG:
                parts.append(f"rotating at {fmt(rate, 1)} deg/s")
            state = ", ".join(parts) or "stationary"
            if state != last_m:
                self.camera_m[t] = state
                last_m = state

    def observed_ids(self, t: int) -> list[int]:
        return [oid for oid in self.tracks.ids() if self.tracks[oid].is_observed(t)]

    def label(self, oid: int) -> str:
        return f"{self.names[oid]} ({self.tracks[oid].category})"

    def header_label(self, oid: int) -> str:
        return f"{self.names[oid]} ({self.tracks[oid].category}, id {oid})"


def _frame_lines(ctx: _Context, t: int) -> tuple[str, list[TcmLine]]:
    nd = ctx.config.rounding
    fps = ctx.tracks.fps
    ids = ctx.observed_ids(t)
    header = f"frame {t}, objects: [" + ", ".join(ctx.header_label(o) for o in ids) + "]"
    lines: list[TcmLine] = []

    # temporal
    parts = [f"{ctx.names[o]} in view for {fmt((t - ctx.visible_since[(t, o)]) / fps, nd)} s" for o in ids]
    lines.append(TcmLine("T", f"t={fmt(t / fps, nd)} s" + ("; " + ", ".join(parts) if parts else "")))

    # spatial
    for o in ids:
        s = ctx.tracks[o].at(t)
        d = ctx.dirs.get((t, o))
        size = ctx.tracks[o].bbox_size[ctx.tracks[o].index(t)]
        text = f"object {ctx.label(o)}: position {fmt_vec(s.position, nd)} m"
        if d is not None:
            text += (f", {d.label}, {fmt(d.distance_m, nd)} m from camera, size "
                     f"{fmt(size[0], nd)} x {fmt(size[1], nd)} x {fmt(size[2], nd)} m, "
                     f"azimuth {fmt(d.azimuth_deg, 1)} deg, elevation {fmt(d.elevation_deg, 1)} deg")
        lines.append(TcmLine("S", text))
    if t in ctx.camera_s:
        lines.append(TcmLine("S", f"camera: position {fmt_vec(ctx.tracks.camera_centers[t], nd)} m, "
                                  f"facing {fmt_vec(ctx.camera_forward[t], nd)}"))

    # motion
    for o in ids:
        s = ctx.tracks[o].at(t)
        if s.velocity is None:
            text = f"object {ctx.names[o]}: motion unknown (first observation)"
        else:
            speed = float(np.linalg.norm(s.velocity))
            if speed < STATIONARY_SPEED:
                text = f"object {ctx.names[o]}: stationary ({fmt(speed, nd)} m/s)"
            else:
                heading = s.velocity / speed
                text = f"object {ctx.names[o]}: moving at {fmt(speed, nd)} m/s, heading {fmt_vec(heading, nd)}"
                if s.acceleration is not None:
                    text += f", acceleration {fmt(float(np.linalg.norm(s.acceleration)), nd)} m/s^2"
        rels = []
        for other in ids:
            if other <= o:
                continue
            r = ctx.rels.get((t, (o, other)))
            if r is not None:
                rels.append(f"vs {ctx.names[other]}: {r.relation.value}, closing speed "
                            f"{fmt(r.closing_speed, nd)} m/s, distance {fmt(r.distance_m, nd)} m")
        if rels:
            text += "; " + "; ".join(rels)
        lines.append(TcmLine("M", text))
    if t in ctx.camera_m:
        lines.append(TcmLine("M", f"camera: {ctx.camera_m[t]}"))
    return header, lines


def render_frame(t: int, tracks: TrackSet, timeline: RelationTimeline, config: TcmConfig) -> FrameBlock:
    return _render_frame(_Context(tracks, timeline, config), t)


def _render_frame(ctx: _Context, t: int) -> FrameBlock:
    header, lines = _frame_lines(ctx, t)
    kept = tuple(ln for ln in lines if ctx.config.enabled(ln.tag))
    return FrameBlock(t, t / ctx.tracks.fps, header, kept)


_PHRASES = {
    Relation.APPROACHING: "{a} approaches {b}",
    Relation.RECEDING: "{a} recedes from {b}",
    Relation.PARALLEL: "{a} moves parallel to {b}",
}


def _narrative_events(ctx: _Context) -> list[tuple[float, int, str, TcmLine]]:
    nd = ctx.config.rounding
    fps = ctx.tracks.fps
    last_frame = ctx.tracks.n_frames - 1
    events = []
    for oid in ctx.tracks.ids():
        tr = ctx.tracks[oid]
        name = ctx.names[oid]
        obs_t = [int(t) for t, o in zip(tr.t, tr.observed) if o]
        first, last = obs_t[0], obs_t[-1]
        gaps = [int(t) for t, o in zip(tr.t, tr.observed) if not o]
        if first == 0 and last == last_frame and not gaps:
            events.append((0.0, 0, name, TcmLine("T", f"{name} present throughout")))
            continue
        if first > 0:
            events.append((first / fps, 0, name, TcmLine("T", f"{name} enters the scene at {fmt(first / fps, nd)} s")))
        prev_obs = True
        for i, t in enumerate(tr.t):
            o = bool(tr.observed[i])
            if prev_obs and not o:
                events.append((t / fps, 0, name, TcmLine("T", f"{name} disappears at {fmt(t / fps, nd)} s")))
            elif not prev_obs and o:
                events.append((t / fps, 0, name, TcmLine("T", f"{name} reappears at {fmt(t / fps, nd)} s")))
            prev_obs = o
        if last < last_frame:
            t_gone = last + 1
            events.append((t_gone / fps, 0, name, TcmLine("T", f"{name} leaves the scene at {fmt(t_gone / fps, nd)} s")))

    for pair, series in sorted(ctx.timeline.debounced.items()):
        runs: list[list] = []
        for t, lab in series:
            if runs and runs[-1][0] == lab:
                runs[-1][2] = t
            else:
                runs.append([lab, t, t])
        for i, (lab, t0, t1) in enumerate(runs):
            a, b = pair
            speed_a = _mean_speed(ctx, a, t0, t1)
            speed_b = _mean_speed(ctx, b, t0, t1)
            if speed_b > speed_a:
                a, b = b, a
            na, nb = ctx.names[a], ctx.names[b]
            if (lab is Relation.PARALLEL and 0 < i < len(runs) - 1
                    and runs[i - 1][0] is Relation.APPROACHING and runs[i + 1][0] is Relation.RECEDING):
                phrase = f"{na} passes {nb}"
            else:
                phrase = _PHRASES[lab].format(a=na, b=nb)
            text = f"{phrase} (t≈{fmt(t0 / fps, nd)}–{fmt(t1 / fps, nd)} s)"
            events.append((t0 / fps, 1, f"{ctx.names[pair[0]]}{ctx.names[pair[1]]}", TcmLine("M", text)))
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    return events


def _mean_speed(ctx: _Context, oid: int, t0: int, t1: int) -> float:
    tr = ctx.tracks[oid]
    vals = [tr.speed(t) for t in range(t0, t1 + 1)]
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else 0.0


def aggregate_narrative(timeline: RelationTimeline, tracks: TrackSet, config: TcmConfig) -> tuple[TcmLine, ...]:
    ctx = _Context(tracks, timeline, config)
    return tuple(e[3] for e in _narrative_events(ctx) if config.enabled(e[3].tag))


def build_map(tracks: TrackSet, timeline: RelationTimeline, config: TcmConfig | None = None) -> CognitiveMap:
    config = config or TcmConfig()
    ctx = _Context(tracks, timeline, config)
    frames = tuple(_render_frame(ctx, t) for t in range(tracks.n_frames))
    narrative = tuple(e[3] for e in _narrative_events(ctx) if config.enabled(e[3].tag))
    return CognitiveMap(tracks.video_id, tracks.fps, config, frames, narrative, ctx.names)


# ---------------------------------------------------------------------------
# serialization


def _fps_str(fps: float) -> str:
    return f"{fps:g}"


def serialize_tcm(cmap: CognitiveMap) -> str:
    c = cmap.config
    out = [f"#tcm v1 video_id={cmap.video_id} fps={_fps_str(cmap.fps)} "
           f"T={int(c.include_temporal)} M={int(c.include_motion)} S={int(c.include_spatial)}"]
    for block in cmap.frames:
        out.append(f"[F] {block.header}")
        out.extend(ln.render() for ln in block.lines)
    out.append("[F] narrative")
    out.extend(ln.render() for ln in cmap.narrative)
    return "\n".join(out) + "\n"


def parse_tcm(text: str, rounding: int = 2) -> CognitiveMap:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty TCM document")
    m = HEADER_RE.match(lines[0])
    if not m:
        raise ValueError(f"bad TCM header: {lines[0]!r}")
    fps = float(m["fps"])
    config = TcmConfig(m["T"] == "1", m["M"] == "1", m["S"] == "1", rounding=rounding)
    frames: list[FrameBlock] = []
    narrative: list[TcmLine] = []
    current: list | None = None
    in_narrative = False
    names: dict[int, str] = {}
    for raw in lines[1:]:
        lm = LINE_RE.match(raw)
        if not lm:
            raise ValueError(f"bad TCM line: {raw!r}")
        tag, body = lm["tag"], lm["text"]
        if tag == "F":
            if current is not None:
                frames.append(FrameBlock(current[0], current[0] / fps, current[1], tuple(current[2])))
                current = None
            if body == "narrative":
                in_narrative = True
                continue
            fm = FRAME_RE.match(body)
            if not fm or in_narrative:
                raise ValueError(f"bad frame header: {raw!r}")
            current = [int(fm["t"]), body, []]
            continue
        line = TcmLine(tag, body)
        if in_narrative:
            narrative.append(line)
        elif current is None:
            raise ValueError(f"content line outside a frame block: {raw!r}")
        else:
            current[2].append(line)
    if current is not None:
        frames.append(FrameBlock(current[0], current[0] / fps, current[1], tuple(current[2])))
    for block in frames:
        for nm in OBJ_RE.finditer(FRAME_RE.match(block.header)["objs"]):
            names.setdefault(int(nm["oid"]), nm["name"])
    return CognitiveMap(m["vid"], fps, config, tuple(frames), tuple(narrative), names)


def filter_sections(document: str, flags: str) -> str:
    """Drop the T/M/S lines not named in ``flags`` from a full document."""
    keep = set(flags.upper()) | {"F"}
    lines = document.splitlines()
    hm = HEADER_RE.match(lines[0])
    if not hm:
        raise ValueError("bad TCM header")
    head = (f"#tcm v1 video_id={hm['vid']} fps={hm['fps']} T={int('T' in keep)} "
            f"M={int('M' in keep)} S={int('S' in keep)}")
    body = [ln for ln in lines[1:] if LINE_RE.match(ln)["tag"] in keep]
    return "\n".join([head] + body) + "\n"
