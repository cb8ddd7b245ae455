"""MOTChallenge text interchange and the flat key=value config format.

Ground-truth files carry 9 comma-separated fields per line
(frame, id, left, top, width, height, conf, class, visibility);
detection and result files carry 10 (the last three are -1 placeholders).
Boxes are serialized with 2 decimal places.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .geometry import BBox
from .sim import SimConfig
from .tracker import TrackerConfig

PEDESTRIAN_CLASS = 1


class MotFormatError(ValueError):
    """A text input (MOT file or config file) failed to parse."""


@dataclass(frozen=True)
class MotRecord:
    frame: int
    obj_id: int
    bb_left: float
    bb_top: float
    bb_width: float
    bb_height: float
    conf: float = 1.0
    cls: int | None = None
    visibility: float | None = None

    def __post_init__(self):
        if self.frame < 1:
            raise ValueError(f"frame must be >= 1, got {self.frame}")
        if self.bb_width < 0 or self.bb_height < 0:
            raise ValueError("box extents must be non-negative")

    def to_box(self) -> BBox:
        return BBox(self.bb_left, self.bb_top,
                    self.bb_left + self.bb_width, self.bb_top + self.bb_height)


def tlwh_to_tlbr(t: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
    l, t_, w, h = t
    return l, t_, l + w, t_ + h


def tlbr_to_tlwh(t: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = t
    return x1, y1, x2 - x1, y2 - y1


def parse_mot(path, kind: str = "result",
              pedestrian_only: bool = True) -> dict[int, list[MotRecord]]:
    """Read a MOT text file into frame-grouped records (input order kept).

    kind is one of gt / det / result; gt lines additionally carry class
    and visibility, and non-pedestrian classes are dropped unless
    pedestrian_only is off.
    """
    if kind not in ("gt", "det", "result"):
        raise ValueError(f"unknown kind {kind!r}")
    out: dict[int, list[MotRecord]] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) not in (9, 10):
            raise MotFormatError(
                f"{path}:{lineno}: expected 9 or 10 fields, got {len(parts)}")
        try:
            frame = int(float(parts[0]))
            obj_id = int(float(parts[1]))
            l, t, w, h, conf = (float(v) for v in parts[2:7])
            cls = vis = None
            if kind == "gt" and len(parts) == 9:
                cls = int(float(parts[7]))
                vis = float(parts[8])
            rec = MotRecord(frame, obj_id, l, t, w, h, conf, cls, vis)
        except ValueError as e:
            raise MotFormatError(f"{path}:{lineno}: {e}") from e
        if kind == "gt" and pedestrian_only and cls is not None \
                and cls != PEDESTRIAN_CLASS:
            continue
        out.setdefault(frame, []).append(rec)
    return out


def format_mot_line(rec: MotRecord) -> str:
    return (f"{rec.frame},{rec.obj_id},{rec.bb_left:.2f},{rec.bb_top:.2f},"
            f"{rec.bb_width:.2f},{rec.bb_height:.2f},{rec.conf:.2f},-1,-1,-1")


def format_gt_line(rec: MotRecord) -> str:
    """9-field ground-truth line with class and visibility columns."""
    cls = PEDESTRIAN_CLASS if rec.cls is None else rec.cls
    vis = 1.0 if rec.visibility is None else rec.visibility
    return (f"{rec.frame},{rec.obj_id},{rec.bb_left:.2f},{rec.bb_top:.2f},"
            f"{rec.bb_width:.2f},{rec.bb_height:.2f},{int(rec.conf)},{cls},{vis:.2f}")


def serialize_mot(frames: dict[int, list[MotRecord]]) -> str:
    lines = [format_mot_line(r) for f in sorted(frames) for r in frames[f]]
    return "\n".join(lines) + ("\n" if lines else "")


def to_frames(parsed: dict[int, list[MotRecord]]) -> dict[int, list[tuple[int, BBox]]]:
    """Drop to the (id, box) pairing the metrics take."""
    return {f: [(r.obj_id, r.to_box()) for r in recs]
            for f, recs in parsed.items()}


_BOOL = {"true": True, "1": True, "yes": True,
         "false": False, "0": False, "no": False}


def _to_bool(s: str) -> bool:
    try:
        return _BOOL[s.lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {s!r}")


_TRACKER_KEYS = {
    "det_threshold": float, "emb_match_threshold": float,
    "iou_match_threshold": float, "track_buffer": int,
    "ema_momentum": float, "gate_chi2": float,
    "use_reid": _to_bool, "use_iou": _to_bool, "use_kalman": _to_bool,
}
_SIM_KEYS = {
    "seed": int, "frames": int, "num_targets": int,
    "image_w": int, "image_h": int, "scenario": str,
    "det_dropout_prob": float, "fp_rate": float, "box_noise_std": float,
    "emb_dim": int, "emb_noise_std": float,
}


def load_config(path) -> tuple[TrackerConfig, SimConfig]:
    """Flat `key = value` file with # comments; unknown keys are an error."""
    tracker_kw: dict = {}
    sim_kw: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MotFormatError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _TRACKER_KEYS:
            caster, sink = _TRACKER_KEYS[key], tracker_kw
        elif key in _SIM_KEYS:
            caster, sink = _SIM_KEYS[key], sim_kw
        else:
            raise MotFormatError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            sink[key] = caster(value)
        except ValueError as e:
            raise MotFormatError(
                f"{path}:{lineno}: bad value for {key!r}: {e}") from e
    return TrackerConfig(**tracker_kw), SimConfig(**sim_kw)
