"""Frame-by-frame association of detections to tracklets.

Two-stage cascade per frame: appearance first (cosine distance between
smoothed track embeddings and detection embeddings, motion-gated), then
box overlap (1 - IoU) for whatever is left.  Lost tracks may only be
recovered through appearance; the overlap stage sees active tracks only.
Each ingredient (re-ID, IoU, Kalman) can be toggled off to measure its
contribution.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .assignment import hungarian
from .decoding import Detection
from .geometry import BBox, iou
from .kalman import GATE_CHI2, KalmanState, gating_distance, kf_init, kf_predict, \
    kf_update, state_to_box


class TrackStatus(enum.Enum):
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


@dataclass(frozen=True)
class TrackerConfig:
    det_threshold: float = 0.4
    emb_match_threshold: float = 0.4
    iou_match_threshold: float = 0.5
    track_buffer: int = 30
    ema_momentum: float = 0.9
    gate_chi2: float = GATE_CHI2
    use_reid: bool = True
    use_iou: bool = True
    use_kalman: bool = True

    def __post_init__(self):
        if not 0.0 <= self.det_threshold <= 1.0:
            raise ValueError("det_threshold must be in [0, 1]")
        if not 0.0 <= self.emb_match_threshold <= 2.0:
            raise ValueError("emb_match_threshold must be in [0, 2]")
        if not 0.0 <= self.iou_match_threshold <= 1.0:
            raise ValueError("iou_match_threshold must be in [0, 1]")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ValueError("ema_momentum must be in [0, 1]")
        if self.track_buffer < 1:
            raise ValueError("track_buffer must be >= 1")
        if not (self.use_reid or self.use_iou):
            raise ValueError("at least one of use_reid/use_iou must be enabled")


@dataclass
class Track:
    track_id: int
    last_box: BBox
    start_frame: int
    kf: KalmanState | None = None
    smooth_emb: np.ndarray | None = None
    status: TrackStatus = TrackStatus.ACTIVE
    frames_since_update: int = 0
    last_score: float = 1.0

    def predicted_box(self) -> BBox:
        return state_to_box(self.kf) if self.kf is not None else self.last_box


def cosine_distance_matrix(tracks: list[Track], dets: list[Detection]) -> np.ndarray:
    """1 - cosine similarity between track and detection embeddings, in [0, 2]."""
    out = np.zeros((len(tracks), len(dets)))
    for j, d in enumerate(dets):
        if d.embedding is None:
            raise ValueError(f"detection {j} has no embedding")
    for i, t in enumerate(tracks):
        if t.smooth_emb is None:
            raise ValueError(f"track {t.track_id} has no embedding")
        for j, d in enumerate(dets):
            out[i, j] = 1.0 - float(np.dot(t.smooth_emb, d.embedding))
    return np.clip(out, 0.0, 2.0)


def iou_distance_matrix(tracks: list[Track], dets: list[Detection]) -> np.ndarray:
    out = np.zeros((len(tracks), len(dets)))
    for i, t in enumerate(tracks):
        pb = t.predicted_box()
        for j, d in enumerate(dets):
            out[i, j] = 1.0 - iou(pb, d.box)
    return out


class OnlineTracker:
    """Owns the tracklet pool; step() is called once per frame, in order."""

    def __init__(self, cfg: TrackerConfig = TrackerConfig()):
        self.cfg = cfg
        self._tracks: list[Track] = []
        self._next_id = 1
        self._last_frame: int | None = None

    @property
    def tracks(self) -> list[Track]:
        return list(self._tracks)

    def step(self, frame_index: int, dets: list[Detection]) -> list[tuple[int, BBox]]:
        """Associate one frame of detections; returns (id, box) per active track."""
        cfg = self.cfg
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise ValueError(
                f"frame index {frame_index} not after {self._last_frame}")
        self._last_frame = frame_index

        if cfg.use_kalman:
            for t in self._tracks:
                if t.kf is not None:
                    t.kf = kf_predict(t.kf)

        matched: list[tuple[Track, Detection]] = []
        det_pool = list(range(len(dets)))

        # stage 1: appearance, active and lost tracks alike
        if cfg.use_reid:
            cand = [t for t in self._tracks
                    if t.status in (TrackStatus.ACTIVE, TrackStatus.LOST)]
            if cand and det_pool:
                sub = [dets[j] for j in det_pool]
                cost = cosine_distance_matrix(cand, sub)
                if cfg.use_kalman:
                    for i, t in enumerate(cand):
                        if t.kf is None:
                            continue
                        g = gating_distance(t.kf, [d.box for d in sub])
                        for j, dist in enumerate(g):
                            if dist > cfg.gate_chi2:
                                cost[i, j] = np.inf
                pairs, _, _ = hungarian(cost, max_cost=cfg.emb_match_threshold)
                taken = set()
                for i, j in pairs:
                    matched.append((cand[i], dets[det_pool[j]]))
                    taken.add(det_pool[j])
                det_pool = [j for j in det_pool if j not in taken]

        # stage 2: box overlap, active tracks only
        if cfg.use_iou:
            done = {id(t) for t, _ in matched}
            cand = [t for t in self._tracks
                    if t.status is TrackStatus.ACTIVE and id(t) not in done]
            if cand and det_pool:
                sub = [dets[j] for j in det_pool]
                cost = iou_distance_matrix(cand, sub)
                pairs, _, _ = hungarian(cost, max_cost=cfg.iou_match_threshold)
                taken = set()
                for i, j in pairs:
                    matched.append((cand[i], dets[det_pool[j]]))
                    taken.add(det_pool[j])
                det_pool = [j for j in det_pool if j not in taken]

        matched_ids = {id(t) for t, _ in matched}
        for t, d in matched:
            if cfg.use_kalman and t.kf is not None:
                t.kf = kf_update(t.kf, d.box)
            t.last_box = d.box
            t.last_score = d.score
            t.frames_since_update = 0
            t.status = TrackStatus.ACTIVE
            if t.smooth_emb is not None and d.embedding is not None:
                m = cfg.ema_momentum
                e = m * t.smooth_emb + (1.0 - m) * d.embedding
                n = np.linalg.norm(e)
                if n > 1e-12:
                    t.smooth_emb = e / n

        survivors = []
        for t in self._tracks:
            if id(t) in matched_ids:
                survivors.append(t)
                continue
            t.frames_since_update += 1
            if t.frames_since_update > cfg.track_buffer:
                t.status = TrackStatus.REMOVED
            else:
                t.status = TrackStatus.LOST
                survivors.append(t)
        self._tracks = survivors

        for j in det_pool:
            d = dets[j]
            if d.score > cfg.det_threshold:
                self._tracks.append(Track(
                    track_id=self._next_id,
                    last_box=d.box,
                    start_frame=frame_index,
                    kf=kf_init(d.box) if cfg.use_kalman else None,
                    smooth_emb=None if d.embedding is None else d.embedding.copy(),
                    last_score=d.score,
                ))
                self._next_id += 1

        out = [(t.track_id, t.last_box) for t in self._tracks
               if t.status is TrackStatus.ACTIVE]
        out.sort(key=lambda pair: pair[0])
        return out


def track_sequence(frames: dict[int, list[Detection]],
                   cfg: TrackerConfig = TrackerConfig()
                   ) -> dict[int, list[tuple[int, BBox]]]:
    """Run a fresh tracker over frame-indexed detections; returns per-frame outputs."""
    tracker = OnlineTracker(cfg)
    return {f: tracker.step(f, frames[f]) for f in sorted(frames)}
