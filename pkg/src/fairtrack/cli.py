"""Single-binary front end: simulate, encode, decode, track, evaluate.

Every run writes its outputs atomically (temp file + rename) and leaves
one JSON manifest alongside them recording the subcommand, argument
vector, resolved configuration, and toolkit version — enough to replay
the run and get byte-identical outputs.

Exit codes: 0 success, 1 validation failure (bad flags or values),
2 I/O or file-format failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .decoding import Detection, Sampling, decode
from .encoding import GtObject, encode_targets
from .geometry import BBox, GridSpec, iou
from .losses import gradcheck_run
from .metrics import clear_mot, detection_ap, idf1, tpr_at_far
from .mot_io import MotFormatError, MotRecord, format_gt_line, format_mot_line, \
    load_config, parse_mot, to_frames
from .sim import SimConfig, generate
from .tensors import FtenFormatError, Tensor2D, Tensor3D, read_tensor, \
    tensor_to_bytes
from .tracker import OnlineTracker, TrackerConfig


class _Parser(argparse.ArgumentParser):
    """argparse onto our exit-code contract: usage problems are code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode())


def _thread_count(args) -> int:
    n = args.threads
    if n is None:
        env = os.environ.get("FAIRTRACK_THREADS")
        n = int(env) if env else 1
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    return n


def _frame_map(threads: int, fn, frames: list):
    """Apply fn over frames, optionally on a thread pool; order preserved."""
    if threads <= 1 or len(frames) <= 1:
        return [fn(f) for f in frames]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, frames))


def _write_manifest(anchor: Path, subcommand: str, args, *, config=None,
                    inputs=(), outputs=(), seed=None, started: float) -> None:
    if anchor.is_dir():
        path = anchor / "manifest.json"
    else:
        path = anchor.with_name(anchor.name + ".manifest.json")
    doc = {
        "subcommand": subcommand,
        "argv": list(getattr(args, "_argv", [])),
        "config": config or {},
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "version": __version__,
        "duration_s": round(time.monotonic() - started, 6),
    }
    _atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _resolve_configs(args) -> tuple[TrackerConfig, SimConfig]:
    if getattr(args, "config", None):
        return load_config(args.config)
    return TrackerConfig(), SimConfig()


def _read_seqinfo(directory: Path) -> dict | None:
    ini = directory / "seqinfo.ini"
    if not ini.is_file():
        return None
    cp = configparser.ConfigParser()
    cp.read(ini)
    if "Sequence" not in cp:
        return None
    sec = cp["Sequence"]
    return {k: sec[k] for k in sec}


# ---------------------------------------------------------------- sim

def cmd_sim(args) -> int:
    started = time.monotonic()
    _, base = _resolve_configs(args)
    overrides = {
        "seed": args.seed, "frames": args.frames, "num_targets": args.targets,
        "image_w": args.image_w, "image_h": args.image_h,
        "scenario": args.scenario, "det_dropout_prob": args.dropout,
        "fp_rate": args.fp_rate, "box_noise_std": args.box_noise,
        "emb_dim": args.emb_dim, "emb_noise_std": args.emb_noise,
    }
    cfg = dataclasses.replace(
        base, **{k: v for k, v in overrides.items() if v is not None})

    out = Path(args.out)
    (out / "emb").mkdir(parents=True, exist_ok=True)
    res = generate(cfg)

    gt_lines = []
    for frame in sorted(res.gt):
        for tid, box in res.gt[frame]:
            gt_lines.append(format_gt_line(MotRecord(
                frame, tid, box.x1, box.y1, box.width, box.height,
                conf=1.0, cls=1, visibility=1.0)))
    _atomic_write_text(out / "gt.txt", "\n".join(gt_lines) + "\n")

    det_lines = []
    written = [out / "gt.txt", out / "det.txt", out / "seqinfo.ini"]
    for frame in sorted(res.dets):
        dets = res.dets[frame]
        for d in dets:
            det_lines.append(format_mot_line(MotRecord(
                frame, -1, d.box.x1, d.box.y1, d.box.width, d.box.height,
                conf=d.score)))
        if dets:
            rows = np.stack([d.embedding for d in dets])
            path = out / "emb" / f"{frame:06d}.ften"
            _atomic_write_bytes(path, tensor_to_bytes(Tensor2D.from_array(rows)))
            written.append(path)
    _atomic_write_text(out / "det.txt", "\n".join(det_lines) + "\n")

    _atomic_write_text(out / "seqinfo.ini", (
        "[Sequence]\n"
        f"name=sim-seed{cfg.seed}\n"
        "imDir=img1\n"
        "frameRate=30\n"
        f"seqLength={cfg.frames}\n"
        f"imWidth={cfg.image_w}\n"
        f"imHeight={cfg.image_h}\n"
        "imExt=.jpg\n"))

    _write_manifest(out, "sim", args, config=dataclasses.asdict(cfg),
                    outputs=written, seed=cfg.seed, started=started)
    return 0


# ---------------------------------------------------------------- encode

def cmd_encode(args) -> int:
    started = time.monotonic()
    gt_path = Path(args.gt)
    gt = parse_mot(gt_path, kind="gt")

    width, height = args.image_w, args.image_h
    info = _read_seqinfo(gt_path.parent)
    if info is not None:
        width = width or int(info.get("imwidth", 0)) or None
        height = height or int(info.get("imheight", 0)) or None
    if not width or not height:
        raise ValueError("image size unknown: pass --image-w/--image-h "
                         "or keep a seqinfo.ini next to the ground truth")
    grid = GridSpec(width, height, args.stride)

    ids = sorted({r.obj_id for recs in gt.values() for r in recs})
    index = {tid: i for i, tid in enumerate(ids)}

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def encode_one(frame: int):
        objs = [GtObject(r.to_box(), index[r.obj_id]) for r in gt[frame]]
        maps = encode_targets(objs, grid, len(ids))
        sidecar = []
        ys, xs = np.nonzero(maps.center_mask)
        for y, x in zip(ys, xs):
            sidecar.append(f"{frame},{x},{y},{int(maps.identity_index[y, x])}")
        return frame, maps, sidecar

    frames = sorted(gt)
    results = _frame_map(_thread_count(args), encode_one, frames)

    written = []
    center_lines = []
    for frame, maps, sidecar in results:
        for suffix, tensor in (("heat", maps.heatmap), ("off", maps.offsets),
                               ("size", maps.sizes)):
            path = out / f"{frame:06d}.{suffix}.ften"
            _atomic_write_bytes(path, tensor_to_bytes(tensor))
            written.append(path)
        center_lines.extend(sidecar)
    _atomic_write_text(out / "centers.txt", "\n".join(center_lines) + "\n")
    written.append(out / "centers.txt")

    _write_manifest(out, "encode", args,
                    config={"image_w": width, "image_h": height,
                            "stride": args.stride, "num_identities": len(ids)},
                    inputs=[gt_path], outputs=written, started=started)
    return 0


# ---------------------------------------------------------------- decode

def cmd_decode(args) -> int:
    started = time.monotonic()
    maps_dir = Path(args.maps)
    frames = sorted(int(p.name.split(".")[0]) for p in maps_dir.glob("*.heat.ften"))
    if not frames:
        raise MotFormatError(f"no *.heat.ften maps found in {maps_dir}")

    sampling = Sampling.CENTER_BI if args.sampling == "center-bi" else Sampling.CENTER

    def decode_one(frame: int):
        heat = read_tensor(maps_dir / f"{frame:06d}.heat.ften")
        off = read_tensor(maps_dir / f"{frame:06d}.off.ften")
        size = read_tensor(maps_dir / f"{frame:06d}.size.ften")
        emb_path = maps_dir / f"{frame:06d}.emb.ften"
        emb = read_tensor(emb_path) if emb_path.is_file() else None
        if not isinstance(heat, Tensor2D):
            raise FtenFormatError(f"{frame:06d}.heat.ften: expected a 2-d tensor")
        for nm, t in (("off", off), ("size", size), ("emb", emb)):
            if t is not None and not isinstance(t, Tensor3D):
                raise FtenFormatError(f"{frame:06d}.{nm}.ften: expected a 3-d tensor")
        grid = GridSpec(heat.width * args.stride, heat.height * args.stride,
                        args.stride)
        dets = decode(heat, off, size, emb, grid, threshold=args.threshold,
                      top_k=args.top_k, sampling=sampling)
        return frame, dets

    results = _frame_map(_thread_count(args), decode_one, frames)

    out = Path(args.out)
    (out / "emb").mkdir(parents=True, exist_ok=True)
    lines = []
    written = [out / "detections.txt"]
    for frame, dets in results:
        for d in dets:
            b = d.box
            lines.append(f"{frame},{d.score:.6f},{b.x1:.2f},{b.y1:.2f},"
                         f"{b.x2:.2f},{b.y2:.2f}")
        with_emb = [d for d in dets if d.embedding is not None]
        if with_emb and len(with_emb) == len(dets):
            path = out / "emb" / f"{frame:06d}.ften"
            rows = np.stack([d.embedding for d in dets])
            _atomic_write_bytes(path, tensor_to_bytes(Tensor2D.from_array(rows)))
            written.append(path)
    _atomic_write_text(out / "detections.txt", "\n".join(lines) + "\n")

    _write_manifest(out, "decode", args,
                    config={"threshold": args.threshold, "top_k": args.top_k,
                            "sampling": args.sampling, "stride": args.stride},
                    inputs=[maps_dir], outputs=written, started=started)
    return 0


# ---------------------------------------------------------------- track

def _load_detections(src: Path, need_emb: bool) -> dict[int, list[Detection]]:
    """Read per-frame detections (+ row-aligned embeddings) from a directory."""
    det_file = None
    for name in ("det.txt", "detections.txt"):
        if (src / name).is_file():
            det_file = src / name
            break
    if det_file is None:
        raise MotFormatError(f"no det.txt or detections.txt in {src}")

    per_frame: dict[int, list[tuple[float, BBox]]] = {}
    if det_file.name == "det.txt":
        for frame, recs in parse_mot(det_file, kind="det").items():
            per_frame[frame] = [(min(max(r.conf, 0.0), 1.0), r.to_box())
                                for r in recs]
    else:
        for lineno, raw in enumerate(det_file.read_text().splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise MotFormatError(
                    f"{det_file}:{lineno}: expected 6 fields, got {len(parts)}")
            try:
                frame = int(parts[0])
                score = float(parts[1])
                x1, y1, x2, y2 = (float(v) for v in parts[2:6])
            except ValueError as e:
                raise MotFormatError(f"{det_file}:{lineno}: {e}") from e
            per_frame.setdefault(frame, []).append(
                (min(max(score, 0.0), 1.0), BBox(x1, y1, x2, y2)))

    emb_dir = src / "emb"
    out: dict[int, list[Detection]] = {}
    for frame, rows in per_frame.items():
        emb = None
        path = emb_dir / f"{frame:06d}.ften"
        if path.is_file():
            t = read_tensor(path)
            if not isinstance(t, Tensor2D) or t.height != len(rows):
                raise MotFormatError(
                    f"{path}: expected {len(rows)} embedding rows")
            m = np.asarray(t)
            emb = m / np.linalg.norm(m, axis=1, keepdims=True)
        elif need_emb:
            raise ValueError(
                f"re-ID stage enabled but {path} is missing "
                "(pass --no-reid to track on boxes alone)")
        out[frame] = [Detection(box=b, score=s,
                                embedding=None if emb is None else emb[i])
                      for i, (s, b) in enumerate(rows)]
    return out


def cmd_track(args) -> int:
    started = time.monotonic()
    tracker_cfg, _ = _resolve_configs(args)
    toggles = {}
    if args.no_reid:
        toggles["use_reid"] = False
    if args.no_iou:
        toggles["use_iou"] = False
    if args.no_kalman:
        toggles["use_kalman"] = False
    if toggles:
        tracker_cfg = dataclasses.replace(tracker_cfg, **toggles)

    src = Path(args.inp)
    dets = _load_detections(src, need_emb=tracker_cfg.use_reid)

    tracker = OnlineTracker(tracker_cfg)
    lines = []
    for frame in sorted(dets):
        outputs = tracker.step(frame, dets[frame])
        scores = {t.track_id: t.last_score for t in tracker.tracks}
        for tid, box in outputs:
            lines.append(format_mot_line(MotRecord(
                frame, tid, box.x1, box.y1, box.width, box.height,
                conf=scores.get(tid, 1.0))))

    out = Path(args.out)
    if out.parent:
        out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(out, "\n".join(lines) + "\n")
    _write_manifest(out, "track", args, config=dataclasses.asdict(tracker_cfg),
                    inputs=[src], outputs=[out], started=started)
    return 0


# ---------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    started = time.monotonic()
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    known = {"clear", "idf1", "ap"}
    bad = set(wanted) - known
    if bad:
        raise ValueError(f"unknown metrics: {', '.join(sorted(bad))}")

    gt_recs = parse_mot(args.gt, kind="gt")
    pred_recs = parse_mot(args.pred, kind="result")
    gt = to_frames(gt_recs)
    pred = to_frames(pred_recs)

    report: dict[str, float | int] = {}
    if "clear" in wanted:
        r = clear_mot(gt, pred, args.iou)
        report.update(mota=r.mota, fp=r.fp, fn=r.fn, idsw=r.id_switches,
                      mt=r.mt_ratio, ml=r.ml_ratio, num_gt=r.num_gt)
    if "idf1" in wanted:
        report["idf1"] = idf1(gt, pred, args.iou)
    if "ap" in wanted:
        gt_boxes = {f: [b for _, b in pairs] for f, pairs in gt.items()}
        preds = {f: [(r.conf, r.to_box()) for r in recs]
                 for f, recs in pred_recs.items()}
        report["ap"] = detection_ap(gt_boxes, preds, args.iou)

    if args.json:
        text = json.dumps(report) + "\n"
    else:
        parts = []
        for k, v in report.items():
            parts.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
        text = "\n".join(parts) + "\n"
    sys.stdout.write(text)

    if args.out:
        out = Path(args.out)
        _atomic_write_text(out, text)
        _write_manifest(out, "eval", args,
                        config={"metrics": wanted, "iou": args.iou},
                        inputs=[args.gt, args.pred], outputs=[out],
                        started=started)
    return 0


# ---------------------------------------------------------------- gradcheck

def cmd_gradcheck(args) -> int:
    worst = gradcheck_run(seeds=args.seeds, size=args.size,
                          num_classes=args.classes, h=args.step)
    failed = False
    for name in ("focal", "box", "reid", "total"):
        status = "ok" if worst[name] <= args.tol else "FAIL"
        print(f"{name}: worst_rel_err={worst[name]:.3e} {status}")
        failed |= worst[name] > args.tol
    return 1 if failed else 0


# ---------------------------------------------------------------- reid-eval

def cmd_reid_eval(args) -> int:
    src = Path(args.inp)
    gt = to_frames(parse_mot(src / "gt.txt", kind="gt"))
    dets = _load_detections(src, need_emb=True)

    # label each detection with the GT identity it overlaps best
    genuine: list[float] = []
    impostor: list[float] = []
    labeled: dict[int, list[tuple[int, np.ndarray]]] = {}
    by_id: dict[int, list[np.ndarray]] = {}
    for frame in sorted(dets):
        rows = []
        for d in dets[frame]:
            best, best_id = args.iou, None
            for gid, gb in gt.get(frame, []):
                v = iou(d.box, gb)
                if v >= best:
                    best, best_id = v, gid
            if best_id is not None:
                rows.append((best_id, d.embedding))
                by_id.setdefault(best_id, []).append(d.embedding)
        labeled[frame] = rows

    for frame, rows in labeled.items():  # impostor: same frame, different ids
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                if rows[i][0] != rows[j][0]:
                    impostor.append(float(np.dot(rows[i][1], rows[j][1])))
    for gid, embs in sorted(by_id.items()):  # genuine: same id, across frames
        for i in range(len(embs)):
            for j in range(i + 1, len(embs)):
                genuine.append(float(np.dot(embs[i], embs[j])))

    tpr = tpr_at_far(genuine, impostor, args.far)
    if args.json:
        print(json.dumps({"tpr": tpr, "far": args.far,
                          "genuine": len(genuine), "impostor": len(impostor)}))
    else:
        print(f"tpr={tpr:.6f}\nfar={args.far}\n"
              f"genuine={len(genuine)}\nimpostor={len(impostor)}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> _Parser:
    p = _Parser(prog="fairtrack",
                description="Anchor-free tracking-by-detection toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads for per-frame operations "
                             "(default: FAIRTRACK_THREADS or 1)")

    s = sub.add_parser("sim", help="generate a synthetic sequence")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--frames", type=int, default=None)
    s.add_argument("--targets", type=int, default=None)
    s.add_argument("--image-w", type=int, default=None)
    s.add_argument("--image-h", type=int, default=None)
    s.add_argument("--scenario", choices=["random", "crossing"], default=None)
    s.add_argument("--dropout", type=float, default=None)
    s.add_argument("--fp-rate", type=float, default=None)
    s.add_argument("--box-noise", type=float, default=None)
    s.add_argument("--emb-dim", type=int, default=None)
    s.add_argument("--emb-noise", type=float, default=None)
    s.add_argument("--config", default=None)
    s.add_argument("--out", required=True)
    common(s)
    s.set_defaults(func=cmd_sim)

    s = sub.add_parser("encode", help="ground truth to supervision maps")
    s.add_argument("--gt", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--image-w", type=int, default=None)
    s.add_argument("--image-h", type=int, default=None)
    s.add_argument("--stride", type=int, default=4)
    common(s)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("decode", help="maps to scored detections")
    s.add_argument("--maps", required=True, help="directory of *.ften maps")
    s.add_argument("--out", required=True)
    s.add_argument("--threshold", type=float, default=0.4)
    s.add_argument("--top-k", type=int, default=128)
    s.add_argument("--sampling", choices=["center", "center-bi"],
                   default="center")
    s.add_argument("--stride", type=int, default=4)
    common(s)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("track", help="associate detections into tracks")
    s.add_argument("--in", dest="inp", required=True,
                   help="directory with det.txt/detections.txt and emb/")
    s.add_argument("--out", required=True, help="result file (MOT format)")
    s.add_argument("--config", default=None)
    s.add_argument("--no-reid", action="store_true")
    s.add_argument("--no-iou", action="store_true")
    s.add_argument("--no-kalman", action="store_true")
    common(s)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("eval", help="score a result file against ground truth")
    s.add_argument("--gt", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--metrics", default="clear,idf1")
    s.add_argument("--iou", type=float, default=0.5)
    s.add_argument("--json", action="store_true")
    s.add_argument("--out", default=None)
    common(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="verify analytic gradients")
    s.add_argument("--seeds", type=int, default=50)
    s.add_argument("--size", type=int, default=8)
    s.add_argument("--classes", type=int, default=8)
    s.add_argument("--step", type=float, default=1e-6)
    s.add_argument("--tol", type=float, default=1e-4)
    common(s)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("reid-eval", help="embedding verification rate")
    s.add_argument("--in", dest="inp", required=True,
                   help="simulator output directory")
    s.add_argument("--far", type=float, default=0.1)
    s.add_argument("--iou", type=float, default=0.5)
    s.add_argument("--json", action="store_true")
    common(s)
    s.set_defaults(func=cmd_reid_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args._argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return args.func(args)
    except (MotFormatError, FtenFormatError) as e:
        print(f"fairtrack: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"fairtrack: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"fairtrack: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
