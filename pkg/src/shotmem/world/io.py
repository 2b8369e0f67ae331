"""Corpus directories on disk.

Layout::

    <root>/manifest.txt              one line per video
    <root>/<video_id>/frames/NNNN.ppm
    <root>/<video_id>/labels/NNNN.pgm  per-pixel subject labels
    <root>/<video_id>/captions.txt     shot=<n> caption=<text>
    <root>/<video_id>/annotations.txt  shot=<n> entities=... env=... ...

Frames are stored as one concatenated stream; shot starts live in the
manifest, so curation can re-detect them.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .caption import StructuredCaption
from .story import MultiShotVideo, Shot, ShotAnnotation


class CorpusError(ValueError):
    pass


def write_ppm(path, img: np.ndarray, maxval: int = 255) -> None:
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    q = np.round(np.clip(img, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    magic = b"P6" if img.ndim == 3 else b"P5"
    with open(path, "wb") as fh:
        fh.write(b"%s\n%d %d\n%d\n" % (magic, w, h, maxval))
        fh.write(q.astype(dtype).tobytes())


def write_pgm_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    h, w = labels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(labels.astype("u1").tobytes())


def _read_netpbm(path):
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while data[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorpusError(f"{path}: truncated header")
        fields.append(data[start:pos])
    pos += 1
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6"):
        raise CorpusError(f"{path}: unsupported format {magic!r}")
    c = 3 if magic == b"P6" else 1
    dtype = ">u2" if maxval > 255 else "u1"
    n = h * w * c
    arr = np.frombuffer(data, dtype=dtype, count=n, offset=pos)
    return arr.reshape(h, w, c) if c == 3 else arr.reshape(h, w), maxval


def read_ppm(path) -> np.ndarray:
    arr, maxval = _read_netpbm(path)
    return arr.astype(np.float64) / maxval


def read_pgm_labels(path) -> np.ndarray:
    arr, _ = _read_netpbm(path)
    return arr.astype(np.int8)


def _kv(line: str) -> dict[str, str]:
    out = {}
    for tok in line.split():
        if "=" not in tok:
            raise CorpusError(f"malformed field {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _rgb(c) -> str:
    return ",".join(f"{float(x):.17g}" for x in c)


def _parse_rgb(s: str) -> tuple:
    return tuple(float(x) for x in s.split(","))


def write_video(root, video: MultiShotVideo) -> Path:
    d = Path(root) / video.video_id
    (d / "frames").mkdir(parents=True, exist_ok=True)
    (d / "labels").mkdir(exist_ok=True)
    t = 0
    cap_lines, ann_lines = [], []
    for i, shot in enumerate(video.shots, 1):
        for k in range(len(shot.frames)):
            write_ppm(d / "frames" / f"{t:04d}.ppm", shot.frames[k])
            if shot.annotation is not None:
                write_pgm_labels(d / "labels" / f"{t:04d}.pgm", shot.annotation.labels[k])
            t += 1
        cap_lines.append(f"shot={i} caption={shot.caption.serialize()}")
        a = shot.annotation
        if a is not None:
            ents = ",".join(a.entity_ids) or "-"
            cols = ";".join(f"{e}:{_rgb(a.entity_colors[e])}" for e in a.entity_ids) or "-"
            ann_lines.append(
                f"shot={i} entities={ents} env={a.env_id} entity_colors={cols} "
                f"env_colors={_rgb(a.env_colors[0])};{_rgb(a.env_colors[1])}"
            )
    (d / "captions.txt").write_text("\n".join(cap_lines) + "\n")
    if ann_lines:
        (d / "annotations.txt").write_text("\n".join(ann_lines) + "\n")
    return d


def manifest_line(video: MultiShotVideo) -> str:
    starts, t = [], 0
    for s in video.shots:
        starts.append(t)
        t += len(s.frames)
    unrelated = int(bool(video.meta.get("unrelated", False)))
    return f"video={video.video_id} frames={t} shot_starts={','.join(map(str, starts))} seed={video.seed} unrelated={unrelated}"


def write_corpus(root, videos) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for v in videos:
        write_video(root, v)
        lines.append(manifest_line(v))
    write_manifest(root / "manifest.txt", lines)
    return root


def write_manifest(path, lines) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    os.replace(tmp, path)


def read_manifest(path) -> list[dict[str, str]]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rec = _kv(line)
        if "video" not in rec or "frames" not in rec:
            raise CorpusError(f"{path}:{n}: missing video or frames field")
        out.append(rec)
    return out


def read_frames(root, video_id: str, n_frames: int) -> np.ndarray:
    d = Path(root) / video_id / "frames"
    return np.stack([read_ppm(d / f"{t:04d}.ppm") for t in range(n_frames)])


def read_video(root, record: dict[str, str], shot_starts: list[int] | None = None) -> MultiShotVideo:
    """Load one video. ``shot_starts`` overrides the manifest's boundaries
    (e.g. with detected cuts); annotations are kept only when the
    boundaries agree with the stored ones."""
    root = Path(root)
    vid, n = record["video"], int(record["frames"])
    frames = read_frames(root, vid, n)
    stored = [int(x) for x in record.get("shot_starts", "0").split(",")]
    starts = stored if shot_starts is None else list(shot_starts)
    caps = {}
    for line in (root / vid / "captions.txt").read_text().splitlines():
        if line.strip():
            rec = _kv_caption(line)
            caps[int(rec["shot"])] = StructuredCaption.parse(rec["caption"])
    anns = {}
    ann_path = root / vid / "annotations.txt"
    if ann_path.exists() and starts == stored:
        for line in ann_path.read_text().splitlines():
            if line.strip():
                rec = _kv(line)
                anns[int(rec["shot"])] = rec
    edges = starts + [n]
    shots = []
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:]), 1):
        cap = caps.get(i, StructuredCaption())
        ann = None
        if i in anns:
            rec = anns[i]
            ids = tuple(x for x in rec["entities"].split(",") if x and x != "-")
            cols = {}
            if rec["entity_colors"] != "-":
                for item in rec["entity_colors"].split(";"):
                    e, c = item.split(":")
                    cols[e] = _parse_rgb(c)
            ea, eb = rec["env_colors"].split(";")
            labels = np.stack([read_pgm_labels(root / vid / "labels" / f"{t:04d}.pgm") for t in range(a, b)])
            ann = ShotAnnotation(ids, rec["env"], labels, cols, (_parse_rgb(ea), _parse_rgb(eb)))
        shots.append(Shot(frames[a:b], cap, ann))
    meta = {"unrelated": record.get("unrelated", "0") == "1"}
    return MultiShotVideo(shots, None, int(record.get("seed", 0)), vid, meta)


def _kv_caption(line: str) -> dict[str, str]:
    # the caption text itself contains '=' so split on the first key only
    head, _, cap = line.partition(" caption=")
    rec = _kv(head)
    rec["caption"] = cap
    return rec


def read_corpus(root) -> list[MultiShotVideo]:
    root = Path(root)
    return [read_video(root, r) for r in read_manifest(root / "manifest.txt")]
