"""Regenerate the miniature pose corpus shipped under ``fixtures/mini_corpus``.

Three synthetic "videos" of 130-keypoint pose documents plus a 12-row
annotation table over four glosses. Output is deterministic.

    python3 scripts/make_fixture_corpus.py [OUT_DIR]
"""
from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import numpy as np

KEYPOINTS = 130
VIDEOS = {"vid_a": 100, "vid_b": 96, "vid_c": 110}
# label, video, start, end (inclusive), signer, articulation
ANNOTATIONS = [
    ("BOOK", "vid_a", 0, 20, "s1", "1"),
    ("THANK-YOU", "vid_a", 21, 39, "s1", "1"),
    ("ALL", "vid_a", 40, 69, "s1", "1"),
    ("MERRY-GO-ROUND", "vid_a", 30, 99, "s1", "2"),
    ("BOOK", "vid_b", 0, 15, "s2", "1"),
    ("ALL", "vid_b", 16, 44, "s2", "2"),
    ("THANK-YOU", "vid_b", 45, 60, "s2", "1"),
    ("MERRY-GO-ROUND", "vid_b", 61, 95, "s2", "1"),
    ("ALL", "vid_c", 0, 9, "s3", "1"),
    ("BOOK", "vid_c", 10, 39, "s3", "2"),
    ("THANK-YOU", "vid_c", 20, 109, "s3", "1"),
    ("MERRY-GO-ROUND", "vid_c", 50, 79, "s3", "1"),
]
MANIFEST = {
    "poses_dir": "poses",
    "annotations": "annotations.csv",
    "keypoint_counts": [130],
    "layout": "sign-27",
    "filter": "sign-27",
    "train_ratio": 0.8,
    "seed": 7,
    "target_frames": 63,
    "output_dir": "out",
}


def video_frames(num_frames: int, rng: np.random.Generator) -> np.ndarray:
    base = rng.uniform(0.2, 0.8, size=(KEYPOINTS, 2))
    freq = rng.uniform(0.5, 3.0, size=(KEYPOINTS, 1))
    phase = rng.uniform(0, 2 * np.pi, size=(KEYPOINTS, 1))
    t = np.arange(num_frames)[:, None, None] / num_frames
    xy = base + 0.05 * np.sin(2 * np.pi * freq * t + phase)
    conf = rng.uniform(0.5, 1.0, size=(num_frames, KEYPOINTS, 1))
    return np.round(np.concatenate([xy, conf], axis=2), 3)


def write_corpus(out: Path, seed: int = 2019) -> None:
    rng = np.random.default_rng(seed)
    for vid, num_frames in VIDEOS.items():
        directory = out / "poses" / vid
        directory.mkdir(parents=True, exist_ok=True)
        frames = video_frames(num_frames, rng)
        for i, frame in enumerate(frames):
            # one dropped detection per video exercises the missing-person rule
            people = [] if i == num_frames // 2 else [{"keypoints": [float(v) for v in frame.ravel()]}]
            doc = {"frame": i, "people": people}
            (directory / f"{i:06d}.json").write_text(json.dumps(doc, separators=(",", ":")) + "\n")
    with (out / "annotations.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "video_id", "start_frame", "end_frame", "signer_id", "articulation_id"])
        writer.writerows(ANNOTATIONS)
    (out / "manifest.json").write_text(json.dumps(MANIFEST, indent=2) + "\n")


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "fixtures" / "mini_corpus"
    write_corpus(target)
    print(f"wrote {target}")
