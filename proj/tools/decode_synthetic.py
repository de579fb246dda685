#!/usr/bin/env python3
"""Recover planted labels from a synthetic dataset without the C++ library.

Face pixel (x, y) belongs to region (x + 3*y) % 8. Region j < 7 lights the
RGB channels whose bits are set in j+1 at round(2.55 * label); region 7 is
black. Exits non-zero if any decoded label misses by more than 1/255.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
from PIL import Image


def decode_frame(frame, box):
    x0, y0, x1, y1 = box
    face = frame[y0:y1, x0:x1].astype(np.float64) / 255.0
    ys, xs = np.mgrid[0 : face.shape[0], 0 : face.shape[1]]
    region = (xs + 3 * ys) % 8
    means = []
    for j in range(7):
        lit = [c for c in range(3) if (j + 1) >> c & 1]
        means.append(face[region == j][:, lit].mean())
    dark = face[region == 7]
    return means, float(dark.max()) if dark.size else 0.0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dataset", type=Path, help="directory holding manifest.csv")
    args = ap.parse_args()

    worst = 0.0
    frames_checked = 0
    with open(args.dataset / "manifest.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        print("empty manifest", file=sys.stderr)
        return 1
    for row in rows:
        labels = [float(row[f"e{i}"]) / 100.0 for i in range(1, 8)]
        with open(args.dataset / row["boxes_path"], newline="") as f:
            boxes = {int(b["frame_index"]): (int(b["x0"]), int(b["y0"]), int(b["x1"]), int(b["y1"]))
                     for b in csv.DictReader(f)}
        frame_files = sorted((args.dataset / row["frames_path"]).glob("*.png"))
        for index, path in enumerate(frame_files):
            frame = np.asarray(Image.open(path).convert("RGB"))
            means, dark = decode_frame(frame, boxes[index])
            if dark != 0.0:
                print(f"{row['video_id']} frame {index}: background region is not black", file=sys.stderr)
                return 1
            worst = max(worst, max(abs(m - l) for m, l in zip(means, labels)))
            frames_checked += 1

    ok = worst <= 1.0 / 255.0 + 1e-12
    print(f"{len(rows)} clips, {frames_checked} frames, worst |mean - label| = {worst:.6f} "
          f"({'PASS' if ok else 'FAIL'} at 1/255)")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
