"""Stand-in perceptual metric runner: score = clamp(2 * luma PSNR, 0, 100).

Usage: stub_vmaf.py [--mode=ok|fail|overflow|garbage|silent] REF DIST OUT
"""

import json
import math
import sys

import numpy as np


def read_y4m(path):
    with open(path, "rb") as f:
        data = f.read()
    end = data.index(b"\n")
    tokens = data[:end].split(b" ")
    width = height = None
    tag = "420"
    for token in tokens[1:]:
        if token[:1] == b"W":
            width = int(token[1:])
        elif token[:1] == b"H":
            height = int(token[1:])
        elif token[:1] == b"C":
            tag = token[1:].decode()
    depth = int(tag.split("p")[1]) if "p" in tag else 8
    chroma_samples = width * height // 2 if tag.startswith("420") else width * height * 2
    sample_bytes = 1 if depth == 8 else 2
    frame_bytes = (width * height + chroma_samples) * sample_bytes
    dtype = np.uint8 if depth == 8 else np.dtype("<u2")
    frames = []
    pos = end + 1
    while pos < len(data):
        pos = data.index(b"\n", pos) + 1
        payload = np.frombuffer(data[pos:pos + frame_bytes], dtype=dtype)
        frames.append(payload[:width * height].astype(np.float64))
        pos += frame_bytes
    return frames, (1 << depth) - 1


def main():
    mode = "ok"
    args = []
    for arg in sys.argv[1:]:
        if arg.startswith("--mode="):
            mode = arg.split("=", 1)[1]
        else:
            args.append(arg)
    ref_path, dist_path, out_path = args

    if mode == "fail":
        sys.stderr.write("stub runner: simulated failure\n")
        sys.exit(1)
    if mode == "silent":
        return

    refs, peak = read_y4m(ref_path)
    dists, _ = read_y4m(dist_path)
    scores = []
    for a, b in zip(refs, dists):
        mse = float(np.mean((a - b) ** 2))
        psnr = 99.0 if mse == 0 else min(99.0, 10 * math.log10(peak * peak / mse))
        scores.append(max(0.0, min(100.0, 2 * psnr)))
    if mode == "overflow":
        scores[0] = 101.0

    with open(out_path, "w") as f:
        if mode == "garbage":
            f.write("not json")
        else:
            json.dump({"metric": "vmaf", "frames": [{"score": s} for s in scores]}, f)


if __name__ == "__main__":
    main()
