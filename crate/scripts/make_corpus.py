#!/usr/bin/env python3
"""Regenerate the 256x256 grayscale test corpus in data/corpus/.

Sources are the sample images bundled with scikit-image (public domain or
CC0). Each is converted to 8-bit grayscale, center-cropped to a square and
resized to 256x256 with anti-aliasing, then written as binary PGM (P5).
"""
import os
import sys

import numpy as np
from skimage import color, data, transform, util

SOURCES = ["camera", "moon", "coins", "clock", "astronaut", "chelsea"]


def to_gray_u8(img):
    if img.ndim == 3:
        img = color.rgb2gray(img[..., :3])
    return util.img_as_ubyte(img)


def square_resize(img, side=256):
    h, w = img.shape
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    crop = img[top : top + s, left : left + s]
    out = transform.resize(crop, (side, side), anti_aliasing=True, preserve_range=True)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def write_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
        os.path.dirname(__file__), "..", "data", "corpus"
    )
    os.makedirs(out_dir, exist_ok=True)
    for name in SOURCES:
        img = square_resize(to_gray_u8(getattr(data, name)()))
        write_pgm(os.path.join(out_dir, f"{name}.pgm"), img)
        print(name, img.shape)


if __name__ == "__main__":
    main()
