#!/usr/bin/env python3
"""Render a handwritten-digit-style image set into IDX files.

Draws digits 0-9 with a mix of system fonts under random affine jitter,
28x28 grayscale, and writes the standard IDX image format (magic 0x00000803).
Deterministic for a fixed seed.
"""

import argparse
import glob
import random
import struct
import sys

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont

FONT_PATTERNS = [
    "/usr/share/fonts/truetype/dejavu/*.ttf",
    "/usr/share/fonts/**/*.ttf",
]


def find_fonts():
    fonts = []
    for pat in FONT_PATTERNS:
        fonts = sorted(glob.glob(pat, recursive=True))
        if fonts:
            break
    if not fonts:
        sys.exit("no ttf fonts found")
    # prefer bold faces: handwritten digits have thick strokes, and stroke
    # weight drives how strongly the rendered objects scatter
    bold = [f for f in fonts if "Bold" in f and "Oblique" not in f and "Italic" not in f]
    return bold or fonts


def render_digit(rng, fonts):
    digit = rng.randrange(10)
    font_path = rng.choice(fonts)
    size = rng.randint(26, 34)
    font = ImageFont.truetype(font_path, size)

    big = Image.new("L", (64, 64), 0)
    draw = ImageDraw.Draw(big)
    bbox = draw.textbbox((0, 0), str(digit), font=font)
    w, h = bbox[2] - bbox[0], bbox[3] - bbox[1]
    cx = 32 - w / 2 - bbox[0] + rng.uniform(-3, 3)
    cy = 32 - h / 2 - bbox[1] + rng.uniform(-3, 3)
    draw.text((cx, cy), str(digit), fill=255, font=font)

    big = big.rotate(rng.uniform(-12, 12), resample=Image.BILINEAR)
    sx = rng.uniform(0.85, 1.1)
    sy = rng.uniform(0.85, 1.1)
    big = big.transform(
        (64, 64),
        Image.AFFINE,
        (1 / sx, 0, 32 * (1 - 1 / sx), 0, 1 / sy, 32 * (1 - 1 / sy)),
        resample=Image.BILINEAR,
    )
    # dilate to pen-stroke thickness before downsampling
    big = big.filter(ImageFilter.MaxFilter(7))
    big = big.filter(ImageFilter.GaussianBlur(0.7))
    img = big.resize((28, 28), Image.LANCZOS)
    arr = np.asarray(img, dtype=np.float64)
    if arr.max() > 0:
        arr = arr * (255.0 / arr.max())
    return arr.astype(np.uint8)


def write_idx(path, images):
    with open(path, "wb") as out:
        out.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            out.write(img.tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--train", type=int, default=5120)
    ap.add_argument("--test", type=int, default=64)
    ap.add_argument("--seed", type=int, default=1234)
    ap.add_argument("--out-train", required=True)
    ap.add_argument("--out-test", required=True)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    fonts = find_fonts()
    write_idx(args.out_train, [render_digit(rng, fonts) for _ in range(args.train)])
    write_idx(args.out_test, [render_digit(rng, fonts) for _ in range(args.test)])
    print(f"wrote {args.train} train / {args.test} test digits")


if __name__ == "__main__":
    main()
