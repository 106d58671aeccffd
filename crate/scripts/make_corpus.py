"""Builds the small PNG corpus used by the test suites from scikit-image sample photos."""
import os
import numpy as np
from PIL import Image
import skimage

SRC = os.path.join(os.path.dirname(skimage.__file__), "data")
OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "data")

TRAIN = ["astronaut.png", "coffee.png", "chelsea.png", "motorcycle_left.png",
         "ihc.png", "color.png", "brick.png", "grass.png", "gravel.png", "camera.png"]
VAL = ["rocket.jpg", "hubble_deep_field.jpg", "retina.jpg", "coins.png"]


def load(name, shrink):
    img = Image.open(os.path.join(SRC, name)).convert("RGB")
    w, h = img.size
    return img.resize((w // shrink, h // shrink), Image.LANCZOS)


def crops(img, n, size, rng):
    w, h = img.size
    out = []
    for _ in range(n):
        x = int(rng.integers(0, w - size + 1))
        y = int(rng.integers(0, h - size + 1))
        out.append(img.crop((x, y, x + size, y + size)))
    return out


def main():
    rng = np.random.default_rng(7)
    for split, names, per in (("train", TRAIN, 4), ("val", VAL, 2)):
        d = os.path.join(OUT, "corpus", split)
        os.makedirs(d, exist_ok=True)
        k = 0
        for name in names:
            for c in crops(load(name, 2), per, 96, rng):
                c.save(os.path.join(d, f"{k:03d}.png"))
                k += 1
    d = os.path.join(OUT, "gallery")
    os.makedirs(d, exist_ok=True)
    for i, name in enumerate(["astronaut.png", "coffee.png", "chelsea.png", "rocket.jpg", "retina.jpg", "motorcycle_right.png"]):
        c = crops(load(name, 2), 1, 140, rng)[0].crop((0, 0, 140, 100))
        c.save(os.path.join(d, f"{i:02d}.png"))


if __name__ == "__main__":
    main()
