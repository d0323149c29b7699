"""Regenerate the bundled 299x299 RGB test images from scikit-image sample data.

Photos are center-cropped to a square and resampled; the "simple" images are
crops with plain backgrounds (sky, table top) that pass the detection
eligibility gate.
"""
import os

import numpy as np
from skimage import data, io, transform

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "testdata", "images")

PHOTOS = {
    "astronaut": (data.astronaut, None),
    "chelsea": (data.chelsea, None),
    "coffee": (data.coffee, None),
    "rocket": (data.rocket, None),
    "ihc": (data.immunohistochemistry, None),
}
SIMPLE = {
    "simple_sky_a": (data.rocket, (0, 142, 166, 308)),
    "simple_sky_b": (data.rocket, (0, 142, 332, 474)),
    "simple_table": (data.coffee, (267, 400, 155, 288)),
}


def prepare(image, box):
    image = image[..., :3].astype(float)
    if box is not None:
        image = image[box[0]:box[1], box[2]:box[3]]
    h, w = image.shape[:2]
    s = min(h, w)
    image = image[(h - s) // 2:(h - s) // 2 + s, (w - s) // 2:(w - s) // 2 + s]
    image = transform.resize(image, (299, 299), anti_aliasing=True, preserve_range=True)
    return np.round(image).clip(0, 255).astype(np.uint8)


def main():
    os.makedirs(OUT, exist_ok=True)
    for table in (PHOTOS, SIMPLE):
        for name, (loader, box) in table.items():
            fname = name if name.startswith("simple") else f"photo_{name}"
            io.imsave(os.path.join(OUT, fname + ".png"), prepare(loader(), box), check_contrast=False)


if __name__ == "__main__":
    main()
