"""8-bit RGB PNG loading/saving and the multiple-of-32 padding helpers.

All in-memory images are float arrays of shape (H, W, C) with values in
[0, 1]. Conversion from 8-bit divides by 255; conversion back rounds
half-up and clamps.
"""

import numpy as np
from PIL import Image

from .errors import ShapeError

# Deepest downsampling factor used by any subnet; spatial dims fed to a
# network must be divisible by this.
SPATIAL_MULTIPLE = 32


def to_float(arr_u8, dtype=np.float64):
    return np.asarray(arr_u8, dtype=dtype) / 255.0


def to_uint8(img):
    """Quantize a [0,1] float image to uint8, rounding half-up."""
    x = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def load_image(path, dtype=np.float64):
    """Load an RGB PNG as (H, W, 3) floats in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return to_float(arr, dtype=dtype)


def load_gray(path, dtype=np.float64):
    """Load a grayscale PNG as (H, W, 1) floats in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.uint8)
    return to_float(arr, dtype=dtype)[..., None]


def save_image(path, img):
    """Save a (H, W, 3) or (H, W, 1) float image in [0, 1] as 8-bit PNG."""
    arr = to_uint8(img)
    if arr.ndim == 3 and arr.shape[2] == 1:
        Image.fromarray(arr[..., 0], mode="L").save(path, format="PNG")
    elif arr.ndim == 3 and arr.shape[2] == 3:
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")
    else:
        raise ShapeError(f"expected (H, W, 1) or (H, W, 3) image, got {arr.shape}")


def pad_to_multiple(img, multiple=SPATIAL_MULTIPLE):
    """Reflect-pad spatial dims up to the next multiple.

    Returns (padded, (pad_h, pad_w)); crop_padding undoes it.
    """
    h, w = img.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return img, (0, 0)
    if ph >= h or pw >= w:
        raise ShapeError(f"image {h}x{w} too small to reflect-pad to multiple of {multiple}")
    padded = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="reflect")
    return padded, (ph, pw)


def crop_padding(img, pads):
    ph, pw = pads
    h = img.shape[0] - ph
    w = img.shape[1] - pw
    return img[:h, :w, :]
