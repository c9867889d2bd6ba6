"""Frame rendering to RGB images, PNG export, and animated GIF encoding."""

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ContractError

DEFAULT_SCALE = 6
GIF_COLORS = 256


@dataclass
class FrameImage:
    """8-bit RGB raster; every lattice site is one scale x scale block."""

    pixels: np.ndarray
    scale: int


def render_frame(grid, scale=DEFAULT_SCALE, background=(0, 0, 0)):
    """Occupied sites colored by round(color * 255); empty sites use background."""
    if scale < 1:
        raise ContractError(f"scale must be >= 1, got {scale}")
    occupied = grid.any(axis=2)
    img = np.empty((grid.shape[0], grid.shape[1], 3), dtype=np.uint8)
    img[:] = np.asarray(background, dtype=np.uint8)
    img[occupied] = np.rint(grid[occupied][:, 0:3] * 255.0).astype(np.uint8)
    img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    return FrameImage(pixels=img, scale=scale)


def _to_palette_image(pixels):
    # exact palette when the frame fits in 256 colors, median cut otherwise
    flat = pixels.reshape(-1, 3)
    colors, inverse = np.unique(flat, axis=0, return_inverse=True)
    if len(colors) <= GIF_COLORS:
        im = Image.fromarray(inverse.reshape(pixels.shape[:2]).astype(np.uint8), mode="P")
        palette = np.zeros((GIF_COLORS, 3), dtype=np.uint8)
        palette[:len(colors)] = colors
        im.putpalette(palette.ravel().tolist())
        return im
    return Image.fromarray(pixels).quantize(colors=GIF_COLORS,
                                            method=Image.Quantize.MEDIANCUT)


def encode_animation(frames, path, frame_delay=100):
    """Write frames as an animated GIF with the given per-frame delay (ms)."""
    if not frames:
        raise ContractError("animation needs at least one frame")
    shape = frames[0].pixels.shape
    for f in frames:
        if f.pixels.shape != shape:
            raise ContractError(f"frame shape {f.pixels.shape} differs from {shape}")
    images = [_to_palette_image(f.pixels) for f in frames]
    images[0].save(path, save_all=True, append_images=images[1:],
                   duration=frame_delay, loop=0, optimize=False)


def write_frame_pngs(frames, directory):
    """One PNG per frame, named frame_00000.png, frame_00001.png, ..."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, f in enumerate(frames):
        p = os.path.join(directory, f"frame_{i:05d}.png")
        Image.fromarray(f.pixels).save(p)
        paths.append(p)
    return paths
