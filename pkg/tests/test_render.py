"""Frame rasterization and GIF encoding."""

import numpy as np
import pytest
from PIL import Image

from gridlife.config import ExperimentConfig
from gridlife.errors import ContractError
from gridlife.render import FrameImage, encode_animation, render_frame, write_frame_pngs
from gridlife.world import init_world


def test_empty_grid_uniform_background():
    img = render_frame(np.zeros((4, 4, 9)), scale=2, background=(10, 20, 30))
    assert img.pixels.shape == (8, 8, 3)
    assert np.all(img.pixels == np.array([10, 20, 30], dtype=np.uint8))


def test_single_white_cell_block_at_origin():
    grid = np.zeros((3, 3, 9))
    grid[0, 0, 0:3] = 1.0  # color (1,1,1) at position (0,0)
    grid[0, 0, 4] = 1.0
    img = render_frame(grid, scale=4)
    assert np.all(img.pixels[0:4, 0:4] == 255)
    rest = img.pixels.copy()
    rest[0:4, 0:4] = 0
    assert np.all(rest == 0)


def test_pixel_count_audit_500_cells():
    cfg = ExperimentConfig(n_cells=500, seed=0, width=100, height=100, epochs=1)
    w = init_world(cfg, 0)
    scale = 3
    img = render_frame(w.grid, scale=scale)
    # colors live in (0,1), so rounding to pure black is the only collision risk
    colors = np.rint(w.grid[w.grid.any(axis=2)][:, 0:3] * 255.0)
    assert not np.any(np.all(colors == 0, axis=1)), "a cell color rounded to background"
    non_background = np.any(img.pixels != 0, axis=2).sum()
    assert non_background == 500 * scale * scale


def test_render_is_pure():
    grid = np.zeros((3, 3, 9))
    grid[1, 2, 0:3] = 0.5
    before = grid.copy()
    a = render_frame(grid, scale=2)
    b = render_frame(grid, scale=2)
    assert np.array_equal(grid, before)
    assert np.array_equal(a.pixels, b.pixels)


def test_render_rejects_bad_scale():
    with pytest.raises(ContractError):
        render_frame(np.zeros((2, 2, 9)), scale=0)


def test_gif_frame_count_31(tmp_path):
    rng = np.random.default_rng(0)
    frames = [FrameImage((rng.uniform(size=(12, 12, 3)) * 255).astype(np.uint8), 1)
              for _ in range(31)]
    path = tmp_path / "a.gif"
    encode_animation(frames, path, frame_delay=50)
    with Image.open(path) as im:
        assert im.n_frames == 31


def test_single_frame_gif(tmp_path):
    frames = [FrameImage(np.zeros((5, 5, 3), dtype=np.uint8), 1)]
    path = tmp_path / "one.gif"
    encode_animation(frames, path)
    with Image.open(path) as im:
        assert im.n_frames == 1


def test_gif_roundtrip_exact_for_small_palettes(tmp_path):
    # frames with <= 256 distinct colors must survive encode/decode bit-exactly
    rng = np.random.default_rng(5)
    frames = []
    for _ in range(3):
        palette = (rng.uniform(size=(40, 3)) * 255).astype(np.uint8)
        idx = rng.integers(0, 40, size=(10, 10))
        frames.append(FrameImage(palette[idx], 1))
    path = tmp_path / "rt.gif"
    encode_animation(frames, path)
    with Image.open(path) as im:
        for i, f in enumerate(frames):
            im.seek(i)
            decoded = np.asarray(im.convert("RGB"))
            assert np.array_equal(decoded, f.pixels)


def test_gif_rejects_empty_and_mismatched(tmp_path):
    with pytest.raises(ContractError):
        encode_animation([], tmp_path / "x.gif")
    frames = [FrameImage(np.zeros((4, 4, 3), dtype=np.uint8), 1),
              FrameImage(np.zeros((5, 5, 3), dtype=np.uint8), 1)]
    with pytest.raises(ContractError):
        encode_animation(frames, tmp_path / "y.gif")


def test_frame_pngs_named_and_zero_padded(tmp_path):
    frames = [FrameImage(np.full((4, 4, 3), i, dtype=np.uint8), 1) for i in range(3)]
    paths = write_frame_pngs(frames, tmp_path / "frames")
    assert [p.split("/")[-1] for p in paths] == ["frame_00000.png", "frame_00001.png",
                                                 "frame_00002.png"]
    for i, p in enumerate(paths):
        with Image.open(p) as im:
            assert np.all(np.asarray(im) == i)
