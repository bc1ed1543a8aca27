"""
Bilinear sampling with an out-of-bounds validity mask
"""

from typing import Tuple

import numpy as np

from mvsmamba.numeric.tensor import Function, Tensor
from mvsmamba.utils.exceptions import ArgumentError


class BilinearSample(Function):
    """
    grid: [C, H, W], coords: [2, *O] as (y, x) in pixel units -> [C, *O]

    A sample is valid when its coordinate lies inside [0, H-1] x [0, W-1];
    invalid samples are exactly zero. The far neighbour is clamped on the last
    row/column where its weight is zero.
    """

    def forward(self, grid, coords):
        _, height, width = grid.shape
        y, x = coords[0], coords[1]
        valid = (
            np.isfinite(y) & np.isfinite(x)
            & (y >= 0) & (y <= height - 1) & (x >= 0) & (x <= width - 1)
        )
        ys = np.where(valid, y, 0.0)
        xs = np.where(valid, x, 0.0)

        y0 = np.clip(np.floor(ys).astype(np.int64), 0, height - 1)
        x0 = np.clip(np.floor(xs).astype(np.int64), 0, width - 1)
        wy = (ys - y0).astype(grid.dtype)
        wx = (xs - x0).astype(grid.dtype)
        y1 = np.minimum(y0 + 1, height - 1)
        x1 = np.minimum(x0 + 1, width - 1)

        v00 = grid[:, y0, x0]
        v01 = grid[:, y0, x1]
        v10 = grid[:, y1, x0]
        v11 = grid[:, y1, x1]

        out = (
            (1 - wy) * (1 - wx) * v00
            + (1 - wy) * wx * v01
            + wy * (1 - wx) * v10
            + wy * wx * v11
        )
        out = np.where(valid, out, 0.0).astype(grid.dtype)

        self.mask = valid
        self.save_for_backward(grid.shape, valid, y0, x0, y1, x1, wy, wx, v00, v01, v10, v11)
        return out

    def backward(self, grad):
        shape, valid, y0, x0, y1, x1, wy, wx, v00, v01, v10, v11 = self.saved
        channels, height, width = shape
        g = np.where(valid, grad, 0.0)

        dgrid = None
        if self.needs_grad[0]:
            corners = (
                (y0, x0, (1 - wy) * (1 - wx)),
                (y0, x1, (1 - wy) * wx),
                (y1, x0, wy * (1 - wx)),
                (y1, x1, wy * wx),
            )
            index = np.concatenate([(yy * width + xx).reshape(-1) for yy, xx, _ in corners])
            dgrid = np.empty((channels, height * width), dtype=grad.dtype)
            for c in range(channels):
                weights = np.concatenate([(g[c] * w).reshape(-1) for _, _, w in corners])
                dgrid[c] = np.bincount(index, weights=weights, minlength=height * width)
            dgrid = dgrid.reshape(shape)

        dcoords = None
        if self.needs_grad[1]:
            dy = (g * ((1 - wx) * (v10 - v00) + wx * (v11 - v01))).sum(axis=0)
            dx = (g * ((1 - wy) * (v01 - v00) + wy * (v11 - v10))).sum(axis=0)
            dcoords = np.stack([dy, dx])
        return dgrid, dcoords


def bilinear_sample(grid, coords) -> Tuple[Tensor, np.ndarray]:
    """
    Sample a [C,H,W] grid at continuous (y, x) coordinates

    Returns:
        Tuple of (samples [C, *O], boolean validity mask [*O])
    """
    if len(grid.shape) != 3 or coords.shape[0] != 2:
        raise ArgumentError(
            "bilinear_sample expects grid[C,H,W] and coords[2,...]",
            details={"grid": list(grid.shape), "coords": list(coords.shape)}
        )
    out, fn = BilinearSample.apply_with_context(grid, coords)
    return out, fn.mask
