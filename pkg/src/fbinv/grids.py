"""Uniform sampling grids and grid-sampled functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


class Grid:
    """Symmetric uniform lattice: `points` samples per axis on [-span, span]."""

    def __init__(self, points: int = 9, span: float = 0.08):
        if points < 2:
            raise InputError("grid needs at least 2 points per axis")
        if span <= 0:
            raise InputError("grid span must be positive")
        self.points = int(points)
        self.span = float(span)
        self.axis = np.linspace(-self.span, self.span, self.points)

    @property
    def step(self) -> float:
        return 2.0 * self.span / (self.points - 1)

    def subgrid(self, points: int) -> "Grid":
        return Grid(points, self.span)

    def __repr__(self) -> str:
        return f"Grid(points={self.points}, span={self.span})"


@dataclass
class GridFunction:
    """Scalar function sampled on a tensor lattice."""

    name: str
    axis_names: tuple[str, ...]
    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    weight: int | None = None

    def __post_init__(self):
        if len(self.axis_names) != len(self.axes):
            raise InputError("axis name count does not match axis count")
        shape = tuple(len(a) for a in self.axes)
        if tuple(self.values.shape) != shape:
            raise InputError(
                f"value array shape {self.values.shape} does not match axes {shape}"
            )

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def sup_diff(self, other: "GridFunction") -> float:
        if self.values.shape != other.values.shape:
            raise InputError("grid functions sampled on different lattices")
        return float(np.max(np.abs(self.values - other.values)))

    def interpolator(self):
        """Smooth interpolant; cubic when every axis has enough samples."""
        from scipy.interpolate import RegularGridInterpolator

        method = "cubic" if all(len(a) >= 4 for a in self.axes) else "linear"
        return RegularGridInterpolator(
            self.axes, self.values, method=method, bounds_error=False, fill_value=None
        )


def lattice_points(axes) -> np.ndarray:
    """All lattice coordinates, C-order (last axis fastest), shape (N, len(axes))."""
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def write_csv(gf: GridFunction, path) -> None:
    header = ",".join(list(gf.axis_names) + [gf.name])
    coords = lattice_points(gf.axes)
    flat = gf.values.ravel()
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, val in zip(coords, flat):
            cells = [format(c, ".17g") for c in row] + [format(val, ".17g")]
            fh.write(",".join(cells) + "\n")
