"""
Grid representation of state sets.

A GridGeometry splits a domain box into equal cells. Cell i along a dimension owns [lower + i*w, lower + (i+1)*w);
points and box faces are snapped by SNAP cell widths so that exactly aligned images do not spill into a neighbour.
A StateSet is a boolean mask over the cells with an approximation tag and metadata.
"""

import itertools
import json

import numpy as np

from .enums import Approximation
from .utils import check_enum

SNAP = 1e-9
FORMAT_HEADER = "pyScenarioCoverage-stateset"
FORMAT_VERSION = 1


class GridGeometry:
    """
    Regular grid over a domain box.

    Parameters
    ----------
    lower, upper: list[float]
        Domain box.
    counts: list[int]
        Number of cells per dimension.
    names: list[str]
        Coordinate names, x0, x1, ... by default.
    """

    def __init__(self, lower, upper, counts, names: list[str] = None):
        self.lower = np.array(lower, dtype=float).reshape(-1)
        self.upper = np.array(upper, dtype=float).reshape(-1)
        self.counts = np.array(counts, dtype=np.int64).reshape(-1)
        n = self.lower.size
        if n < 1 or self.upper.size != n or self.counts.size != n:
            raise ValueError(f"Error : grid needs matching bounds and counts, given : {lower}, {upper}, {counts}")
        if n > 5:
            raise ValueError(f"Error : grids have at most 5 dimensions, given : {n}")
        if np.any(~np.isfinite(self.lower)) or np.any(~np.isfinite(self.upper)) or np.any(self.lower >= self.upper):
            raise ValueError(f"Error : grid needs finite lower < upper, given : {lower}, {upper}")
        if np.any(self.counts < 1):
            raise ValueError(f"Error : grid cell counts must be >= 1, given : {counts}")
        self.widths = (self.upper - self.lower) / self.counts
        self.names = list(names) if names is not None else [f"x{i}" for i in range(n)]
        if len(self.names) != n:
            raise ValueError(f"Error : grid needs {n} names, given : {self.names}")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.counts)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    def __eq__(self, other):
        return (
            isinstance(other, GridGeometry)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and np.array_equal(self.counts, other.counts)
        )

    def __hash__(self):
        return hash((tuple(self.lower), tuple(self.upper), tuple(self.counts)))

    def scaled(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / self.widths

    def cell_of(self, points) -> tuple[np.ndarray, np.ndarray]:
        """
        Cell index of every point.

        Returns
        -------
        (indices, inside): indices of shape (k, n), clipped into the grid, and whether each point lies in the domain.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.floor(self.scaled(points) + SNAP).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < self.counts), axis=1)
        return np.clip(idx, 0, self.counts - 1), inside

    def index_ranges(self, lo, hi) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Inclusive index ranges of the cells met by boxes [lo, hi).

        Returns
        -------
        (a, b, escaped, outside): clipped ranges of shape (k, n); escaped marks boxes reaching past the grid,
        outside marks boxes that meet no cell at all.
        """
        return self.clip_ranges(*self.raw_index_ranges(lo, hi))

    def raw_index_ranges(self, lo, hi) -> tuple[np.ndarray, np.ndarray]:
        """Unclipped inclusive index ranges of boxes [lo, hi); may lie partly outside the grid."""
        y_lo, y_hi = self.scaled(np.atleast_2d(lo)), self.scaled(np.atleast_2d(hi))
        a = np.floor(y_lo + SNAP).astype(np.int64)
        b = np.maximum(a, np.ceil(y_hi - SNAP).astype(np.int64) - 1)
        return a, b

    def clip_ranges(self, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        escaped = np.any((a < 0) | (b > self.counts - 1), axis=1)
        outside = np.any((b < 0) | (a > self.counts - 1), axis=1)
        return np.clip(a, 0, self.counts - 1), np.clip(b, 0, self.counts - 1), escaped, outside

    def cell_bounds(self, idx) -> tuple[np.ndarray, np.ndarray]:
        idx = np.atleast_2d(idx)
        lo = self.lower + idx * self.widths
        return lo, lo + self.widths

    def refine(self, factor: int = 2) -> "GridGeometry":
        return GridGeometry(self.lower, self.upper, self.counts * factor, self.names)

    def to_dict(self) -> dict:
        return {
            "names": self.names,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "counts": self.counts.tolist(),
        }


def rasterize(geometry: GridGeometry, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Boolean mask of the union of the inclusive index boxes [a, b] (an n-dimensional difference array).
    """
    diff = np.zeros(tuple(c + 1 for c in geometry.shape), dtype=np.int64)
    if len(a):
        for corner in itertools.product((0, 1), repeat=geometry.dim):
            pos = np.where(np.array(corner, dtype=bool), b + 1, a)
            np.add.at(diff, tuple(pos.T), (-1) ** sum(corner))
    for axis in range(geometry.dim):
        diff = np.cumsum(diff, axis=axis)
    return diff[tuple(slice(0, c) for c in geometry.shape)] > 0


def summed_area(mask: np.ndarray) -> np.ndarray:
    table = np.zeros(tuple(s + 1 for s in mask.shape), dtype=np.int64)
    inner = mask.astype(np.int64)
    for axis in range(mask.ndim):
        inner = np.cumsum(inner, axis=axis)
    table[tuple(slice(1, None) for _ in mask.shape)] = inner
    return table


def box_counts(table: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Number of set cells inside each inclusive index box [a, b], from a summed-area table."""
    n = a.shape[1]
    total = np.zeros(a.shape[0], dtype=np.int64)
    for corner in itertools.product((0, 1), repeat=n):
        pos = np.where(np.array(corner, dtype=bool), b + 1, a)
        total += (-1) ** (n - sum(corner)) * table[tuple(pos.T)]
    return total


def combine_approx(first: Approximation, second: Approximation) -> Approximation:
    if first == second:
        return first
    if first == Approximation.Exact:
        return second
    if second == Approximation.Exact:
        return first
    return Approximation.Heuristic


class StateSet:
    """
    Finite union of grid cells.

    Parameters
    ----------
    geometry: GridGeometry
        Grid the cells live on.
    mask: np.ndarray
        Boolean array of shape geometry.shape, empty set by default.
    approx: Approximation | str
        Over, Under, Exact (built directly from cells) or Heuristic.
    metadata: dict
        Free-form flags, e.g. "clipped" when a computation left the grid.
    """

    def __init__(
        self, geometry: GridGeometry, mask=None, approx: Approximation | str = Approximation.Exact, metadata=None
    ):
        self.geometry = geometry
        if mask is None:
            mask = np.zeros(geometry.shape, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != geometry.shape:
            raise ValueError(f"Error : mask shape must be {geometry.shape}, given : {mask.shape}")
        self.mask = mask
        self.approx = check_enum(approx, Approximation, "approx")
        self.metadata = dict(metadata) if metadata else {}

    @classmethod
    def empty(cls, geometry: GridGeometry, approx=Approximation.Exact) -> "StateSet":
        return cls(geometry, None, approx)

    @classmethod
    def full(cls, geometry: GridGeometry, approx=Approximation.Exact) -> "StateSet":
        return cls(geometry, np.ones(geometry.shape, dtype=bool), approx)

    @classmethod
    def from_box(cls, geometry: GridGeometry, lower, upper, approx=Approximation.Exact) -> "StateSet":
        """
        Cells met by the box [lower, upper). A degenerate box selects the cell owning its point. Parts of the box
        outside the grid are dropped and flagged as "clipped".
        """
        lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
        if np.any(lower > upper):
            raise ValueError(f"Error : box needs lower <= upper, given : {lower}, {upper}")
        a, b, escaped, outside = geometry.index_ranges(lower, upper)
        mask = rasterize(geometry, a[~outside], b[~outside])
        return cls(geometry, mask, approx, {"clipped": bool(escaped.any())})

    @classmethod
    def from_points(cls, geometry: GridGeometry, points, approx=Approximation.Exact) -> "StateSet":
        idx, inside = geometry.cell_of(points)
        mask = np.zeros(geometry.shape, dtype=bool)
        mask[tuple(idx[inside].T)] = True
        return cls(geometry, mask, approx, {"clipped": bool((~inside).any())})

    @classmethod
    def from_cells(cls, geometry: GridGeometry, indices, approx=Approximation.Exact) -> "StateSet":
        indices = np.asarray(indices, dtype=np.int64).reshape(-1, geometry.dim)
        if np.any(indices < 0) or np.any(indices >= geometry.counts):
            raise ValueError("Error : cell indices outside the grid")
        mask = np.zeros(geometry.shape, dtype=bool)
        mask[tuple(indices.T)] = True
        return cls(geometry, mask, approx)

    @property
    def cells(self) -> np.ndarray:
        return np.argwhere(self.mask)

    @property
    def n_cells(self) -> int:
        return int(self.mask.sum())

    @property
    def is_empty(self) -> bool:
        return not self.mask.any()

    @property
    def clipped(self) -> bool:
        return bool(self.metadata.get("clipped", False))

    def __eq__(self, other):
        return isinstance(other, StateSet) and self.geometry == other.geometry and np.array_equal(self.mask, other.mask)

    def _check_same_grid(self, other: "StateSet"):
        if self.geometry != other.geometry:
            raise ValueError("State sets live on different grids.")

    def _merged_metadata(self, other: "StateSet") -> dict:
        metadata = {**other.metadata, **self.metadata}
        metadata["clipped"] = self.clipped or other.clipped
        return metadata

    def union(self, other: "StateSet") -> "StateSet":
        self._check_same_grid(other)
        approx = combine_approx(self.approx, other.approx)
        return StateSet(self.geometry, self.mask | other.mask, approx, self._merged_metadata(other))

    def intersection(self, other: "StateSet") -> "StateSet":
        self._check_same_grid(other)
        approx = combine_approx(self.approx, other.approx)
        return StateSet(self.geometry, self.mask & other.mask, approx, self._merged_metadata(other))

    def difference(self, other: "StateSet") -> "StateSet":
        self._check_same_grid(other)
        approx = combine_approx(self.approx, other.approx)
        return StateSet(self.geometry, self.mask & ~other.mask, approx, self._merged_metadata(other))

    def complement(self, approx: Approximation = None) -> "StateSet":
        flipped = {
            Approximation.Over: Approximation.Under,
            Approximation.Under: Approximation.Over,
        }.get(self.approx, self.approx)
        return StateSet(self.geometry, ~self.mask, approx or flipped, self.metadata)

    def issubset(self, other: "StateSet") -> bool:
        self._check_same_grid(other)
        return not np.any(self.mask & ~other.mask)

    def intersects(self, other: "StateSet") -> bool:
        self._check_same_grid(other)
        return bool(np.any(self.mask & other.mask))

    def contains(self, point) -> bool:
        idx, inside = self.geometry.cell_of(point)
        return bool(inside[0] and self.mask[tuple(idx[0])])

    def contains_points(self, points) -> np.ndarray:
        idx, inside = self.geometry.cell_of(points)
        return inside & self.mask[tuple(idx.T)]

    def contains_cell(self, index) -> bool:
        return bool(self.mask[tuple(index)])

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray] | None:
        if self.is_empty:
            return None
        cells = self.cells
        lo, _ = self.geometry.cell_bounds(cells.min(axis=0))
        _, hi = self.geometry.cell_bounds(cells.max(axis=0))
        return lo[0], hi[0]

    def refine(self, factor: int = 2) -> "StateSet":
        mask = self.mask
        for axis in range(self.geometry.dim):
            mask = np.repeat(mask, factor, axis=axis)
        return StateSet(self.geometry.refine(factor), mask, self.approx, self.metadata)

    def to_text(self, config_hash: str = "") -> str:
        """
        Line-oriented export: a geometry header followed by one line of cell indices per cell (C order).
        The layout is documented in docs/file_formats.md.
        """
        g = self.geometry
        lines = [
            f"{FORMAT_HEADER} {FORMAT_VERSION}",
            f"config_hash {config_hash or '-'}",
            f"dims {g.dim}",
            "names " + " ".join(g.names),
            "lower " + " ".join(repr(float(v)) for v in g.lower),
            "upper " + " ".join(repr(float(v)) for v in g.upper),
            "counts " + " ".join(str(int(c)) for c in g.counts),
            f"approx {self.approx.value}",
        ]
        for key in sorted(self.metadata):
            lines.append(f"meta {key} {json.dumps(self.metadata[key], sort_keys=True)}")
        cells = self.cells
        lines.append(f"cells {len(cells)}")
        lines.extend(" ".join(str(int(i)) for i in cell) for cell in cells)
        lines.append("end")
        return "\n".join(lines) + "\n"

    def export(self, path: str, config_hash: str = ""):
        with open(path, "w") as f:
            f.write(self.to_text(config_hash))

    @classmethod
    def from_text(cls, text: str) -> "StateSet":
        lines = [line.strip() for line in text.splitlines() if line.strip()]
        header = lines[0].split()
        if header[0] != FORMAT_HEADER or int(header[1]) != FORMAT_VERSION:
            raise ValueError(f"Not a state set export (version {FORMAT_VERSION}), given header : {lines[0]}")
        fields, metadata, i = {}, {}, 1
        while not lines[i].startswith("cells "):
            key, _, value = lines[i].partition(" ")
            if key == "meta":
                meta_key, _, meta_value = value.partition(" ")
                metadata[meta_key] = json.loads(meta_value)
            else:
                fields[key] = value
            i += 1
        n_cells = int(lines[i].split()[1])
        geometry = GridGeometry(
            [float(v) for v in fields["lower"].split()],
            [float(v) for v in fields["upper"].split()],
            [int(v) for v in fields["counts"].split()],
            fields["names"].split(),
        )
        indices = [[int(v) for v in line.split()] for line in lines[i + 1 : i + 1 + n_cells]]
        state_set = cls.from_cells(geometry, indices if indices else np.zeros((0, geometry.dim)), fields["approx"])
        state_set.metadata = metadata
        return state_set

    @classmethod
    def load(cls, path: str) -> "StateSet":
        with open(path) as f:
            return cls.from_text(f.read())
