"""Dataset creation and persistence.

Three sources of SPD matrix sets:

  - synthetic clouds around a chosen center, via the exponential map;
  - covariance descriptors of grayscale texture images, one 5x5 matrix per
    non-overlapping pixel cell;
  - a plain-text matrix-set file format (human-diffable, lossless for
    float64).

The matrix-set format is: a header line ``d N``, then ``N`` blocks of ``d``
lines with ``d`` decimal numbers each, printed with 17 significant digits.
Lines starting with ``#`` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import manifold
from .objective import Dataset


class FormatError(ValueError):
    """A file does not conform to its declared format; carries a byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataError(ValueError):
    """A well-formed file contains invalid data; carries the matrix index."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


def generate_synthetic(
    rng: np.random.Generator,
    n: int,
    dim: int,
    center: np.ndarray,
    spread: float,
) -> Dataset:
    """Sample a cloud of SPD matrices around ``center``.

    Each point is ``exp_map(center, E)`` with ``E`` the symmetric part of a
    matrix of i.i.d. Gaussian entries with standard deviation ``spread``.
    SPD by construction and a pure function of the generator state.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not spread > 0:
        raise ValueError("spread must be positive")
    center = manifold.validate_spd(center, name="center")
    if center.shape != (dim, dim):
        raise ValueError(f"center shape {center.shape} does not match dim {dim}")
    raw = rng.standard_normal((n, dim, dim)) * spread
    tangents = 0.5 * (raw + raw.transpose(0, 2, 1))
    return Dataset(manifold.exp_map(center, tangents))


# ---------------------------------------------------------------------------
# PGM (binary P5) reading
# ---------------------------------------------------------------------------


def _pgm_tokens(blob: bytes, start: int, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated integer tokens, skipping comments."""
    tokens: list[int] = []
    pos = start
    while len(tokens) < count:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(blob):
            raise FormatError("unexpected end of header", pos)
        if blob[pos : pos + 1] == b"#":
            nl = blob.find(b"\n", pos)
            if nl < 0:
                raise FormatError("unterminated comment in header", pos)
            pos = nl + 1
            continue
        end = pos
        while end < len(blob) and not blob[end : end + 1].isspace():
            end += 1
        word = blob[pos:end]
        if not word.isdigit():
            raise FormatError(f"expected integer, found {word!r}", pos)
        tokens.append(int(word))
        pos = end
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) grayscale image with 8-bit depth.

    Returns a ``(height, width)`` uint8 array of intensities.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] != b"P5":
        raise FormatError(f"bad magic {blob[:2]!r}, expected b'P5'", 0)
    (width, height, maxval), pos = _pgm_tokens(blob, 2, 3)
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}, expected 255", pos)
    if pos >= len(blob) or not blob[pos : pos + 1].isspace():
        raise FormatError("missing whitespace after maxval", pos)
    pos += 1
    expected = width * height
    payload = blob[pos : pos + expected]
    if len(payload) != expected:
        raise FormatError(
            f"truncated payload: expected {expected} bytes, found {len(payload)}",
            pos + len(payload),
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def write_pgm(path, image: np.ndarray) -> None:
    """Write a ``(height, width)`` array of 0-255 intensities as binary P5."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("image must be 2-d")
    arr = image.astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


# ---------------------------------------------------------------------------
# Covariance descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Non-overlapping square tiling of an image: cell size must divide both
    image dimensions."""

    width: int
    height: int
    cell: int

    def __post_init__(self):
        if self.cell < 1:
            raise ValueError("cell size must be positive")
        if self.width % self.cell or self.height % self.cell:
            raise ValueError(
                f"cell size {self.cell} does not divide image "
                f"{self.width}x{self.height}"
            )

    @property
    def cells(self) -> int:
        return (self.width // self.cell) * (self.height // self.cell)


def pixel_features(image: np.ndarray) -> np.ndarray:
    """Per-pixel feature vectors: intensity and absolute derivatives.

    Channels: ``[I, |dI/du|, |dI/dv|, |d2I/du2|, |d2I/dv2|]`` where ``u`` is
    the row axis and ``v`` the column axis.  Derivatives use central
    differences with replicated borders.
    """
    img = np.asarray(image, dtype=np.float64)
    pad_u = np.pad(img, ((1, 1), (0, 0)), mode="edge")
    pad_v = np.pad(img, ((0, 0), (1, 1)), mode="edge")
    du = 0.5 * (pad_u[2:, :] - pad_u[:-2, :])
    dv = 0.5 * (pad_v[:, 2:] - pad_v[:, :-2])
    duu = pad_u[2:, :] - 2.0 * img + pad_u[:-2, :]
    dvv = pad_v[:, 2:] - 2.0 * img + pad_v[:, :-2]
    return np.stack([img, np.abs(du), np.abs(dv), np.abs(duu), np.abs(dvv)], axis=-1)


def default_regularization(image: np.ndarray) -> float:
    """Scale-aware ridge: 1e-6 times the mean feature variance over the image
    (absolute 1e-6 for degenerate images with no variation)."""
    feats = pixel_features(image).reshape(-1, 5)
    mean_var = float(np.mean(np.var(feats, axis=0)))
    return 1e-6 * mean_var if mean_var > 0 else 1e-6


def covariance_descriptors(
    image: np.ndarray,
    grid: GridSpec | int,
    regularization: float | None = None,
) -> Dataset:
    """One 5x5 covariance descriptor per grid cell of a grayscale image.

    Each cell's descriptor is the sample covariance of its per-pixel feature
    vectors plus ``regularization`` times the identity; a 128x128 image with
    4x4 cells yields 1024 descriptors.  With zero regularization, a cell of
    constant features has a singular covariance and is rejected by name.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("image must be 2-d")
    h, w = img.shape
    if isinstance(grid, int):
        grid = GridSpec(width=w, height=h, cell=grid)
    if (grid.width, grid.height) != (w, h):
        raise ValueError(
            f"grid is for {grid.width}x{grid.height}, image is {w}x{h}"
        )
    if regularization is None:
        regularization = default_regularization(img)
    if regularization < 0:
        raise ValueError("regularization must be nonnegative")

    g = grid.cell
    feats = pixel_features(img)
    # (rows of cells, g, cols of cells, g, 5) -> (cells, pixels-per-cell, 5)
    tiled = feats.reshape(h // g, g, w // g, g, 5).transpose(0, 2, 1, 3, 4)
    cells = tiled.reshape(-1, g * g, 5)
    centered = cells - cells.mean(axis=1, keepdims=True)
    covs = np.einsum("cpi,cpj->cij", centered, centered) / (g * g - 1)
    covs = covs + regularization * np.eye(5)

    eigvals = np.linalg.eigvalsh(covs)
    bad = np.nonzero(eigvals[:, 0] <= 0.0)[0]
    if bad.size:
        idx = int(bad[0])
        raise DataError(
            f"descriptor for cell {idx} is not positive definite "
            f"(min eigenvalue {eigvals[idx, 0]:.3e}); increase regularization",
            index=idx,
        )
    return Dataset(covs)


# ---------------------------------------------------------------------------
# Matrix-set files
# ---------------------------------------------------------------------------


def write_matrix_set(path, data: Dataset) -> None:
    """Write a dataset in the plain-text matrix-set format (17 significant
    digits, lossless for float64)."""
    lines = [f"{data.dim} {data.n}"]
    for a in data.points:
        for row in a:
            lines.append(" ".join(format(x, ".17g") for x in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix_set(path) -> Dataset:
    """Read a matrix-set file, validating symmetry and positive definiteness.

    Raises :class:`FormatError` for structural problems (bad header, wrong
    counts) and :class:`DataError`, with the matrix index, for entries that
    are not symmetric positive definite.
    """
    with open(path, "r", encoding="ascii") as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise FormatError("empty matrix-set file")
    head = rows[0].split()
    if len(head) != 2:
        raise FormatError(f"header must be 'd N', got {rows[0]!r}")
    try:
        dim, count = int(head[0]), int(head[1])
    except ValueError as exc:
        raise FormatError(f"non-integer header {rows[0]!r}") from exc
    if dim < 1 or count < 1:
        raise FormatError(f"header values must be positive, got {rows[0]!r}")
    body = rows[1:]
    if len(body) != count * dim:
        raise FormatError(
            f"header promises {count} matrices of {dim} rows "
            f"({count * dim} lines), found {len(body)}"
        )
    values = np.empty((count, dim, dim))
    for i in range(count):
        for r in range(dim):
            parts = body[i * dim + r].split()
            if len(parts) != dim:
                raise FormatError(
                    f"matrix {i} row {r} has {len(parts)} entries, expected {dim}"
                )
            try:
                values[i, r] = [float(p) for p in parts]
            except ValueError as exc:
                raise FormatError(f"matrix {i} row {r}: non-numeric entry") from exc
    for i, a in enumerate(values):
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - a.T)) > 1e-12 * scale:
            raise DataError(f"matrix {i} is not symmetric", index=i)
        w = np.linalg.eigvalsh(0.5 * (a + a.T))
        if w[0] <= 0:
            raise DataError(
                f"matrix {i} is not positive definite (min eigenvalue {w[0]:.3e})",
                index=i,
            )
    return Dataset(values)
