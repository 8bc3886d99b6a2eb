"""Visual-word codebook (K-means) and descriptor-to-token mapping.

Binary formats, all little-endian::

    descriptors: b"NTDE" u32 version=1, u32 N, u32 dim,
                 N x (f32 x, f32 y, f32 width, f32 height, dim x f32)
    codebook:    b"NTCB" u32 version=1, u32 K, u32 dim,
                 K*dim f64 centroids, f64 final objective
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from nadetopic.errors import BoundsError, FormatError, ShapeMismatchError, ValidationError

DESCRIPTOR_MAGIC = b"NTDE"
CODEBOOK_MAGIC = b"NTCB"
FORMAT_VERSION = 1

# rows per block when computing point-to-centroid distances
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class Codebook:
    centroids: np.ndarray  # K x dim
    objective: float
    history: tuple = field(default=(), compare=False)

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """Descriptors of one image set, with pixel position and image size per row."""

    data: np.ndarray    # N x dim
    x: np.ndarray
    y: np.ndarray
    width: np.ndarray
    height: np.ndarray

    def __post_init__(self):
        n = self.data.shape[0]
        if self.data.ndim != 2 or n < 1:
            raise ValidationError("descriptor matrix must be N x dim with N >= 1")
        for name in ("x", "y", "width", "height"):
            if getattr(self, name).shape != (n,):
                raise ShapeMismatchError(f"{name} must have {n} entries")
        if np.any((self.x < 0) | (self.x >= self.width) |
                  (self.y < 0) | (self.y >= self.height)):
            raise BoundsError("descriptor coordinates outside their image")


def _sq_dists(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances, computed by differences."""
    out = np.empty((data.shape[0], centroids.shape[0]))
    for lo in range(0, data.shape[0], _CHUNK):
        block = data[lo:lo + _CHUNK]
        diff = block[:, None, :] - centroids[None, :, :]
        out[lo:lo + _CHUNK] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def _assign(data, centroids):
    dist = _sq_dists(data, centroids)
    labels = np.argmin(dist, axis=1)
    return labels, dist[np.arange(len(data)), labels]


def _kmeans_pp(data: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centroids = np.empty((K, data.shape[1]))
    centroids[0] = data[rng.integers(n)]
    closest = _sq_dists(data, centroids[:1])[:, 0]
    for k in range(1, K):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centroids[k] = data[idx]
        closest = np.minimum(closest, _sq_dists(data, centroids[k:k + 1])[:, 0])
    return centroids


def kmeans_fit(data, K: int, seed: int = 0, max_iters: int = 100,
               rel_tol: float = 1e-6) -> Codebook:
    """Lloyd's algorithm from a seeded k-means++ start.

    Empty clusters are refilled with the point currently farthest from its
    centroid. Iteration stops when the objective improves by less than
    ``rel_tol`` relative to its previous value, or after ``max_iters``
    updates. ``Codebook.history`` holds the objective after each assignment
    and never increases.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValidationError("data must be an N x dim matrix")
    n = data.shape[0]
    if K < 1 or n < K:
        raise ValidationError(f"need N >= K >= 1 points, got N={n}, K={K}")
    if max_iters < 1 or rel_tol < 0:
        raise ValidationError("max_iters must be >= 1 and rel_tol >= 0")
    if not np.all(np.isfinite(data)):
        raise ValidationError("data contains non-finite values")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(data, K, rng)
    labels, dist = _assign(data, centroids)
    objective = float(dist.sum())
    history = [objective]
    for _ in range(max_iters):
        new = np.empty_like(centroids)
        counts = np.bincount(labels, minlength=K)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, data)
        taken = set()
        for k in range(K):
            if counts[k]:
                new[k] = sums[k] / counts[k]
                continue
            # farthest point not already used to refill another cluster
            for idx in np.argsort(-dist, kind="stable"):
                if int(idx) not in taken:
                    break
            taken.add(int(idx))
            new[k] = data[idx]
        new_labels, new_dist = _assign(data, new)
        new_objective = float(new_dist.sum())
        if new_objective > objective:
            # only reachable through rounding at convergence
            break
        improvement = objective - new_objective
        centroids, labels, dist, objective = new, new_labels, new_dist, new_objective
        history.append(objective)
        if improvement <= rel_tol * history[-2]:
            break
    centroids.setflags(write=False)
    return Codebook(centroids=centroids, objective=objective, history=tuple(history))


def quantize(codebook: Codebook, descriptor) -> int:
    """Index of the nearest centroid; ties go to the lowest index."""
    descriptor = np.asarray(descriptor, dtype=np.float64)
    if descriptor.shape != (codebook.dim,):
        raise ShapeMismatchError(
            f"descriptor has shape {descriptor.shape}, codebook dim is {codebook.dim}")
    diff = codebook.centroids - descriptor
    return int(np.argmin(np.einsum("kd,kd->k", diff, diff)))


def quantize_all(codebook: Codebook, data) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != codebook.dim:
        raise ShapeMismatchError(f"descriptors must be N x {codebook.dim}")
    return _assign(data, codebook.centroids)[0]


def assign_region(x: float, y: float, width: float, height: float,
                  grid_x: int = 2, grid_y: int = 2) -> int:
    """Row-major cell index of pixel (x, y) in a grid_x by grid_y partition."""
    if not (0 <= x < width and 0 <= y < height):
        raise BoundsError(f"pixel ({x}, {y}) outside a {width}x{height} image")
    if grid_x < 1 or grid_y < 1:
        raise ValidationError("grid dimensions must be >= 1")
    col = min(int(x * grid_x // width), grid_x - 1)
    row = min(int(y * grid_y // height), grid_y - 1)
    return row * grid_x + col


def descriptors_to_tokens(codebook: Codebook, descriptors: DescriptorSet,
                          grid_x: int = 2, grid_y: int = 2) -> list[tuple[int, int]]:
    words = quantize_all(codebook, descriptors.data)
    return [(int(w), assign_region(float(x), float(y), float(wd), float(ht), grid_x, grid_y))
            for w, x, y, wd, ht in zip(words, descriptors.x, descriptors.y,
                                       descriptors.width, descriptors.height)]


# -- file formats ---------------------------------------------------------------

def _read_header(blob: bytes, magic: bytes, path) -> tuple[int, int]:
    if len(blob) < 16 or blob[:4] != magic:
        raise FormatError(f"{path}: bad magic, expected {magic.decode()}")
    version, a, b = struct.unpack_from("<III", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return a, b


def save_descriptors(descriptors: DescriptorSet, path) -> None:
    n, dim = descriptors.data.shape
    rec = np.empty((n, 4 + dim), dtype="<f4")
    rec[:, 0], rec[:, 1] = descriptors.x, descriptors.y
    rec[:, 2], rec[:, 3] = descriptors.width, descriptors.height
    rec[:, 4:] = descriptors.data
    with open(path, "wb") as fh:
        fh.write(DESCRIPTOR_MAGIC + struct.pack("<III", FORMAT_VERSION, n, dim))
        fh.write(rec.tobytes())


def load_descriptors(path) -> DescriptorSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    n, dim = _read_header(blob, DESCRIPTOR_MAGIC, path)
    expected = 16 + 4 * n * (4 + dim)
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    rec = np.frombuffer(blob, dtype="<f4", offset=16).reshape(n, 4 + dim).astype(np.float64)
    return DescriptorSet(data=rec[:, 4:], x=rec[:, 0], y=rec[:, 1],
                         width=rec[:, 2], height=rec[:, 3])


def save_codebook(codebook: Codebook, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CODEBOOK_MAGIC + struct.pack("<III", FORMAT_VERSION, codebook.K, codebook.dim))
        fh.write(np.ascontiguousarray(codebook.centroids, dtype="<f8").tobytes())
        fh.write(struct.pack("<d", codebook.objective))


def load_codebook(path) -> Codebook:
    with open(path, "rb") as fh:
        blob = fh.read()
    K, dim = _read_header(blob, CODEBOOK_MAGIC, path)
    expected = 16 + 8 * K * dim + 8
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    centroids = np.frombuffer(blob, dtype="<f8", count=K * dim, offset=16)
    centroids = centroids.reshape(K, dim).astype(np.float64)
    (objective,) = struct.unpack_from("<d", blob, 16 + 8 * K * dim)
    if not np.all(np.isfinite(centroids)):
        raise FormatError(f"{path}: non-finite centroid")
    centroids.setflags(write=False)
    return Codebook(centroids=centroids, objective=objective)
