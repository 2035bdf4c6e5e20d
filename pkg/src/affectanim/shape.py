"""Statistical lower-face shape model.

Shapes are ``(36, 2)`` landmark arrays. As flat vectors they are laid out
``x1..x36, y1..y36``. The model is built in two steps: generalized
Procrustes alignment removes translation, scale and rotation, then PCA over
the aligned vectors gives a low dimensional parameter space.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_LANDMARKS = 36
DEFAULT_DIM = 18

# Landmark index ranges and whether each contour is closed.
FACE_GROUPS = {
    "jaw": (tuple(range(0, 11)), False),
    "nose": (tuple(range(11, 16)), False),
    "outer_lip": (tuple(range(16, 28)), True),
    "inner_lip": (tuple(range(28, 36)), True),
}


def face_template(mouth_open: float = 0.0, smile: float = 0.0, jaw_drop: float = 0.0) -> np.ndarray:
    """A stylised lower face in image coordinates (y down), shape (36, 2).

    ``mouth_open`` widens the inner lip gap, ``smile`` raises the lip corners
    and ``jaw_drop`` lowers the chin; all three are in landmark units.
    """
    theta = np.linspace(np.radians(10), np.radians(170), 11)
    jaw = np.stack([60 * np.cos(theta), 30 + (45 + jaw_drop) * np.sin(theta)], axis=1)
    nose = np.array([[-12.0, -30.0], [-6.0, -27.0], [0.0, -25.0], [6.0, -27.0], [12.0, -30.0]])
    phi = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    outer = np.stack([22 * np.cos(phi), 10 + (9 + 0.5 * mouth_open) * np.sin(phi)], axis=1)
    outer[:, 1] -= smile * np.abs(np.cos(phi)) ** 3
    psi = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    inner = np.stack([14 * np.cos(psi), 10 + (1 + mouth_open) * np.sin(psi)], axis=1)
    inner[:, 1] -= smile * np.abs(np.cos(psi)) ** 3
    return np.concatenate([jaw, nose, outer, inner])


def to_vector(shapes: np.ndarray) -> np.ndarray:
    """(..., M, 2) -> (..., 2M) with all x first, then all y."""
    shapes = np.asarray(shapes, dtype=np.float64)
    return np.concatenate([shapes[..., 0], shapes[..., 1]], axis=-1)


def to_shape(vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    m = vectors.shape[-1] // 2
    return np.stack([vectors[..., :m], vectors[..., m:]], axis=-1)


def _check_shape(shape: np.ndarray) -> np.ndarray:
    shape = np.asarray(shape, dtype=np.float64)
    if shape.ndim != 2 or shape.shape[1] != 2:
        raise ValueError(f"expected an (M, 2) landmark array, got {shape.shape}")
    if not np.all(np.isfinite(shape)):
        raise ValueError("landmarks must be finite")
    return shape


def normalize_shape(shape: np.ndarray) -> np.ndarray:
    """Centre at the origin and scale to unit Frobenius norm."""
    centred = shape - shape.mean(axis=0)
    size = np.linalg.norm(centred)
    if size < 1e-12:
        raise ValueError("degenerate shape: all landmarks coincide")
    return centred / size


def rotation_onto(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Proper rotation R (det +1) minimising ||src @ R - dst||."""
    u, _, vt = np.linalg.svd(src.T @ dst)
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    return u @ np.diag([1.0, d]) @ vt


def _canonical_rotation(ref: np.ndarray) -> np.ndarray:
    # Intrinsic frame: major principal axis along x, 180-degree ambiguity fixed
    # by the sign of the dominant third moment.
    evals, evecs = np.linalg.eigh(ref.T @ ref)
    major = evecs[:, np.argmax(evals)]
    c, s = major
    rot = np.array([[c, -s], [s, c]])
    if np.linalg.det(rot) < 0:
        rot[:, 1] *= -1
    turned = ref @ rot
    skew = (turned**3).sum(axis=0)
    axis = int(np.argmax(np.abs(skew)))
    if skew[axis] < 0:
        rot = -rot
    return rot


@dataclass
class AlignmentModel:
    reference: np.ndarray
    n_iter: int = 0
    converged: bool = True
    displacement: float = 0.0

    def align(self, shapes: np.ndarray) -> np.ndarray:
        """Align one ``(M, 2)`` shape or a stack ``(n, M, 2)`` onto the reference."""
        shapes = np.asarray(shapes, dtype=np.float64)
        if shapes.ndim == 2:
            return self._align_one(shapes)
        return np.stack([self._align_one(s) for s in shapes])

    def _align_one(self, shape: np.ndarray) -> np.ndarray:
        s = normalize_shape(_check_shape(shape))
        return s @ rotation_onto(s, self.reference)

    def to_dict(self) -> dict:
        return {
            "reference": self.reference.tolist(),
            "n_iter": self.n_iter,
            "converged": self.converged,
            "displacement": self.displacement,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlignmentModel":
        return cls(np.asarray(d["reference"], dtype=np.float64), d["n_iter"], d["converged"], d["displacement"])


def gpa_align(shapes, tol: float = 1e-10, max_iter: int = 100):
    """Generalized Procrustes analysis.

    Parameters
    ----------
    shapes : sequence of (M, 2) arrays
    tol : float
        Stop once the mean shape moves less than this between iterations.
    max_iter : int

    Returns
    -------
    (AlignmentModel, ndarray)
        The fitted reference and the aligned shapes, shape ``(n, M, 2)``.
    """
    shapes = [normalize_shape(_check_shape(s)) for s in shapes]
    if not shapes:
        raise ValueError("gpa_align needs at least one shape")
    ref = shapes[0]
    aligned = np.stack(shapes)
    converged = False
    moved = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        aligned = np.stack([s @ rotation_onto(s, ref) for s in shapes])
        new_ref = normalize_shape(aligned.mean(axis=0))
        new_ref = new_ref @ rotation_onto(new_ref, ref)
        moved = float(np.linalg.norm(new_ref - ref))
        ref = new_ref
        if moved < tol:
            converged = True
            break
    aligned = np.stack([s @ rotation_onto(s, ref) for s in shapes])
    rot = _canonical_rotation(ref)
    model = AlignmentModel(ref @ rot, n_iter=it, converged=converged, displacement=moved)
    return model, aligned @ rot


@dataclass
class ShapeModelPCA:
    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    variance_covered: float
    alignment: AlignmentModel | None = None

    @property
    def n_params(self) -> int:
        return self.basis.shape[1]

    def project(self, shapes: np.ndarray) -> np.ndarray:
        """Shapes ``(..., M, 2)`` or vectors ``(..., 2M)`` -> parameters ``(..., D)``."""
        v = np.asarray(shapes, dtype=np.float64)
        if v.ndim >= 2 and v.shape[-1] == 2 and v.shape[-2] * 2 == self.mean.size:
            v = to_vector(v)
        if v.shape[-1] != self.mean.size:
            raise ValueError(f"expected shape vectors of length {self.mean.size}, got {v.shape[-1]}")
        return (v - self.mean) @ self.basis

    def reconstruct(self, params: np.ndarray) -> np.ndarray:
        """Parameters ``(..., D)`` -> landmark shapes ``(..., M, 2)``."""
        p = np.asarray(params, dtype=np.float64)
        if p.shape[-1] != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {p.shape[-1]}")
        return to_shape(self.mean + p @ self.basis.T)

    def to_dict(self) -> dict:
        return {
            "D": self.n_params,
            "mean": self.mean.tolist(),
            "basis": self.basis.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "variance_covered": self.variance_covered,
            "alignment": None if self.alignment is None else self.alignment.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeModelPCA":
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            basis=np.asarray(d["basis"], dtype=np.float64).reshape(len(d["mean"]), d["D"]),
            eigenvalues=np.asarray(d["eigenvalues"], dtype=np.float64),
            variance_covered=float(d["variance_covered"]),
            alignment=None if d.get("alignment") is None else AlignmentModel.from_dict(d["alignment"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ShapeModelPCA":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_pca(aligned, n_params: int | None = DEFAULT_DIM, variance_target: float | None = None,
            alignment: AlignmentModel | None = None) -> ShapeModelPCA:
    """PCA over aligned shapes; keep ``n_params`` components, or the fewest reaching ``variance_target``."""
    x = np.asarray(aligned, dtype=np.float64)
    if x.ndim == 3:
        x = to_vector(x)
    n, dim = x.shape
    mean = x.mean(axis=0)
    cov = np.cov(x, rowvar=False) if n > 1 else np.zeros((dim, dim))
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = evals.sum()
    cum = np.cumsum(evals) / total if total > 0 else np.ones(dim)
    if variance_target is not None:
        d = int(np.searchsorted(cum, variance_target - 1e-12) + 1)
        d = min(d, dim)
    else:
        d = int(n_params)
    if not 1 <= d <= dim:
        raise ValueError(f"number of components must be in [1, {dim}], got {d}")
    if n < d + 1:
        raise ValueError(f"PCA with {d} components needs at least {d + 1} shapes, got {n}")
    covered = float(cum[d - 1])
    return ShapeModelPCA(mean, evecs[:, :d].copy(), evals[:d].copy(), covered, alignment)


def fit_shape_model(shapes, n_params: int | None = DEFAULT_DIM, variance_target: float | None = None,
                    tol: float = 1e-10, max_iter: int = 100) -> ShapeModelPCA:
    alignment, aligned = gpa_align(shapes, tol=tol, max_iter=max_iter)
    return fit_pca(aligned, n_params, variance_target, alignment)


def upsample_track(track: np.ndarray, factor: int = 4) -> np.ndarray:
    """Cubic (Catmull-Rom) upsampling along axis 0 by an integer factor.

    The output has ``factor * (n - 1) + 1`` samples and passes through every
    input sample. End tangents come from linearly extrapolated ghost samples,
    so linear motion is reproduced exactly. Tracks of 2 or 3 samples fall
    back to linear interpolation.
    """
    p = np.asarray(track, dtype=np.float64)
    n = p.shape[0]
    if n < 2:
        raise ValueError("upsampling needs at least 2 frames")
    t = (np.arange(factor) / factor).reshape((-1,) + (1,) * (p.ndim - 1))
    if n < 4:
        seg = p[:-1, None] * (1 - t) + p[1:, None] * t
    else:
        ext = np.concatenate([2 * p[:1] - p[1:2], p, 2 * p[-1:] - p[-2:-1]])
        p0, p1, p2, p3 = ext[:-3, None], ext[1:-2, None], ext[2:-1, None], ext[3:, None]
        seg = 0.5 * (
            2 * p1
            + (p2 - p0) * t
            + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t**2
            + (3 * p1 - p0 - 3 * p2 + p3) * t**3
        )
    out = seg.reshape((-1,) + p.shape[1:])
    return np.concatenate([out, p[-1:]])


def shape_window(params: np.ndarray, j: int, kv: int) -> np.ndarray:
    """Concatenated parameter blocks for frames j - kv//2 .. j + kv//2 (replicate padding)."""
    if kv <= 0 or kv % 2 == 0:
        raise ValueError(f"window length must be a positive odd integer, got {kv}")
    params = np.asarray(params)
    n = len(params)
    if not 0 <= j < n:
        raise IndexError(f"frame {j} out of range for sequence of length {n}")
    half = kv // 2
    rows = np.clip(np.arange(j - half, j + half + 1), 0, n - 1)
    return params[rows].reshape(-1)


def shape_windows(params: np.ndarray, kv: int) -> np.ndarray:
    from affectanim.audio import window_indices

    params = np.asarray(params)
    idx = window_indices(len(params), kv)
    return params[idx].reshape(len(params), -1)


def read_landmarks_csv(path) -> np.ndarray:
    """Rows of ``frame_index, x1, y1, ..., x36, y36``; returns (n_frames, 36, 2)."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                values = [float(v) for v in row]
            except ValueError:
                if i == 0:
                    continue  # header
                raise ValueError(f"{path}: non-numeric value on line {i + 1}")
            if len(values) != 1 + 2 * N_LANDMARKS:
                raise ValueError(f"{path}: line {i + 1} has {len(values)} fields, expected {1 + 2 * N_LANDMARKS}")
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no landmark frames")
    data = np.asarray(rows)
    order = np.argsort(data[:, 0], kind="stable")
    return data[order, 1:].reshape(-1, N_LANDMARKS, 2)


def write_landmarks_csv(path, shapes: np.ndarray, fmt: str = "%.6f") -> None:
    shapes = np.asarray(shapes)
    header = ["frame"] + [f"{a}{i}" for i in range(1, shapes.shape[1] + 1) for a in ("x", "y")]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for j, s in enumerate(shapes):
            fh.write(str(j) + "," + ",".join(fmt % v for v in s.reshape(-1)) + "\n")
