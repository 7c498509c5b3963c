"""Structure bitmaps to fixed-length visual-word histograms.

Pipeline: Gaussian scale space -> difference-of-Gaussian keypoints ->
128-dimensional gradient-histogram descriptors (4x4 blocks x 8 orientation
bins) -> 64-word vocabulary by k-means -> normalized word-frequency vector.
Renders of component structures are high-contrast, so a deliberately lean
detector (no subpixel refinement) is enough; the descriptor geometry is the
standard one.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage


class VisionError(ValueError):
    pass


@dataclass
class VisionConfig:
    octaves: int = 3
    scales_per_octave: int = 3
    sigma0: float = 1.6
    contrast_threshold: float = 0.02
    edge_ratio: float = 10.0
    vocab_size: int = 64
    kmeans_max_iter: int = 300
    kmeans_tol: float = 1e-6


@dataclass
class Keypoint:
    x: float  # original-image pixel coordinates
    y: float
    sigma: float  # scale in original-image pixels
    orientation: float  # radians
    response: float
    octave: int = 0
    level: int = 0
    row: int = 0  # integer position in the octave image
    col: int = 0


@dataclass
class DescriptorSet:
    keypoints: list[Keypoint]
    vectors: np.ndarray  # (n, 128)

    def __len__(self) -> int:
        return len(self.keypoints)


@dataclass
class VisualVocabulary:
    centers: np.ndarray  # (k, 128)
    inertia: float
    inertia_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centers.shape[0]


# ---------------------------------------------------------------------------
# scale space


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps truncated at radius ceil(3 sigma)."""
    if sigma <= 0.0:
        raise VisionError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    t = np.arange(-radius, radius + 1, dtype=float)
    w = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return w / w.sum()


def gaussian_kernel2d(sigma: float, normalized: bool = True) -> np.ndarray:
    """2-D Gaussian on the square support of radius ceil(3 sigma).

    Unnormalized taps carry the 1/(2 pi sigma^2) amplitude of the continuous
    kernel; normalization rescales the sum to one.
    """
    if sigma <= 0.0:
        raise VisionError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    t = np.arange(-radius, radius + 1, dtype=float)
    xx, yy = np.meshgrid(t, t)
    g = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma)
    return g / g.sum() if normalized else g


def blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Convolution with the truncated, renormalized Gaussian; edges replicate.

    Separable passes with normalized 1-D taps equal the square-truncated,
    renormalized 2-D kernel.
    """
    image = np.asarray(image, dtype=float)
    w = gaussian_kernel1d(sigma)
    if min(image.shape) < w.size:
        raise VisionError(f"image {image.shape} smaller than kernel support {w.size}")
    out = scipy.ndimage.correlate1d(image, w, axis=0, mode="nearest")
    return scipy.ndimage.correlate1d(out, w, axis=1, mode="nearest")


def _block_mean_downsample(image: np.ndarray) -> np.ndarray:
    h, w = image.shape
    return image[: h - h % 2, : w - w % 2].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


@dataclass
class ScaleSpace:
    levels: list[list[np.ndarray]]  # per octave, scales_per_octave + 3 blurred images
    sigmas: list[float]  # octave-relative sigma per level
    sigma0: float
    scales_per_octave: int

    @property
    def n_octaves(self) -> int:
        return len(self.levels)


def scale_space(image: np.ndarray, sigma0: float, octaves: int, scales_per_octave: int) -> ScaleSpace:
    """Blurred pyramid; each level filters the octave's (downsampled) base directly.

    Octaves downsample by 2x2 block averaging, which commutes with quarter
    rotations and even-pixel translations.  Octaves whose base falls below
    the widest kernel support are dropped; the input itself being that small
    is an error.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or image.size == 0:
        raise VisionError("expected a nonempty 2-D image")
    if image.max() > 1.0:
        image = image / 255.0
    s = scales_per_octave
    sigmas = [sigma0 * 2.0 ** (k / s) for k in range(s + 3)]
    support = 2 * math.ceil(3.0 * sigmas[-1]) + 1
    if min(image.shape) < support:
        raise VisionError(f"image {image.shape} smaller than kernel support {support}")
    levels = []
    base = image
    for _ in range(octaves):
        if min(base.shape) < support:
            break
        levels.append([blur(base, sg) for sg in sigmas])
        base = _block_mean_downsample(base)
    return ScaleSpace(levels=levels, sigmas=sigmas, sigma0=sigma0, scales_per_octave=s)


# ---------------------------------------------------------------------------
# keypoints


def _gradients(level: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy, gx = np.gradient(level)
    return gx, gy


def _local_extrema(below: np.ndarray, mid: np.ndarray, above: np.ndarray) -> np.ndarray:
    """Strict 3x3x3 extremum mask for the interior of ``mid``."""
    c = mid[1:-1, 1:-1]
    is_max = np.ones_like(c, dtype=bool)
    is_min = np.ones_like(c, dtype=bool)
    for layer in (below, mid, above):
        for dr in (0, 1, 2):
            for dc in (0, 1, 2):
                if layer is mid and dr == 1 and dc == 1:
                    continue
                n = layer[dr : dr + c.shape[0], dc : dc + c.shape[1]]
                is_max &= c > n
                is_min &= c < n
    return is_max | is_min


def detect_keypoints(ss: ScaleSpace, cfg: VisionConfig) -> list[Keypoint]:
    """Difference-of-Gaussian extrema with contrast and edge-ratio gates.

    Each keypoint carries the dominant orientation of a 36-bin, Gaussian
    weighted gradient histogram over its scale-proportional neighborhood;
    points without full descriptor support are dropped here.
    """
    kps: list[Keypoint] = []
    s = ss.scales_per_octave
    edge_limit = (cfg.edge_ratio + 1.0) ** 2 / cfg.edge_ratio
    for o, levels in enumerate(ss.levels):
        dogs = [levels[k + 1] - levels[k] for k in range(len(levels) - 1)]
        grads = {}
        for k in range(1, s + 1):
            mid = dogs[k]
            mask = _local_extrema(dogs[k - 1], mid, dogs[k + 1])
            mask &= np.abs(mid[1:-1, 1:-1]) >= cfg.contrast_threshold
            rows, cols = np.nonzero(mask)
            if rows.size == 0:
                continue
            rows = rows + 1
            cols = cols + 1
            sigma_oct = ss.sigmas[k]
            spacing = sigma_oct / ss.sigma0
            # Half the descriptor window; rotated corners that poke past the
            # border sample replicated edge gradients (consistent with the
            # pyramid's own border handling).
            margin = int(math.ceil(8.0 * spacing)) + 1
            if k not in grads:
                grads[k] = _gradients(levels[k])
            gx, gy = grads[k]
            for r, c in zip(rows.tolist(), cols.tolist()):
                v = mid[r, c]
                dxx = mid[r, c + 1] + mid[r, c - 1] - 2.0 * v
                dyy = mid[r + 1, c] + mid[r - 1, c] - 2.0 * v
                dxy = 0.25 * (mid[r + 1, c + 1] - mid[r + 1, c - 1] - mid[r - 1, c + 1] + mid[r - 1, c - 1])
                det = dxx * dyy - dxy * dxy
                if det <= 0.0 or (dxx + dyy) ** 2 / det > edge_limit:
                    continue
                h, w = mid.shape
                if r < margin or c < margin or r >= h - margin or c >= w - margin:
                    continue
                theta = _dominant_orientation(gx, gy, r, c, sigma_oct)
                scale = 2.0**o
                half = (scale - 1.0) / 2.0
                kps.append(
                    Keypoint(
                        x=c * scale + half,
                        y=r * scale + half,
                        sigma=sigma_oct * scale,
                        orientation=theta,
                        response=float(v),
                        octave=o,
                        level=k,
                        row=r,
                        col=c,
                    )
                )
    return kps


def _dominant_orientation(gx: np.ndarray, gy: np.ndarray, r: int, c: int, sigma_oct: float) -> float:
    sw = 1.5 * sigma_oct
    radius = max(1, int(round(3.0 * sw)))
    h, w = gx.shape
    r0, r1 = max(0, r - radius), min(h, r + radius + 1)
    c0, c1 = max(0, c - radius), min(w, c + radius + 1)
    px = gx[r0:r1, c0:c1]
    py = gy[r0:r1, c0:c1]
    dr = np.arange(r0, r1)[:, None] - r
    dc = np.arange(c0, c1)[None, :] - c
    weight = np.exp(-(dr * dr + dc * dc) / (2.0 * sw * sw))
    mag = np.hypot(px, py) * weight
    ang = np.mod(np.arctan2(py, px), 2.0 * math.pi)
    hist = np.zeros(36)
    bins = np.minimum((ang / (2.0 * math.pi / 36)).astype(int), 35)
    np.add.at(hist, bins.ravel(), mag.ravel())
    b = int(np.argmax(hist))
    return (b + 0.5) * (2.0 * math.pi / 36)


# ---------------------------------------------------------------------------
# descriptors


def describe(gx: np.ndarray, gy: np.ndarray, kp: Keypoint, sigma0: float) -> np.ndarray:
    """128-vector for one keypoint from its level's gradient maps.

    16x16 samples spaced ``sigma/sigma0`` pixels, rotated into the keypoint
    frame, Gaussian weighted (sigma 8 in window units), trilinearly binned
    into 4x4 spatial blocks x 8 orientation bins, then normalized, clamped
    at 0.2 and renormalized.  A gradient-free window yields the zero vector.
    """
    spacing = (kp.sigma / 2.0**kp.octave) / sigma0
    u = np.arange(-7.5, 8.0, 1.0)
    uu, vv = np.meshgrid(u, u)  # window units
    ct, st = math.cos(kp.orientation), math.sin(kp.orientation)
    sx = kp.col + (uu * ct - vv * st) * spacing
    sy = kp.row + (uu * st + vv * ct) * spacing

    h, w = gx.shape
    x0 = np.clip(np.floor(sx).astype(int), 0, w - 2)
    y0 = np.clip(np.floor(sy).astype(int), 0, h - 2)
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)

    def sample(m):
        return (
            m[y0, x0] * (1 - fx) * (1 - fy)
            + m[y0, x0 + 1] * fx * (1 - fy)
            + m[y0 + 1, x0] * (1 - fx) * fy
            + m[y0 + 1, x0 + 1] * fx * fy
        )

    px = sample(gx)
    py = sample(gy)
    mag = np.hypot(px, py)
    if not np.any(mag > 0.0):
        return np.zeros(128)
    ang = np.mod(np.arctan2(py, px) - kp.orientation, 2.0 * math.pi)
    weight = np.exp(-(uu * uu + vv * vv) / (2.0 * 8.0**2))
    contrib = mag * weight

    rbin = vv / 4.0 + 1.5
    cbin = uu / 4.0 + 1.5
    obin = ang / (2.0 * math.pi / 8.0)

    hist = np.zeros((4, 4, 8))
    r0 = np.floor(rbin).astype(int)
    c0 = np.floor(cbin).astype(int)
    o0 = np.floor(obin).astype(int)
    fr = rbin - r0
    fc = cbin - c0
    fo = obin - o0
    for dr_, wr in ((0, 1 - fr), (1, fr)):
        for dc_, wc in ((0, 1 - fc), (1, fc)):
            for do_, wo in ((0, 1 - fo), (1, fo)):
                rr = r0 + dr_
                cc = c0 + dc_
                oo = (o0 + do_) % 8
                valid = (rr >= 0) & (rr < 4) & (cc >= 0) & (cc < 4)
                vals = contrib * wr * wc * wo
                np.add.at(hist, (rr[valid], cc[valid], oo[valid]), vals[valid])
    vec = hist.ravel()
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        return np.zeros(128)
    vec = np.minimum(vec / norm, 0.2)
    return vec / np.linalg.norm(vec)


def extract_descriptors(image: np.ndarray, cfg: VisionConfig) -> DescriptorSet:
    """Full per-image feature extraction: keypoints plus their descriptors."""
    ss = scale_space(image, cfg.sigma0, cfg.octaves, cfg.scales_per_octave)
    kps = detect_keypoints(ss, cfg)
    grads: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    vectors = []
    kept = []
    for kp in kps:
        key = (kp.octave, kp.level)
        if key not in grads:
            grads[key] = _gradients(ss.levels[kp.octave][kp.level])
        gx, gy = grads[key]
        vec = describe(gx, gy, kp, cfg.sigma0)
        kept.append(kp)
        vectors.append(vec)
    mat = np.array(vectors) if vectors else np.zeros((0, 128))
    return DescriptorSet(keypoints=kept, vectors=mat)


# ---------------------------------------------------------------------------
# vocabulary


def train_vocabulary(descriptors: np.ndarray, k: int = 64, seed: int = 0,
                     max_iter: int = 300, tol: float = 1e-6) -> VisualVocabulary:
    """Lloyd's k-means with squared-distance-weighted seeding.

    Iterates until the largest center movement drops below ``tol`` or
    ``max_iter`` rounds; an emptied cluster is reseeded onto the point
    farthest from its assigned center.
    """
    X = np.asarray(descriptors, dtype=float)
    if X.ndim != 2:
        raise VisionError("descriptor matrix must be 2-D")
    n = X.shape[0]
    if n < k:
        raise VisionError(f"need at least {k} descriptors, got {n}")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i] = X[rng.integers(n)]
            continue
        centers[i] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((X - centers[i]) ** 2, axis=1))

    # One inertia entry per assignment pass; each consecutive pair brackets a
    # mean update, so the sequence is non-increasing.
    history: list[float] = []
    x_sq = np.sum(X * X, axis=1)
    for _ in range(max_iter):
        dist = _sq_distances(X, centers, x_sq)
        assign = np.argmin(dist, axis=1)
        nearest = dist[np.arange(n), assign]
        history.append(float(nearest.sum()))
        new_centers = centers.copy()
        for j in range(k):
            members = assign == j
            if np.any(members):
                new_centers[j] = X[members].mean(axis=0)
            else:
                new_centers[j] = X[np.argmax(nearest)]
        movement = np.sqrt(np.sum((new_centers - centers) ** 2, axis=1)).max()
        centers = new_centers
        if movement < tol:
            break
    return VisualVocabulary(centers=centers, inertia=history[-1], inertia_history=history)


def _sq_distances(X: np.ndarray, centers: np.ndarray, x_sq: np.ndarray) -> np.ndarray:
    d = x_sq[:, None] + np.sum(centers * centers, axis=1)[None, :] - 2.0 * (X @ centers.T)
    return np.maximum(d, 0.0)


def encode(desc_set: DescriptorSet, vocab: VisualVocabulary) -> np.ndarray:
    """Word-frequency vector: nearest-center counts over the vocabulary,
    normalized to unit sum; all zeros when the image had no keypoints."""
    k = vocab.k
    if len(desc_set) == 0:
        return np.zeros(k)
    dist = np.sum((desc_set.vectors[:, None, :] - vocab.centers[None, :, :]) ** 2, axis=2)
    words = np.argmin(dist, axis=1)
    hist = np.bincount(words, minlength=k).astype(float)
    return hist / hist.sum()


# ---------------------------------------------------------------------------
# persistence


def vocab_to_text(vocab: VisualVocabulary) -> str:
    k, dim = vocab.centers.shape
    lines = [f"bovw-vocab v1 k={k} dim={dim} inertia={vocab.inertia!r}"]
    for row in vocab.centers:
        lines.append(" ".join(repr(v) for v in row.tolist()))
    return "\n".join(lines) + "\n"


def vocab_from_text(text: str) -> VisualVocabulary:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("bovw-vocab v1"):
        raise VisionError("not a v1 vocabulary record")
    header = dict(tok.split("=") for tok in lines[0].split()[2:])
    k, dim = int(header["k"]), int(header["dim"])
    inertia = float(header.get("inertia", "nan"))
    if len(lines) - 1 != k:
        raise VisionError(f"header promises {k} centers, found {len(lines) - 1}")
    centers = np.array([[float(tok) for tok in ln.split()] for ln in lines[1:]])
    if centers.shape != (k, dim):
        raise VisionError("center matrix shape mismatch")
    return VisualVocabulary(centers=centers, inertia=inertia)


def image_hash(image: np.ndarray) -> str:
    image = np.ascontiguousarray(image)
    h = hashlib.sha1()
    h.update(str(image.shape).encode())
    h.update(image.tobytes())
    return h.hexdigest()


def save_descriptors(path, desc_set: DescriptorSet) -> None:
    np.save(path, desc_set.vectors, allow_pickle=False)


def load_descriptors(path) -> np.ndarray:
    return np.load(path, allow_pickle=False)
