"""Synthetic data generation and every preprocessing step that feeds the
classifier heads: DFT-based intensity specification, key-frame plus
k-means sampling, blur synthesis, dense optical flow and orientation
maps.

All frame pixels live in [0,1] (clamped after every op) and are stored
channel-major as float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidValue, SizeMismatch

# ---------------------------------------------------------------------------
# core containers


@dataclass
class Frame:
    pixels: np.ndarray  # (channels, h, w), values in [0,1]

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim == 2:
            p = p[None]
        if p.ndim != 3 or p.shape[0] not in (1, 3):
            raise InvalidValue(f"frame must be (1|3, h, w), got {p.shape}")
        self.pixels = np.clip(p, 0.0, 1.0)

    @property
    def channels(self):
        return self.pixels.shape[0]

    @property
    def height(self):
        return self.pixels.shape[1]

    @property
    def width(self):
        return self.pixels.shape[2]

    def gray(self):
        """Channel-mean luminance plane (h, w)."""
        return self.pixels.mean(axis=0)


@dataclass
class VideoClip:
    frames: list  # of Frame, uniform geometry
    fps: float = 30.0
    label: int = 0

    def __post_init__(self):
        if not self.frames:
            raise InvalidValue("empty clip")
        shape = self.frames[0].pixels.shape
        if any(f.pixels.shape != shape for f in self.frames):
            raise SizeMismatch("non-uniform frame geometry in clip")


@dataclass
class FlowField:
    u: np.ndarray  # (h, w), pixels/frame
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise SizeMismatch("flow planes differ in shape")


@dataclass
class SampleRecord:
    image: Frame
    class_id: int
    source: str = "normal"  # normal | blurred
    partition: int | None = None
    orientation: Frame | None = None  # flow-angle image for the second stream


# ---------------------------------------------------------------------------
# DFT and spectral specification


def _dft_matrix(n, inverse=False):
    k = np.arange(n)
    sign = 2j if inverse else -2j
    return np.exp(sign * np.pi * np.outer(k, k) / n)


def dft2d(plane, inverse=False):
    """Separable 2-D DFT, X(k) = sum_n x(n) exp(-2*pi*i*k*n/N) per axis;
    the inverse applies the conjugate kernel and 1/(h*w)."""
    x = np.asarray(plane)
    h, w = x.shape
    out = _dft_matrix(h, inverse) @ x @ _dft_matrix(w, inverse)
    if inverse:
        out = out / (h * w)
    return out


def spectral_specify(frame: Frame, base: Frame, band=8):
    """Replace the low-band spectral magnitudes of `frame` with those of
    `base`, keeping `frame`'s phases; per channel, then clamp.

    The band covers coefficients whose wrap-around frequency index is
    below `band` in both axes (a conjugate-symmetric set, so the
    inverse transform stays real).
    """
    if frame.pixels.shape != base.pixels.shape:
        raise SizeMismatch("frame/base geometry mismatch")
    if band < 1:
        raise InvalidValue("band must be >= 1")
    h, w = frame.height, frame.width
    fy = np.minimum(np.arange(h), h - np.arange(h))
    fx = np.minimum(np.arange(w), w - np.arange(w))
    mask = (fy[:, None] < band) & (fx[None, :] < band)
    out = np.empty_like(frame.pixels)
    for c in range(frame.channels):
        F = dft2d(frame.pixels[c])
        B = dft2d(base.pixels[c])
        mag = np.where(mask, np.abs(B), np.abs(F))
        phase = np.angle(F)
        out[c] = np.real(dft2d(mag * np.exp(1j * phase), inverse=True))
    return Frame(out)


# ---------------------------------------------------------------------------
# key frames + clustering


def keyframe_select(clip: VideoClip, featurizer, tau):
    """Greedy selection: keep frame i when its feature is farther than tau
    from the last kept frame's feature. Frame 0 is always kept."""
    if tau <= 0:
        raise InvalidValue("tau must be positive")
    feats = [np.asarray(featurizer(f), dtype=np.float64).ravel() for f in clip.frames]
    selected = [0]
    last = feats[0]
    for i in range(1, len(feats)):
        if np.linalg.norm(feats[i] - last) > tau:
            selected.append(i)
            last = feats[i]
    return selected


def default_tau(clip: VideoClip, featurizer):
    """Half the median inter-frame feature distance of the clip."""
    feats = [np.asarray(featurizer(f)).ravel() for f in clip.frames]
    if len(feats) < 2:
        return 1.0
    d = [np.linalg.norm(feats[i + 1] - feats[i]) for i in range(len(feats) - 1)]
    med = float(np.median(d))
    return 0.5 * med if med > 0 else 1e-9


def kmeans(points, k, max_iters=100, seed=0):
    """Lloyd's algorithm with k-means++ seeding.

    Returns (centers, assignments, inertia trace). Inertia is recorded
    after every assignment step and is non-increasing. An empty cluster
    is repaired by grabbing the point farthest from its center.
    """
    X = np.asarray(points, dtype=np.float64)
    n = X.shape[0]
    if k > len(np.unique(X, axis=0)):
        raise InvalidValue(f"k={k} exceeds distinct point count")
    if max_iters < 1:
        raise InvalidValue("max_iters must be >= 1")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centers[j] = X[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((X - centers[j]) ** 2, axis=1))

    trace = []
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = dist.argmin(axis=1)
        # repair empty clusters with the globally farthest point
        for j in range(k):
            if not np.any(new_assign == j):
                worst = dist[np.arange(n), new_assign].argmax()
                new_assign[worst] = j
        inertia = float(((X - centers[new_assign]) ** 2).sum())
        trace.append(inertia)
        if np.array_equal(new_assign, assign) and len(trace) > 1:
            break
        assign = new_assign
        for j in range(k):
            centers[j] = X[assign == j].mean(axis=0)
    return centers, assign, trace


def sample_dataset(clips, featurizer, per_cluster=1, seed=0, tau=None):
    """De-homogenize clips: key-frame count fixes k, k-means groups all
    frames, cluster-center frames anchor the sample, and per_cluster
    frames are drawn per cluster."""
    if not clips:
        raise InvalidValue("no clips")
    rng = np.random.default_rng(seed)
    records = []
    for clip in clips:
        t = default_tau(clip, featurizer) if tau is None else tau
        keys = keyframe_select(clip, featurizer, t)
        feats = np.array([np.asarray(featurizer(f)).ravel() for f in clip.frames])
        # cluster count = key-frame count, capped by the number of
        # distinct feature vectors (duplicates cannot anchor clusters)
        k = min(len(keys), len(np.unique(feats, axis=0)))
        centers, assign, _ = kmeans(feats, k, seed=seed)
        for j in range(k):
            members = np.flatnonzero(assign == j)
            d = np.linalg.norm(feats[members] - centers[j], axis=1)
            order = members[np.argsort(d)]
            picks = list(order[:1])  # center-nearest frame first
            rest = order[1:]
            if len(rest) and per_cluster > 1:
                extra = rng.choice(rest, size=min(per_cluster - 1, len(rest)),
                                   replace=False)
                picks.extend(int(i) for i in extra)
            for i in picks:
                records.append(SampleRecord(clip.frames[int(i)], clip.label))
    return records


# ---------------------------------------------------------------------------
# blur synthesis


def _gaussian_kernel(sigma):
    r = max(1, int(np.ceil(3 * sigma)))
    x = np.arange(-r, r + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k2 = np.outer(k, k)
    return k2 / k2.sum()


def _motion_kernel(length, angle_deg):
    size = int(length)
    k = np.zeros((size, size))
    c = (size - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    for t in np.linspace(-c, c, 4 * size):
        i = int(round(c - t * np.sin(theta)))
        j = int(round(c + t * np.cos(theta)))
        if 0 <= i < size and 0 <= j < size:
            k[i, j] = 1.0
    return k / k.sum()


def synth_blur(image: Frame, kind="gaussian", sigma=2.0, length=9, angle=0.0,
               noise=0.0, seed=None):
    """Blur a frame with a gaussian or a 1-px-wide motion-line kernel,
    reflect-padded.

    `noise` adds i.i.d. post-blur pixel noise (re-capture noise); it is
    what makes blur destructive rather than a reversible linear map.
    """
    if kind == "gaussian":
        if sigma <= 0:
            raise InvalidValue("sigma must be positive")
        kernel = _gaussian_kernel(sigma)
    elif kind == "motion":
        if length < 1:
            raise InvalidValue("motion length must be >= 1")
        kernel = _motion_kernel(length, angle)
    else:
        raise InvalidValue(f"unknown blur kind {kind!r}")
    out = np.stack([
        ndimage.convolve(image.pixels[c], kernel, mode="reflect")
        for c in range(image.channels)
    ])
    if noise > 0:
        rng = np.random.default_rng(seed)
        out = out + rng.normal(0.0, noise, size=out.shape)
    return Frame(out)


# ---------------------------------------------------------------------------
# optical flow


def _neighbor_mean(a):
    # edge-replicated padding keeps the iteration consistent with the
    # interior-difference smoothness energy (Neumann boundary)
    p = np.pad(a, 1, mode="edge")
    return (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]) / 4.0


def horn_schunck(f1, f2, lam=0.5, iters=100):
    """Classic dense optical flow via Jacobi iteration.

    f1, f2: gray planes (h, w) or single-channel Frames. Returns flow
    such that a rightward image shift gives u > 0.
    """
    a = f1.gray() if isinstance(f1, Frame) else np.asarray(f1, dtype=np.float64)
    b = f2.gray() if isinstance(f2, Frame) else np.asarray(f2, dtype=np.float64)
    if a.shape != b.shape:
        raise SizeMismatch("frame shapes differ")
    if lam <= 0 or iters < 1:
        raise InvalidValue("need lam > 0 and iters >= 1")
    Ix = np.zeros_like(a)
    Iy = np.zeros_like(a)
    Ix[:, :-1] = a[:, 1:] - a[:, :-1]
    Iy[:-1, :] = a[1:, :] - a[:-1, :]
    It = b - a
    denom = lam ** 2 + Ix ** 2 + Iy ** 2
    u = np.zeros_like(a)
    v = np.zeros_like(a)
    for _ in range(iters):
        ubar = _neighbor_mean(u)
        vbar = _neighbor_mean(v)
        t = (Ix * ubar + Iy * vbar + It) / denom
        u = ubar - Ix * t
        v = vbar - Iy * t
    return FlowField(u=u, v=v)


def flow_energy(flow: FlowField, f1, f2, lam=0.5):
    """Data + smoothness objective the Jacobi iteration descends."""
    a = f1.gray() if isinstance(f1, Frame) else np.asarray(f1, dtype=np.float64)
    b = f2.gray() if isinstance(f2, Frame) else np.asarray(f2, dtype=np.float64)
    Ix = np.zeros_like(a)
    Iy = np.zeros_like(a)
    Ix[:, :-1] = a[:, 1:] - a[:, :-1]
    Iy[:-1, :] = a[1:, :] - a[:-1, :]
    It = b - a
    u, v = flow.u, flow.v
    data = ((Ix * u + Iy * v + It) ** 2).sum()
    gu = np.diff(u, axis=0) ** 2
    gu2 = np.diff(u, axis=1) ** 2
    gv = np.diff(v, axis=0) ** 2
    gv2 = np.diff(v, axis=1) ** 2
    return float(data + lam ** 2 * (gu.sum() + gu2.sum() + gv.sum() + gv2.sum()))


def orientation_map(flow: FlowField):
    """Flow angle atan2(v,u) mapped from (-pi, pi] to [0,1]; negligible
    magnitude maps to the neutral value 0.5."""
    mag = np.hypot(flow.u, flow.v)
    ang = np.arctan2(flow.v, flow.u)
    vals = 0.5 + ang / (2 * np.pi)
    vals = np.where(mag < 1e-6, 0.5, vals)
    return Frame(vals[None])


# ---------------------------------------------------------------------------
# synthetic dataset


def _hsv_to_rgb(h, s, v):
    i = int(h * 6) % 6
    f = h * 6 - int(h * 6)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


def _render_class_image(family, size, rng):
    """One visual family per class: polygons, stripes, blob fields and
    checkers, each with a family-specific color tint."""
    img = np.zeros((3, size, size))
    # smooth textured background
    noise = rng.normal(0.25, 0.05, size=(size, size))
    base = ndimage.gaussian_filter(noise, 1.0)
    img[:] = base
    color = np.array(_hsv_to_rgb((family * 0.61803) % 1.0, 0.9, 1.0))

    yy, xx = np.mgrid[0:size, 0:size]
    cx = size / 2 + rng.uniform(-size / 8, size / 8)
    cy = size / 2 + rng.uniform(-size / 8, size / 8)
    kind = family % 4
    variant = family // 4
    if kind == 0:  # filled regular polygon
        sides = 3 + variant
        r = size * 0.3
        ang = np.arctan2(yy - cy, xx - cx) + rng.uniform(0, 2 * np.pi)
        rad = np.hypot(yy - cy, xx - cx)
        # polygon boundary radius as a function of angle
        half = np.pi / sides
        rb = r * np.cos(half) / np.cos(((ang + half) % (2 * half)) - half)
        mask = rad <= rb
    elif kind == 1:  # stripes of family-specific frequency
        freq = 2 + 2 * variant
        phase = rng.uniform(0, 2 * np.pi)
        mask = np.sin(2 * np.pi * freq * xx / size + phase) > 0.3
    elif kind == 2:  # blob field
        count = 1 + 2 * variant
        mask = np.zeros((size, size), dtype=bool)
        r = size * 0.12
        for _ in range(count):
            bx = rng.uniform(r, size - r)
            by = rng.uniform(r, size - r)
            mask |= np.hypot(yy - by, xx - bx) <= r
    else:  # checker
        cell = max(2, size // (4 + 2 * variant))
        mask = ((yy // cell + xx // cell) % 2).astype(bool)
    for c in range(3):
        img[c] = np.where(mask, 0.25 + 0.75 * color[c], img[c])
    img += rng.normal(0, 0.005, size=img.shape)
    return Frame(img)


def _shift_frame(frame: Frame, dx, dy):
    """Integer wrap-around shift (dx rightward, dy downward)."""
    return Frame(np.roll(frame.pixels, (int(round(dy)), int(round(dx))),
                         axis=(1, 2)))


def gen_synthetic_dataset(num_classes=16, per_class=100, size=32, motion=False,
                          seed=0):
    """Procedural image/video dataset.

    motion=False: one still frame per record, all visual families distinct.
    motion="correlated" (or True): classes share visual families in pairs
    and are distinguished by motion direction; each record carries the
    flow-orientation frame and a 2-frame clip is emitted.
    motion="uncorrelated": distinct visuals, random motion direction.

    Returns (records, clips); clips is empty without motion.
    """
    if not (1 <= num_classes <= 16):
        raise InvalidValue("num_classes must be in [1,16]")
    if size < 16:
        raise InvalidValue("size must be >= 16")
    if motion is True:
        motion = "correlated"
    if motion not in (False, None, "correlated", "uncorrelated"):
        raise InvalidValue(f"bad motion mode {motion!r}")
    rng = np.random.default_rng(seed)
    records = []
    clips = []
    for c in range(num_classes):
        if motion == "correlated":
            family = c % max(1, (num_classes + 1) // 2)
        else:
            family = c
        for _ in range(per_class):
            frame = _render_class_image(family, size, rng)
            if motion:
                if motion == "correlated":
                    angle = 2 * np.pi * c / num_classes
                else:
                    angle = rng.uniform(0, 2 * np.pi)
                step = 2.0
                dx = step * np.cos(angle)
                dy = step * np.sin(angle)
                f2 = _shift_frame(frame, dx, dy)
                flow = horn_schunck(frame, f2, lam=0.5, iters=60)
                rec = SampleRecord(frame, c, orientation=orientation_map(flow))
                clips.append(VideoClip([frame, f2], label=c))
            else:
                rec = SampleRecord(frame, c)
            records.append(rec)
    return records, clips


# ---------------------------------------------------------------------------
# PPM / PGM I/O (binary, 8-bit)


def write_ppm(frame: Frame, path):
    if frame.channels != 3:
        raise InvalidValue("PPM needs a 3-channel frame")
    data = np.round(frame.pixels * 255).astype(np.uint8).transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{frame.width} {frame.height}\n255\n".encode())
        fh.write(data.tobytes())


def write_pgm(frame: Frame, path):
    if frame.channels != 1:
        raise InvalidValue("PGM needs a single-channel frame")
    data = np.round(frame.pixels[0] * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{frame.width} {frame.height}\n255\n".encode())
        fh.write(data.tobytes())


def _read_netpbm(path, magic):
    with open(path, "rb") as fh:
        tokens = []
        while len(tokens) < 4:
            line = fh.readline()
            if not line:
                raise InvalidValue(f"{path}: truncated header")
            body = line.split(b"#")[0]
            tokens.extend(body.split())
        if tokens[0] != magic:
            raise InvalidValue(f"{path}: expected {magic.decode()}")
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        planes = 3 if magic == b"P6" else 1
        raw = fh.read(w * h * planes)
    arr = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / maxval
    if planes == 3:
        return Frame(arr.reshape(h, w, 3).transpose(2, 0, 1))
    return Frame(arr.reshape(1, h, w))


def read_ppm(path):
    return _read_netpbm(path, b"P6")


def read_pgm(path):
    return _read_netpbm(path, b"P5")
