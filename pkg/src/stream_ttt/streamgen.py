"""Synthetic test streams: latent paths and labeled toy videos.

Every generator is a pure function of its :class:`StreamSpec`. Frames are
indexed from 1, so a stream of length ``T`` holds frames ``1..T``. A regime
time ``tau`` marks a switch between frame ``tau`` and frame ``tau + 1``.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

LATENT_KINDS = ("constant", "linear-drift", "bounded-random-walk", "regime-switch")
STREAM_KINDS = LATENT_KINDS + ("shape-video",)


class StreamSpecError(ValueError):
    """Raised when a stream specification is malformed."""


@dataclass(frozen=True)
class Frame:
    """One stream element ``x_t``."""

    values: np.ndarray
    index: int


@dataclass(frozen=True)
class LabeledFrame:
    """A frame together with its ground-truth label ``y_t``."""

    frame: Frame
    label: np.ndarray

    @property
    def index(self) -> int:
        return self.frame.index

    @property
    def values(self) -> np.ndarray:
        return self.frame.values


@dataclass(frozen=True)
class StreamSpec:
    """Recipe for one synthetic stream.

    ``dims`` is ``(d,)`` for latent streams and ``(H, W)`` for videos.
    ``target_map`` is the matrix ``W`` used for latent labels (identity when
    omitted). The video fields are ignored by latent kinds.
    """

    kind: str
    T: int
    dims: tuple[int, ...]
    eta: float
    regime_times: tuple[int, ...] = ()
    seed: int = 0
    target_map: np.ndarray | None = None
    jump_scale: float = 10.0
    # shape-video knobs
    radius: int = 2
    speed: float = 0.5
    pan: float = 0.05
    bg_range: tuple[float, float] = (0.0, 0.5)
    bg_cell: float = 4.0
    noise: float = 0.03
    intensity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        object.__setattr__(self, "regime_times", tuple(int(v) for v in self.regime_times))
        object.__setattr__(self, "bg_range", tuple(float(v) for v in self.bg_range))
        if self.target_map is not None:
            w = np.array(self.target_map, dtype=float)
            w.setflags(write=False)
            object.__setattr__(self, "target_map", w)

    def validate(self) -> None:
        if self.kind not in STREAM_KINDS:
            raise StreamSpecError(f"unknown stream kind {self.kind!r}")
        if self.T < 1:
            raise StreamSpecError(f"T must be >= 1, got {self.T}")
        if not np.isfinite(self.eta) or self.eta < 0:
            raise StreamSpecError(f"eta must be finite and >= 0, got {self.eta}")
        times = self.regime_times
        if list(times) != sorted(set(times)):
            raise StreamSpecError("regime_times must be strictly increasing")
        if any(tau < 1 or tau >= self.T for tau in times):
            raise StreamSpecError(f"regime_times must lie in [1, {self.T}), got {times}")
        if self.kind == "shape-video":
            if len(self.dims) != 2:
                raise StreamSpecError("shape-video needs dims (H, W)")
        elif len(self.dims) != 1 or self.dims[0] < 1:
            raise StreamSpecError("latent streams need dims (d,) with d >= 1")
        if self.target_map is not None:
            d = self.dims[0]
            if self.target_map.shape != (d, d) or not np.all(np.isfinite(self.target_map)):
                raise StreamSpecError(f"target_map must be a finite {d}x{d} matrix")

    def label_map(self) -> np.ndarray:
        if self.target_map is None:
            return np.eye(self.dims[0])
        return self.target_map

    def header(self) -> dict:
        """Small JSON-friendly description (used by the stream file format)."""
        head = {"kind": self.kind, "T": self.T, "dims": list(self.dims),
                "eta": self.eta, "seed": self.seed}
        extra = {"regime_times": list(self.regime_times), "jump_scale": self.jump_scale,
                 "radius": self.radius, "speed": self.speed, "pan": self.pan,
                 "bg_range": list(self.bg_range), "bg_cell": self.bg_cell,
                 "noise": self.noise, "intensity": self.intensity}
        if self.target_map is not None:
            extra["target_map"] = self.target_map.tolist()
        head.update(extra)
        return head


@dataclass(frozen=True)
class Stream(Sequence):
    """An ordered, labeled stream backed by two dense arrays.

    ``X`` has one flattened frame per row and ``Y`` the matching labels.
    Frame ``i`` (0-based row) carries index ``i + 1``. ``origin`` records the
    generator index of each row, which differs from ``i + 1`` only after
    shuffling.
    """

    X: np.ndarray
    Y: np.ndarray
    shape: tuple[int, ...]
    spec: StreamSpec | None = None
    origin: np.ndarray | None = field(default=None)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        Y = np.ascontiguousarray(self.Y, dtype=float)
        if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
            raise ValueError("X and Y must be 2-D arrays with matching length")
        if len(X) == 0:
            raise ValueError("a stream needs at least one frame")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        origin = np.arange(1, len(X) + 1) if self.origin is None else np.asarray(self.origin)
        origin.setflags(write=False)
        object.__setattr__(self, "origin", origin)

    def __len__(self) -> int:
        return len(self.X)

    def __getitem__(self, i):
        if isinstance(i, slice):
            idx = range(len(self))[i]
            if idx.step != 1:
                raise ValueError("only contiguous slices are supported")
            return Stream(self.X[i], self.Y[i], self.shape, self.spec, self.origin[i])
        i = range(len(self))[i]
        return LabeledFrame(Frame(self.X[i], i + 1), self.Y[i])

    @property
    def T(self) -> int:
        return len(self.X)

    def step_norms(self) -> np.ndarray:
        """``||x_{t+1} - x_t||`` for t = 1..T-1."""
        return np.linalg.norm(np.diff(self.X, axis=0), axis=1)

    def frame_checksums(self) -> list[str]:
        """Per-frame digest of (values, label), used for multiset checks."""
        return [hashlib.sha256(x.tobytes() + b"|" + y.tobytes()).hexdigest()
                for x, y in zip(self.X, self.Y)]


def _unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    n = np.linalg.norm(v)
    while n == 0.0:
        v = rng.standard_normal(d)
        n = np.linalg.norm(v)
    return v / n


def gen_latent_stream(spec: StreamSpec) -> Stream:
    """Generate a latent stream with labels ``y_t = W x_t``.

    * ``constant``: ``x_t = x_1``.
    * ``linear-drift``: ``x_t = x_1 + (t - 1) eta u`` for a random unit ``u``.
    * ``bounded-random-walk``: steps uniform on the sphere of radius ``eta``.
    * ``regime-switch``: a bounded random walk whose step at each regime
      time is replaced by a jump of length ``jump_scale * eta``.
    """
    spec.validate()
    if spec.kind not in LATENT_KINDS:
        raise StreamSpecError(f"{spec.kind!r} is not a latent stream kind")
    d, T, eta = spec.dims[0], spec.T, float(spec.eta)
    rng = np.random.default_rng([spec.seed & (2**64 - 1), 0x1A7E])
    x1 = rng.standard_normal(d)
    X = np.empty((T, d))
    X[0] = x1
    if spec.kind == "constant":
        X[:] = x1
    elif spec.kind == "linear-drift":
        u = _unit(rng, d)
        X[:] = x1 + np.arange(T)[:, None] * (eta * u)
    else:
        jumps = set(spec.regime_times) if spec.kind == "regime-switch" else set()
        for t in range(1, T):
            scale = spec.jump_scale * eta if t in jumps else eta
            X[t] = X[t - 1] + scale * _unit(rng, d)
    Y = X @ spec.label_map().T
    return Stream(X, Y, (d,), spec)


# ---------------------------------------------------------------- video

def square_coverage(shape: tuple[int, int], cy: float, cx: float, r: float) -> np.ndarray:
    """Fraction of each pixel covered by the square ``[c - r - 1/2, c + r + 1/2]``.

    Pixel ``(i, j)`` spans ``[i - 1/2, i + 1/2] x [j - 1/2, j + 1/2]``, so a
    square centered on an integer pixel covers exactly ``(2r + 1)^2`` pixels.
    """
    H, W = shape
    yy = np.arange(H)[:, None]
    xx = np.arange(W)[None, :]
    oy = np.clip(np.minimum(yy + 0.5, cy + r + 0.5) - np.maximum(yy - 0.5, cy - r - 0.5), 0, 1)
    ox = np.clip(np.minimum(xx + 0.5, cx + r + 0.5) - np.maximum(xx - 0.5, cx - r - 0.5), 0, 1)
    return oy * ox


def sample_field(grid: np.ndarray, shape: tuple[int, int], oy: float, ox: float,
                 cell: float) -> np.ndarray:
    """Bilinearly sample a coarse grid on an ``H x W`` window offset by (oy, ox)."""
    H, W = shape
    ys = (np.arange(H)[:, None] + oy) / cell
    xs = (np.arange(W)[None, :] + ox) / cell
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = ys - y0
    fx = xs - x0
    return (grid[y0, x0] * (1 - fy) * (1 - fx) + grid[y0 + 1, x0] * fy * (1 - fx)
            + grid[y0, x0 + 1] * (1 - fy) * fx + grid[y0 + 1, x0 + 1] * fy * fx)


class _Background:
    """A panning window over a random coarse field."""

    def __init__(self, rng, shape, lo, hi, cell, pan):
        H, W = shape
        self.margin = 2 * max(H, W)
        rows = int(np.ceil((H + self.margin) / cell)) + 2
        cols = int(np.ceil((W + self.margin) / cell)) + 2
        self.grid = lo + (hi - lo) * rng.uniform(0, 1, (rows, cols))
        self.shape, self.cell = shape, cell
        self.oy, self.ox = rng.uniform(0, self.margin / 2, 2)
        heading = rng.uniform(0, 2 * np.pi)
        self.vy, self.vx = pan * np.sin(heading), pan * np.cos(heading)

    def at(self, oy, ox):
        return sample_field(self.grid, self.shape, oy, ox, self.cell)

    def advance(self, s):
        """Offset after moving a fraction ``s`` of one pan step (no side effects)."""
        oy = float(np.clip(self.oy + s * self.vy, 0, self.margin))
        ox = float(np.clip(self.ox + s * self.vx, 0, self.margin))
        return oy, ox

    def commit(self, oy, ox):
        if oy in (0.0, self.margin):
            self.vy = -self.vy
        if ox in (0.0, self.margin):
            self.vx = -self.vx
        self.oy, self.ox = oy, ox


def _render(bg, cov, intensity):
    return bg * (1 - cov) + intensity * cov


def gen_shape_video(spec: StreamSpec) -> Stream:
    """A bright square moving over a slowly panning background.

    Each regime (delimited by ``regime_times``) draws a fresh background.
    Within a regime the pixel-space step between consecutive frames never
    exceeds ``eta``: pixel noise is norm-capped at ``eta / 4`` and the
    motion of shape and background is shortened by bisection until the
    clean step fits in ``eta / 2``. Clipping to [0, 1] cannot lengthen a
    step, so the bound survives it.
    """
    spec.validate()
    if spec.kind != "shape-video":
        raise StreamSpecError(f"{spec.kind!r} is not 'shape-video'")
    H, W = spec.dims
    r = spec.radius
    if H < 8 or W < 8:
        raise StreamSpecError("shape-video needs H, W >= 8")
    if r < 0 or 2 * r + 1 > min(H, W):
        raise StreamSpecError(f"square of radius {r} does not fit in {H}x{W}")
    lo_bg, hi_bg = spec.bg_range
    if not 0 <= lo_bg <= hi_bg <= 1:
        raise StreamSpecError("bg_range must satisfy 0 <= lo <= hi <= 1")
    T, eta = spec.T, float(spec.eta)
    rng = np.random.default_rng([spec.seed & (2**64 - 1), 0x5BA9E])
    noise_cap = eta / 4
    budget = eta - 2 * noise_cap

    lo_c, hi_c = float(r), float(H - 1 - r)
    lo_x, hi_x = float(r), float(W - 1 - r)
    cy = rng.uniform(lo_c, hi_c)
    cx = rng.uniform(lo_x, hi_x)
    heading = rng.uniform(0, 2 * np.pi)
    switches = set(spec.regime_times)
    bg = _Background(rng, (H, W), lo_bg, hi_bg, spec.bg_cell, spec.pan)

    X = np.empty((T, H * W))
    Y = np.empty((T, H * W))
    clean = _render(bg.at(bg.oy, bg.ox), square_coverage((H, W), cy, cx, r), spec.intensity)
    for t in range(T):
        if t > 0:
            if t in switches:
                bg = _Background(rng, (H, W), lo_bg, hi_bg, spec.bg_cell, spec.pan)
            heading += rng.normal(0.0, 0.1)
            dy, dx = spec.speed * np.sin(heading), spec.speed * np.cos(heading)

            def propose(s):
                ny, nx = cy + s * dy, cx + s * dx
                oy, ox = bg.advance(s)
                cov = square_coverage((H, W), np.clip(ny, lo_c, hi_c), np.clip(nx, lo_x, hi_x), r)
                return ny, nx, oy, ox, _render(bg.at(oy, ox), cov, spec.intensity)

            s = 1.0
            ny, nx, oy, ox, cand = propose(s)
            if t not in switches and np.linalg.norm(cand - clean) > budget:
                lo_s, hi_s = 0.0, 1.0
                for _ in range(30):
                    mid = 0.5 * (lo_s + hi_s)
                    if np.linalg.norm(propose(mid)[4] - clean) <= budget:
                        lo_s = mid
                    else:
                        hi_s = mid
                ny, nx, oy, ox, cand = propose(lo_s)
            bg.commit(oy, ox)
            if not lo_c <= ny <= hi_c:
                heading = -heading
            if not lo_x <= nx <= hi_x:
                heading = np.pi - heading
            cy, cx = float(np.clip(ny, lo_c, hi_c)), float(np.clip(nx, lo_x, hi_x))
            clean = cand
        noise = rng.normal(0.0, spec.noise, H * W)
        nn = np.linalg.norm(noise)
        if nn > noise_cap:
            noise *= noise_cap / nn
        X[t] = np.clip(clean.ravel() + noise, 0.0, 1.0)
        Y[t] = (square_coverage((H, W), cy, cx, r) >= 0.5).ravel()
    return Stream(X, Y, (H, W), spec)


def gen_stream(spec: StreamSpec) -> Stream:
    """Dispatch on ``spec.kind``."""
    if spec.kind == "shape-video":
        return gen_shape_video(spec)
    return gen_latent_stream(spec)


def gen_shape_stills(n: int, shape: tuple[int, int], seed: int, *, radius: int = 2,
                     bg_range: tuple[float, float] = (0.0, 0.3), bg_cell: float = 4.0,
                     noise: float = 0.03, intensity: float = 1.0) -> Stream:
    """Independent labeled still images used as the joint-training set."""
    H, W = shape
    rng = np.random.default_rng([seed & (2**64 - 1), 0x57111])
    X = np.empty((n, H * W))
    Y = np.empty((n, H * W))
    for i in range(n):
        bg = _Background(rng, (H, W), bg_range[0], bg_range[1], bg_cell, 0.0)
        cy = rng.uniform(radius, H - 1 - radius)
        cx = rng.uniform(radius, W - 1 - radius)
        cov = square_coverage((H, W), cy, cx, radius)
        img = _render(bg.at(bg.oy, bg.ox), cov, intensity)
        X[i] = np.clip(img.ravel() + rng.normal(0.0, noise, H * W), 0.0, 1.0)
        Y[i] = (cov >= 0.5).ravel()
    return Stream(X, Y, (H, W))


def gen_latent_training_set(n: int, target_map: np.ndarray, seed: int) -> Stream:
    """Gaussian latent inputs with labels ``W x``."""
    W = np.asarray(target_map, dtype=float)
    rng = np.random.default_rng([seed & (2**64 - 1), 0x7A11])
    X = rng.standard_normal((n, W.shape[1]))
    return Stream(X, X @ W.T, (W.shape[1],))


def shuffle_stream(stream: Stream, seed: int) -> Stream:
    """Uniformly permute the frames (labels move with their frames)."""
    if len(stream) == 0:
        raise ValueError("cannot shuffle an empty stream")
    rng = np.random.default_rng([seed & (2**64 - 1), 0x5F1E])
    perm = rng.permutation(len(stream))
    return Stream(stream.X[perm], stream.Y[perm], stream.shape, stream.spec,
                  stream.origin[perm])


# ---------------------------------------------------------------- file format

def _fmt(v: float) -> str:
    return "%.17g" % v


def write_stream(stream: Stream, path) -> None:
    """Write the header line and one ``values | label`` row per frame."""
    if stream.spec is not None:
        head = stream.spec.header()
    else:
        head = {"kind": "stills", "T": len(stream), "dims": list(stream.shape),
                "eta": None, "seed": None}
    with open(path, "w") as fh:
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for x, y in zip(stream.X, stream.Y):
            fh.write(" ".join(map(_fmt, x)) + " | " + " ".join(map(_fmt, y)) + "\n")


def read_stream(path) -> Stream:
    """Inverse of :func:`write_stream`; values round-trip exactly."""
    with open(path) as fh:
        head = json.loads(fh.readline())
        X, Y = [], []
        for line in fh:
            if not line.strip():
                continue
            left, right = line.split("|")
            X.append(np.array(left.split(), dtype=float))
            Y.append(np.array(right.split(), dtype=float))
    dims = tuple(head["dims"])
    spec = None
    if head.get("kind") in STREAM_KINDS:
        fields = {k: v for k, v in head.items() if k in StreamSpec.__dataclass_fields__}
        spec = StreamSpec(**fields)
    if len(X) != head["T"]:
        raise ValueError(f"stream file declares T={head['T']} but holds {len(X)} frames")
    return Stream(np.array(X), np.array(Y), dims, spec)


def with_seed(spec: StreamSpec, seed: int) -> StreamSpec:
    return replace(spec, seed=seed)
