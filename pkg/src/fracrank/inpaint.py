"""Grayscale image inpainting as low-rank matrix completion.

An image is replaced by its best rank-``r`` approximation, a uniform subset
of its pixels is kept, and a completion method fills in the rest. Errors are
measured against the rank-``r`` approximation, which is the matrix the
solver is actually asked to recover.
"""
import csv
import os
import re
import time
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter1d

from .errors import FormatError, ShapeError
from .harness import Metrics, SweepOptions, freedom_ratio, relative_error, sample_cells, solve_completion
from .linops import SampleSet
from .svthresh import svd

__all__ = [
    "GrayImage",
    "SYNTHETIC_PRESETS",
    "load_image",
    "save_image",
    "synthetic_image",
    "low_rank_approx",
    "inpaint_problem",
    "inpaint_run",
    "masked_view",
    "preset_image",
    "parse_size",
    "write_metrics_csv",
    "METRICS_HEADER",
]

METRICS_HEADER = ["image", "rank", "sr", "fr", "method", "a", "re", "time", "converged"]

# (width, height) stand-ins for the three test images
SYNTHETIC_PRESETS = {
    "bai": (255, 192),
    "hai": (395, 549),
    "ivi": (419, 400),
}


@dataclass
class GrayImage:
    """``pixels`` has shape ``(height, width)`` with values in ``[0, 1]``."""

    pixels: np.ndarray
    name: str = "image"

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise ShapeError(f"pixels must be a non-empty 2-D array, got shape {px.shape}")
        self.pixels = px

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

_WS = b" \t\n\r\x0b\x0c"


def _pgm_header(data):
    """Parse ``P5 <w> <h> <maxval>``; returns ``(w, h, maxval, raster_offset)``."""
    if data[:2] != b"P5":
        raise FormatError("not a binary PGM (missing 'P5' magic)", offset=0)
    pos = 2
    fields = []
    while len(fields) < 3:
        start = pos
        while pos < len(data) and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos == start and fields:
            raise FormatError("expected whitespace between header fields", offset=pos)
        tok_start = pos
        while pos < len(data) and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        tok = data[tok_start:pos]
        if not tok:
            raise FormatError("truncated PGM header", offset=tok_start)
        if not tok.isdigit():
            raise FormatError(f"header field {tok[:16]!r} is not a positive integer", offset=tok_start)
        fields.append((int(tok), tok_start))
    if pos >= len(data) or data[pos] not in _WS:
        raise FormatError("missing single whitespace byte after maxval", offset=pos)
    (w, w_at), (h, h_at), (maxval, mv_at) = fields
    if w < 1:
        raise FormatError("width must be positive", offset=w_at)
    if h < 1:
        raise FormatError("height must be positive", offset=h_at)
    if not 1 <= maxval <= 65535:
        raise FormatError(f"maxval {maxval} outside 1..65535", offset=mv_at)
    return w, h, maxval, pos + 1


def _load_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    w, h, maxval, off = _pgm_header(data)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    if len(data) - off < need:
        raise FormatError(f"raster truncated: need {need} bytes, found {len(data) - off}",
                          offset=len(data))
    raster = np.frombuffer(data, dtype=dtype, count=w * h, offset=off).reshape(h, w)
    if raster.max() > maxval:
        bad = int(np.flatnonzero(raster.ravel() > maxval)[0])
        raise FormatError(f"sample exceeds maxval {maxval}", offset=off + bad * dtype.itemsize)
    return raster.astype(np.float64) / maxval


def _load_png(path):
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: unreadable PNG ({exc})", offset=0) from None
    if mode == "L":
        return arr.astype(np.float64) / 255.0
    if mode in ("I;16", "I;16B", "I"):
        if arr.max(initial=0) > 65535 or arr.min(initial=0) < 0:
            raise FormatError(f"{path}: samples outside the 16-bit range", offset=0)
        return arr.astype(np.float64) / 65535.0
    raise FormatError(f"{path}: expected a grayscale PNG, got mode {mode!r}", offset=0)


def load_image(path):
    """Read an 8/16-bit binary PGM or a grayscale PNG, scaled to ``[0, 1]``."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        magic = fh.read(8)
    name = os.path.splitext(os.path.basename(path))[0]
    if magic.startswith(b"\x89PNG"):
        return GrayImage(_load_png(path), name=name)
    if magic.startswith(b"P5"):
        return GrayImage(_load_pgm(path), name=name)
    raise FormatError(f"{path}: neither a binary PGM nor a PNG", offset=0)


def save_image(image, path, bits=8):
    """Write ``image`` as PGM (``.pgm``) or PNG (anything else).

    Pixels are clipped to ``[0, 1]`` and rounded half-to-even onto the
    ``2**bits - 1`` grid.
    """
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    path = os.fspath(path)
    pixels = image.pixels if isinstance(image, GrayImage) else np.asarray(image, dtype=np.float64)
    maxval = 255 if bits == 8 else 65535
    q = np.rint(np.clip(pixels, 0.0, 1.0) * maxval)
    h, w = q.shape
    if path.lower().endswith(".pgm"):
        raster = q.astype(">u2" if bits == 16 else "u1")
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
            fh.write(raster.tobytes())
    elif bits == 8:
        Image.fromarray(q.astype(np.uint8), mode="L").save(path, format="PNG")
    else:
        Image.fromarray(q.astype(np.uint16)).save(path, format="PNG")


# ---------------------------------------------------------------------------
# synthetic test images
# ---------------------------------------------------------------------------

def synthetic_image(width, height, seed=0, smoothness=3.0, name=None):
    """Smooth random field with a slowly decaying singular spectrum.

    The image is a weighted sum of ``min(width, height)`` outer products of
    Gaussian-blurred noise vectors, with weight ``1/k`` on the ``k``-th term,
    then rescaled to ``[0, 1]``. Deterministic in ``seed``.
    """
    rng = np.random.default_rng(seed)
    k = min(width, height)
    u = gaussian_filter1d(rng.standard_normal((height, k)), smoothness, axis=0, mode="wrap")
    v = gaussian_filter1d(rng.standard_normal((width, k)), smoothness, axis=0, mode="wrap")
    u /= np.linalg.norm(u, axis=0)
    v /= np.linalg.norm(v, axis=0)
    img = (u / np.arange(1, k + 1)) @ v.T
    img = (img - img.min()) / (img.max() - img.min())
    return GrayImage(img, name=name or f"synthetic_{width}x{height}")


def preset_image(key, seed=0):
    w, h = SYNTHETIC_PRESETS[key]
    return synthetic_image(w, h, seed=seed, name=key)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def low_rank_approx(image, r):
    """Best rank-``r`` Frobenius approximation of the pixel matrix."""
    x = image.pixels if isinstance(image, GrayImage) else np.asarray(image, dtype=np.float64)
    if not 1 <= r <= min(x.shape):
        raise ValueError(f"rank must lie in [1, {min(x.shape)}], got {r}")
    t = svd(x)
    return (t.u[:, :r] * t.sigma[:r]) @ t.vt[:r]


def inpaint_problem(image, r, sr, seed=0):
    """Rank-``r`` target and the uniform sample set of ``round(sr * w * h)`` pixels."""
    if not 0.0 < sr <= 1.0:
        raise ValueError(f"sampling ratio must lie in (0, 1], got {sr}")
    target = low_rank_approx(image, r)
    h, w = target.shape
    s = max(1, int(round(sr * w * h)))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & ((1 << 64) - 1))))
    return target, SampleSet.from_matrix(target, sample_cells(h, w, s, rng))


def inpaint_run(image, r, sr, method="isvta", a=1.0, seed=0, tol=1e-4, max_iter=10000,
                stop="target"):
    """Mask the rank-``r`` approximation of ``image`` and recover it.

    Returns ``(recovered, metrics)``; ``recovered`` is not clipped.
    """
    target, omega = inpaint_problem(image, r, sr, seed)
    h, w = target.shape
    opts = SweepOptions(method=method, tol=tol, max_iter=max_iter, stop=stop)
    t0 = time.perf_counter()
    result = solve_completion(omega, target, r, a, opts)
    elapsed = time.perf_counter() - t0
    metrics = Metrics(sr=omega.size / (w * h), fr=freedom_ratio(omega.size, r, h, w),
                      re=relative_error(result.x_opt, target), elapsed_seconds=elapsed,
                      converged=bool(result.converged), iterations=result.iterations,
                      m=h, n=w, rank=r, a=a, seed=seed, method=method)
    return result.x_opt, metrics


def masked_view(omega, target):
    """Observed pixels at their values, missing pixels black."""
    out = np.zeros(omega.shape)
    out.ravel()[omega.flat] = np.asarray(target).ravel()[omega.flat]
    return out


def write_metrics_csv(rows, path):
    """``rows`` is an iterable of ``(image_name, Metrics)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for name, m in rows:
            a = repr(float(m.a)) if m.method == "isvta" else ""
            w.writerow([name, m.rank, repr(float(m.sr)), repr(float(m.fr)), m.method, a,
                        repr(float(m.re)), repr(float(m.elapsed_seconds)), str(m.converged).lower()])


def parse_size(text):
    """``"WxH"`` -> ``(W, H)``."""
    mt = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not mt or int(mt.group(1)) < 1 or int(mt.group(2)) < 1:
        raise ValueError(f"expected WIDTHxHEIGHT, got {text!r}")
    return int(mt.group(1)), int(mt.group(2))
