"""Image deblurring problem library.

Provides the building blocks of the benchmark problems: convolution with
whole-sample reflective boundaries and its exact adjoint, a forward
difference gradient with Neumann boundaries for total variation, an l1 data
fidelity with a nonnegativity constraint, a smooth log-filter regularizer on
a small DCT filter bank, a signal-dependent Gaussian fidelity, impulse noise
simulation, PSNR, and simple image I/O (8-bit PGM and raw float64).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import correlate as _nd_correlate
from scipy.signal import convolve2d

from inertiafb.problem import (Block, DomainError, LinearOp, NonnegIndicator,
                               ProxFunction, SmoothOracle, L1Norm,
                               StructuredConvexTerm)


# ---------------------------------------------------------------------------
# convolution with reflective boundaries


def _mirror_indices(length: int, pad: int) -> np.ndarray:
    """Whole-sample reflection indices for range(-pad, length+pad)."""
    if length == 1:
        return np.zeros(2 * pad + 1, dtype=int)
    idx = np.arange(-pad, length + pad)
    period = 2 * length - 2
    m = np.abs(idx) % period
    return np.where(m >= length, period - m, m)


class ConvOperator(LinearOp):
    """2-D convolution with whole-sample reflective boundary handling.

    The forward map mirrors the image across its border pixels before a
    valid-mode correlation with the kernel; the adjoint is the exact
    transpose of that composition (full convolution followed by folding the
    padded border back onto its source pixels).
    """

    def __init__(self, kernel: np.ndarray, shape):
        self.kernel = np.asarray(kernel, dtype=float)
        if self.kernel.ndim != 2:
            raise ValueError("kernel must be 2-D")
        kh, kw = self.kernel.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("kernel dimensions must be odd")
        self.shape = (int(shape[0]), int(shape[1]))
        h, w = self.shape
        if kh > h or kw > w:
            raise ValueError("kernel larger than image")
        self._ph, self._pw = kh // 2, kw // 2
        if self._ph > h - 1 or self._pw > w - 1:
            raise ValueError("kernel too large for whole-sample reflection")
        self._rows = _mirror_indices(h, self._ph)
        self._cols = _mirror_indices(w, self._pw)
        self.in_dim = self.out_dim = h * w

    def matvec(self, x):
        img = np.asarray(x, dtype=float).reshape(self.shape)
        # equals valid correlation of the whole-sample mirrored image
        return _nd_correlate(img, self.kernel, mode="mirror").ravel()

    @staticmethod
    def _fold(z: np.ndarray, length: int, pad: int) -> np.ndarray:
        # transpose of whole-sample mirror padding along axis 0
        out = z[pad:pad + length].copy()
        if pad:
            out[1:pad + 1] += z[:pad][::-1]
            out[length - 1 - pad:length - 1] += z[length + pad:][::-1]
        return out

    def rmatvec(self, y):
        img = np.asarray(y, dtype=float).reshape(self.shape)
        full = convolve2d(img, self.kernel, mode="full")
        h, w = self.shape
        tmp = self._fold(full, h, self._ph)
        return self._fold(tmp.T, w, self._pw).T.ravel()


def conv2_reflective(op: ConvOperator, x: np.ndarray) -> np.ndarray:
    return op.matvec(np.asarray(x, dtype=float).ravel()).reshape(op.shape)


def adjoint_conv2(op: ConvOperator, y: np.ndarray) -> np.ndarray:
    return op.rmatvec(np.asarray(y, dtype=float).ravel()).reshape(op.shape)


def gaussian_kernel(size: int = 5, sigma: float = 1.0) -> np.ndarray:
    """Normalized truncated Gaussian blur kernel of odd ``size``."""
    if size % 2 == 0:
        raise ValueError("size must be odd")
    r = np.arange(size) - size // 2
    g = np.exp(-0.5 * (r / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


# ---------------------------------------------------------------------------
# discrete gradient and total variation


class GradOp(LinearOp):
    """Forward-difference 2-D gradient with Neumann boundary (last row/column
    differences are zero).  Output stacks the vertical then the horizontal
    differences; ``||M||^2 <= 8`` classically."""

    def __init__(self, shape):
        self.shape = (int(shape[0]), int(shape[1]))
        h, w = self.shape
        self.in_dim = h * w
        self.out_dim = 2 * h * w

    def matvec(self, x):
        img = np.asarray(x, dtype=float).reshape(self.shape)
        dv = np.zeros(self.shape)
        dh = np.zeros(self.shape)
        dv[:-1, :] = img[1:, :] - img[:-1, :]
        dh[:, :-1] = img[:, 1:] - img[:, :-1]
        return np.concatenate([dv.ravel(), dh.ravel()])

    def rmatvec(self, y):
        h, w = self.shape
        dv = np.asarray(y[:h * w], dtype=float).reshape(self.shape)
        dh = np.asarray(y[h * w:], dtype=float).reshape(self.shape)
        out = np.zeros(self.shape)
        out[:-1, :] -= dv[:-1, :]
        out[1:, :] += dv[:-1, :]
        out[:, :-1] -= dh[:, :-1]
        out[:, 1:] += dh[:, :-1]
        return out.ravel()


class GroupL2(ProxFunction):
    """``rho * sum_i ||(u_i, v_i)||_2`` over per-pixel difference pairs.

    The input vector stacks the two difference fields; the conjugate is the
    indicator of the per-pixel l2-ball of radius rho.
    """

    def __init__(self, rho: float):
        if rho <= 0:
            raise ValueError("rho must be positive")
        self.rho = float(rho)

    def _norms(self, u):
        a, b = np.split(np.asarray(u, dtype=float), 2)
        return np.sqrt(a * a + b * b)

    def value(self, x):
        return self.rho * float(np.sum(self._norms(x)))

    def prox(self, u, sigma):
        u = np.asarray(u, dtype=float)
        a, b = np.split(u, 2)
        norms = np.sqrt(a * a + b * b)
        scale = np.zeros_like(norms)
        mask = norms > 0
        scale[mask] = np.maximum(norms[mask] - sigma * self.rho, 0.0) / norms[mask]
        return np.concatenate([a * scale, b * scale])

    def conjugate(self, w):
        norms = self._norms(w)
        if np.max(norms, initial=0.0) > self.rho * (1.0 + self.feas_rtol):
            return np.inf
        return 0.0


def tv_term(rho: float, shape) -> StructuredConvexTerm:
    """Total variation plus nonnegativity as a structured convex term."""
    op = GradOp(shape)
    return StructuredConvexTerm([Block(op, GroupL2(rho))],
                                xi=NonnegIndicator(), n=op.in_dim,
                                op_norm_sq_bound=8.0)


# ---------------------------------------------------------------------------
# fidelities and regularizers


def l1_fidelity_term(H: ConvOperator, g: np.ndarray) -> StructuredConvexTerm:
    """``||Hx - g||_1`` plus nonnegativity as a structured convex term."""
    g = np.asarray(g, dtype=float).ravel()
    if g.size != H.out_dim:
        raise ValueError("data size does not match operator output")
    return StructuredConvexTerm([Block(H, L1Norm(1.0, shift=g))],
                                xi=NonnegIndicator(), n=H.in_dim,
                                op_norm_sq_bound=None)


@dataclass
class FilterBank:
    """Filter kernels with positive weights and a global weight rho."""

    filters: Sequence  # (kernel, weight) pairs
    rho: float = 0.08

    def __post_init__(self):
        if not self.filters:
            raise ValueError("filter bank must be nonempty")
        if any(w <= 0 for _, w in self.filters):
            raise ValueError("filter weights must be positive")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


def dct_filter_bank(rho: float = 0.08) -> FilterBank:
    """The 8 non-constant 3x3 DCT-II basis filters with equal weights."""
    def basis(p):
        c = np.sqrt(1.0 / 3.0) if p == 0 else np.sqrt(2.0 / 3.0)
        return c * np.cos(np.pi * (2.0 * np.arange(3) + 1.0) * p / 6.0)

    filters = []
    for p in range(3):
        for q in range(3):
            if p == 0 and q == 0:
                continue
            filters.append((np.outer(basis(p), basis(q)), 1.0 / 8.0))
    return FilterBank(filters=filters, rho=rho)


def log_filter_regularizer(bank: FilterBank, shape) -> SmoothOracle:
    """Smooth edge-preserving regularizer ``rho sum_l w_l sum_i
    log(1 + (K_l x)_i^2)`` over a filter bank."""
    ops = [(ConvOperator(k, shape), w) for k, w in bank.filters]
    rho = bank.rho

    def value(x):
        total = 0.0
        for op, w in ops:
            u = op.matvec(x)
            total += w * float(np.sum(np.log1p(u * u)))
        return rho * total

    def grad(x):
        out = np.zeros(int(shape[0]) * int(shape[1]))
        for op, w in ops:
            u = op.matvec(x)
            out += w * op.rmatvec(2.0 * u / (1.0 + u * u))
        return rho * out

    return SmoothOracle(value, grad)


def gaussian_sd_fidelity(H: ConvOperator, g: np.ndarray, a=0.01,
                         c=1.0) -> SmoothOracle:
    """Signal-dependent Gaussian discrepancy
    ``1/2 sum ((Hx)_i - g_i)^2 / (a_i (Hx)_i + c_i) + log(a_i (Hx)_i + c_i)``.

    Defined on the open set where every denominator is positive; the value is
    ``+inf`` outside it and the gradient raises there.
    """
    g = np.asarray(g, dtype=float).ravel()
    a = np.broadcast_to(np.asarray(a, dtype=float).ravel(), g.shape).copy()
    c = np.broadcast_to(np.asarray(c, dtype=float).ravel(), g.shape).copy()
    if np.any(a <= 0) or np.any(c <= 0):
        raise ValueError("a and c must be positive")

    def value(x):
        t = H.matvec(x)
        den = a * t + c
        if np.min(den) <= 0:
            return np.inf
        r = t - g
        return float(0.5 * np.sum(r * r / den) + np.sum(np.log(den)))

    def grad(x):
        t = H.matvec(x)
        den = a * t + c
        if np.min(den) <= 0:
            raise DomainError("point outside the open domain of the fidelity")
        r = t - g
        dt = r / den - 0.5 * a * r * r / (den * den) + a / den
        return H.rmatvec(dt)

    return SmoothOracle(value, grad)


# ---------------------------------------------------------------------------
# noise, metrics, test images


def impulse_noise(x: np.ndarray, fraction: float, seed: int,
                  peak: float = 255.0) -> np.ndarray:
    """Salt-and-pepper corruption of ``round(fraction * n)`` pixels.

    Half the corrupted pixels go to ``peak`` and half to 0 (odd counts favor
    salt); deterministic given ``seed``.  Pixel values are assumed to live in
    ``[0, peak]``.
    """
    x = np.asarray(x, dtype=float)
    if not (0.0 <= fraction <= 1.0):
        raise ValueError("fraction must lie in [0, 1]")
    n = x.size
    m = int(round(fraction * n))
    out = x.copy().ravel()
    if m == 0:
        return out.reshape(x.shape)
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=m, replace=False)
    n_salt = (m + 1) // 2
    out[idx[:n_salt]] = peak
    out[idx[n_salt:]] = 0.0
    return out.reshape(x.shape)


def psnr(x: np.ndarray, ref: np.ndarray, peak: float) -> float:
    """``10 log10(peak^2 n / ||x - ref||^2)`` in dB, capped at 300."""
    x = np.asarray(x, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if x.shape != ref.shape:
        raise ValueError("shape mismatch")
    err = float(np.sum((x - ref) ** 2))
    if err == 0.0:
        return 300.0
    return min(float(10.0 * np.log10(peak * peak * x.size / err)), 300.0)


def phantom(size: int = 64, peak: float = 255.0) -> np.ndarray:
    """Piecewise-smooth synthetic test image in ``[0, peak]``."""
    i, j = np.meshgrid(np.linspace(-1, 1, size), np.linspace(-1, 1, size),
                       indexing="ij")
    img = 0.25 + 0.45 * np.exp(-((i + 0.3) ** 2 + (j + 0.3) ** 2) / 0.08)
    img += 0.35 * ((np.abs(i - 0.35) < 0.3) & (np.abs(j - 0.25) < 0.35))
    img += 0.15 * ((i ** 2 + (j - 0.45) ** 2) < 0.04)
    return np.clip(img, 0.0, 1.0) * peak


# ---------------------------------------------------------------------------
# image I/O

_RAW_MAGIC = b"IFBRAW64"


def write_pgm(path, img: np.ndarray, peak: float = 255.0) -> None:
    """8-bit binary PGM (P5, maxval 255); values scaled from [0, peak]."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    data = np.clip(np.rint(img * (255.0 / peak)), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM (P5) file")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError("only maxval 255 supported")
    pos += 1  # single whitespace after maxval
    data = np.frombuffer(raw, dtype=np.uint8, count=h * w, offset=pos)
    return data.reshape(h, w).astype(float)


def write_raw(path, img: np.ndarray) -> None:
    """Lossless float64 dump: 16-byte header (magic, height, width), then
    row-major little-endian float64 samples."""
    img = np.ascontiguousarray(np.asarray(img, dtype="<f8"))
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_RAW_MAGIC)
        fh.write(struct.pack("<II", img.shape[0], img.shape[1]))
        fh.write(img.tobytes())


def read_raw(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:8] != _RAW_MAGIC:
            raise ValueError("bad raw image magic")
        h, w = struct.unpack("<II", head[8:])
        data = np.frombuffer(fh.read(8 * h * w), dtype="<f8")
    if data.size != h * w:
        raise ValueError("truncated raw image")
    return data.reshape(h, w).astype(float)
