"""Rate budgets, the packet wire format, and the error-free channel."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .masking import SelectionMask, build_mask, pack_bitmap, unpack_bitmap

_HEADER = struct.Struct("<IHHH")  # image id, P, D, n_selected
HEADER_BITS = 8 * _HEADER.size
TOKEN_BITS = 32


class CorruptPacketError(ValueError):
    pass


def budget_for_rate(r, num_patches):
    """Number of patch tokens a packet may carry at compression rate ``r``."""
    if not 0.0 < r <= 1.0:
        raise ValueError(f"rate {r} outside (0, 1]")
    if r == 1.0:
        return num_patches
    return math.floor(r * num_patches + 1e-9)


def _grid_shape(p):
    side = math.isqrt(p)
    return (side, side) if side * side == p else (1, p)


@dataclass(frozen=True)
class Packet:
    image_id: int
    num_patches: int
    dim: int
    bitmap: bytes
    payload: np.ndarray  # (n_selected, D) float32, ascending patch index

    def __post_init__(self):
        payload = np.asarray(self.payload, dtype=np.float32)
        object.__setattr__(self, "payload", payload)
        try:
            bits = unpack_bitmap(self.bitmap, self.num_patches)
        except ValueError as exc:
            raise CorruptPacketError(str(exc)) from exc
        n = int(bits.sum())
        if payload.ndim != 2 or payload.shape != (n, self.dim):
            raise CorruptPacketError(
                f"bitmap selects {n} patches but payload has shape {payload.shape} (D={self.dim})"
            )

    @property
    def n_selected(self):
        return len(self.payload)

    @property
    def selected(self):
        return np.flatnonzero(unpack_bitmap(self.bitmap, self.num_patches))

    def to_bytes(self):
        head = _HEADER.pack(self.image_id, self.num_patches, self.dim, self.n_selected)
        return head + self.bitmap + np.ascontiguousarray(self.payload, dtype="<f4").tobytes()

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < _HEADER.size:
            raise CorruptPacketError("packet shorter than its header")
        image_id, p, d, n = _HEADER.unpack_from(data, 0)
        nbitmap = math.ceil(p / 8)
        expected = _HEADER.size + nbitmap + 4 * n * d
        if len(data) != expected:
            raise CorruptPacketError(f"packet is {len(data)} bytes, header implies {expected}")
        bitmap = data[_HEADER.size : _HEADER.size + nbitmap]
        payload = np.frombuffer(data, dtype="<f4", offset=_HEADER.size + nbitmap).reshape(n, d)
        return cls(image_id, p, d, bitmap, payload.astype(np.float32))

    def bits(self):
        """Budgeted size: header plus token payload; the bitmap is not charged."""
        return HEADER_BITS + self.n_selected * self.dim * TOKEN_BITS


def pack(z, mask, image_id):
    """z is the (D, P+1) token matrix; the CLS column is never sent."""
    z = np.asarray(getattr(z, "data", z))
    if z.ndim != 2 or z.shape[1] != mask.flat.size + 1:
        raise ValueError(f"token matrix {z.shape} does not match a mask over {mask.flat.size} patches")
    patches = z[:, 1:]
    payload = patches[:, mask.indices].T
    return Packet(int(image_id), mask.flat.size, z.shape[0], pack_bitmap(mask.flat), payload)


def unpack(packet, rows=None, cols=None):
    """Scatter the payload into a zero (D, P) matrix; returns (z_hat, mask)."""
    if rows is None or cols is None:
        rows, cols = _grid_shape(packet.num_patches)
    try:
        flat = unpack_bitmap(packet.bitmap, packet.num_patches)
    except ValueError as exc:
        raise CorruptPacketError(str(exc)) from exc
    idx = np.flatnonzero(flat)
    if len(idx) != len(packet.payload) or packet.payload.shape[1:] != (packet.dim,):
        raise CorruptPacketError("bitmap and payload disagree")
    zhat = np.zeros((packet.dim, packet.num_patches), dtype=np.float32)
    zhat[:, idx] = packet.payload.T
    return zhat, SelectionMask(flat, rows, cols)


@dataclass(frozen=True)
class ChannelModel:
    """Per-step compression rates; a one-entry schedule with ``fixed`` set applies to every step."""

    schedule: tuple
    fixed: bool = False

    def __post_init__(self):
        sched = tuple(float(r) for r in self.schedule)
        if not sched:
            raise ValueError("empty rate schedule")
        for r in sched:
            if not 0.0 < r <= 1.0:
                raise ValueError(f"rate {r} outside (0, 1]")
        object.__setattr__(self, "schedule", sched)

    @classmethod
    def constant(cls, r):
        return cls((r,), fixed=True)

    def rate_at(self, step):
        if self.fixed:
            return self.schedule[0]
        if not 0 <= step < len(self.schedule):
            raise IndexError(f"no rate scheduled for step {step}")
        return self.schedule[step]


def transmit(channel, step, z, grid, alpha, seed, image_id=0):
    """budget -> mask -> packet. The channel itself is lossless."""
    scores = getattr(grid, "scores", grid)
    n_budget = budget_for_rate(channel.rate_at(step), np.size(scores))
    mask = build_mask(grid, n_budget, alpha, seed)
    return pack(z, mask, image_id)


def fill_seed(seed, epoch, image_id):
    """Per-image random-fill seed, derived so reruns reproduce every mask."""
    return int(np.random.SeedSequence([seed, epoch, int(image_id)]).generate_state(1)[0])


def transmit_batch(z, grids, ids, rate, alpha, seed, epoch=0, bypass=False):
    """Send a batch through pack -> wire bytes -> unpack.

    z is (B, D, P+1), grids (B, rows, cols). Returns z_hat (B, D, P) and the
    selection masks. With ``bypass`` the compressor is skipped: z_hat is the
    patch tokens unchanged and every mask is full.
    """
    z = np.asarray(z)
    b, _, n = z.shape
    rows, cols = grids.shape[1:]
    if bypass:
        return z[:, :, 1:].copy(), [SelectionMask.full(rows, cols) for _ in range(b)]
    channel = ChannelModel.constant(rate)
    zhat = np.empty((b, z.shape[1], n - 1), dtype=np.float32)
    masks = []
    for i in range(b):
        pkt = transmit(channel, 0, z[i], grids[i], alpha, fill_seed(seed, epoch, ids[i]), ids[i])
        zhat[i], mask = unpack(Packet.from_bytes(pkt.to_bytes()), rows, cols)
        masks.append(mask)
    return zhat, masks


def write_packets(path, packets):
    """Length-prefixed (u32) packet stream."""
    with open(path, "wb") as fh:
        for pkt in packets:
            raw = pkt.to_bytes()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def read_packets(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    out, off = [], 0
    while off < len(buf):
        if off + 4 > len(buf):
            raise CorruptPacketError("truncated length prefix")
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        if off + n > len(buf):
            raise CorruptPacketError("truncated packet")
        out.append(Packet.from_bytes(buf[off : off + n]))
        off += n
    return out
