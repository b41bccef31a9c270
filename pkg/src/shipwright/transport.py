"""RDMA-style transfers over a modelled link, plus the socket wire protocol.

Virtual time is kept as exact ``Fraction`` seconds so that sums of transfer
times compose without rounding drift.
"""

from __future__ import annotations

import enum
import socket
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

from .errors import PeerClosed, ProtocolError, RangeFault

Number = Union[int, float, Fraction, str]


def as_fraction(x: Number) -> Fraction:
    """Exact conversion; strings are read as decimals ("12.5" -> 25/2)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class LinkModel:
    latency_s: Fraction = Fraction(2, 10**6)
    bandwidth_Bps: Fraction = Fraction(125 * 10**8)

    def __post_init__(self):
        object.__setattr__(self, "latency_s", as_fraction(self.latency_s))
        object.__setattr__(self, "bandwidth_Bps", as_fraction(self.bandwidth_Bps))
        if self.latency_s < 0:
            raise ValueError("latency must be non-negative")
        if self.bandwidth_Bps <= 0:
            raise ValueError("bandwidth must be positive")

    @classmethod
    def from_config(cls, latency_us: Number, bandwidth_gbps: Number) -> "LinkModel":
        return cls(as_fraction(latency_us) / 10**6, as_fraction(bandwidth_gbps) * 10**9 / 8)

    @property
    def latency_us(self) -> Fraction:
        return self.latency_s * 10**6

    @property
    def bandwidth_gbps(self) -> Fraction:
        return self.bandwidth_Bps * 8 / 10**9

    def transfer_time(self, nbytes: int) -> Fraction:
        return self.latency_s + Fraction(nbytes) / self.bandwidth_Bps


@dataclass
class CpuCounter:
    """Busy time charged to one node's CPU."""

    busy_s: Fraction = Fraction(0)

    def charge(self, seconds: Fraction):
        if seconds < 0:
            raise ValueError("negative CPU charge")
        self.busy_s += seconds


@dataclass
class MemoryRegion:
    node_id: int
    content: memoryview
    base: int = 0
    cpu: CpuCounter = field(default_factory=CpuCounter)

    def __post_init__(self):
        self.content = memoryview(self.content).cast("B")

    @property
    def length(self) -> int:
        return len(self.content)

    def check(self, offset: int, length: int):
        if offset < 0 or length < 0 or offset + length > self.length:
            raise RangeFault(
                f"read [{offset}, {offset + length}) outside region of node "
                f"{self.node_id} (length {self.length})"
            )


@dataclass(frozen=True)
class TransferStats:
    bytes: int
    sim_time_s: Fraction
    worker_cpu_s: Fraction = Fraction(0)


def one_sided_read(region: MemoryRegion, offset: int, length: int, link: LinkModel):
    """Coordinator-initiated read; the owning worker's CPU is never charged."""
    region.check(offset, length)
    data = region.content[offset : offset + length]
    return data, TransferStats(length, link.transfer_time(length))


def gather_read(region: MemoryRegion, ranges: Sequence[tuple[int, int]], link: LinkModel):
    """Post several one-sided reads as one batch.

    Outstanding reads pipeline, so the batch pays the link latency once:
    ``latency + total / bandwidth``.
    """
    for offset, length in ranges:
        region.check(offset, length)
    chunks = [region.content[o : o + n] for o, n in ranges]
    total = sum(n for _, n in ranges)
    return chunks, TransferStats(total, link.transfer_time(total))


def result_push(wire: bytes, link: LinkModel) -> TransferStats:
    """Two-sided push of an encoded result; CPU for serialising it is the caller's."""
    return TransferStats(len(wire), link.transfer_time(len(wire)))


# -- socket wire protocol ---------------------------------------------------

FRAME_MAGIC = 0x51534850
_FRAME_HEADER = struct.Struct("<IBQ")
FRAME_HEADER_BYTES = _FRAME_HEADER.size
MAX_FRAME_PAYLOAD = 1 << 40


class MsgType(enum.IntEnum):
    QUERY_DISPATCH = 1
    FS_RESULT = 2
    DS_READ_REQ = 3
    DS_READ_RESP = 4


_DISPATCH = struct.Struct("<QBdQBIQ")
_READ_REQ = struct.Struct("<QQ")


@dataclass(frozen=True)
class QueryDispatch:
    query_id: int
    method: int
    rate: float
    seed: int
    scale_estimates: bool
    core_budget: int
    cluster_size: int

    type = MsgType.QUERY_DISPATCH

    def payload(self) -> bytes:
        return _DISPATCH.pack(self.query_id, self.method, self.rate, self.seed,
                              int(self.scale_estimates), self.core_budget, self.cluster_size)


@dataclass(frozen=True)
class FsResult:
    wire: bytes

    type = MsgType.FS_RESULT

    def payload(self) -> bytes:
        return bytes(self.wire)


@dataclass(frozen=True)
class DsReadReq:
    offset: int
    length: int

    type = MsgType.DS_READ_REQ

    def payload(self) -> bytes:
        return _READ_REQ.pack(self.offset, self.length)


@dataclass(frozen=True)
class DsReadResp:
    data: bytes

    type = MsgType.DS_READ_RESP

    def payload(self) -> bytes:
        return bytes(self.data)


Message = Union[QueryDispatch, FsResult, DsReadReq, DsReadResp]


def frame_encode(msg: Message) -> bytes:
    body = msg.payload()
    return _FRAME_HEADER.pack(FRAME_MAGIC, int(msg.type), len(body)) + body


def _parse_header(header) -> tuple[MsgType, int]:
    magic, mtype, length = _FRAME_HEADER.unpack(header)
    if magic != FRAME_MAGIC:
        raise ProtocolError(f"bad frame magic 0x{magic:08x}")
    try:
        mtype = MsgType(mtype)
    except ValueError:
        raise ProtocolError(f"unknown frame type {mtype}") from None
    if length > MAX_FRAME_PAYLOAD:
        raise ProtocolError(f"frame length {length} exceeds limit")
    return mtype, length


def _parse_payload(mtype: MsgType, body: bytes) -> Message:
    if mtype is MsgType.QUERY_DISPATCH:
        if len(body) != _DISPATCH.size:
            raise ProtocolError("QUERY_DISPATCH payload has wrong length")
        qid, method, rate, seed, scale, cores, csize = _DISPATCH.unpack(body)
        if scale not in (0, 1):
            raise ProtocolError("QUERY_DISPATCH scale flag must be 0 or 1")
        return QueryDispatch(qid, method, rate, seed, bool(scale), cores, csize)
    if mtype is MsgType.DS_READ_REQ:
        if len(body) != _READ_REQ.size:
            raise ProtocolError("DS_READ_REQ payload has wrong length")
        return DsReadReq(*_READ_REQ.unpack(body))
    if mtype is MsgType.FS_RESULT:
        return FsResult(bytes(body))
    return DsReadResp(bytes(body))


def frame_decode(buf: bytes) -> Message:
    buf = bytes(buf)
    if len(buf) < FRAME_HEADER_BYTES:
        raise ProtocolError("frame shorter than its header")
    mtype, length = _parse_header(buf[:FRAME_HEADER_BYTES])
    if len(buf) != FRAME_HEADER_BYTES + length:
        raise ProtocolError(
            f"frame declares {length} payload bytes, carries {len(buf) - FRAME_HEADER_BYTES}"
        )
    return _parse_payload(mtype, buf[FRAME_HEADER_BYTES:])


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    out = bytearray(n)
    view = memoryview(out)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:], n - got)
        if k == 0:
            if got == 0:
                raise PeerClosed("connection closed")
            raise ProtocolError(f"connection closed after {got} of {n} bytes")
        got += k
    return bytes(out)


def send_message(sock: socket.socket, msg: Message):
    sock.sendall(frame_encode(msg))


def recv_message(sock: socket.socket) -> Message:
    mtype, length = _parse_header(_recv_exact(sock, FRAME_HEADER_BYTES))
    return _parse_payload(mtype, _recv_exact(sock, length))

