"""Datagram framing of coded records, a lossy loopback link and plain UDP transport.

A stream is sent as: the control record (stream header plus background
payload) a few times, one record per frame, and an end marker.  Every record
is cut into fragments that carry their own header and CRC.
"""
from __future__ import annotations

import logging
import socket
import struct
import zlib
from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .channel import packet_drops
from .codec import HEADER_SIZE, Bitstream, StreamHeader
from .errors import ConfigError, DecodeError

log = logging.getLogger(__name__)

PACKET_HEADER = struct.Struct("<IIHH")
OVERHEAD = PACKET_HEADER.size + 4
DEFAULT_MTU = 1200
CONTROL_INDEX = 0xFFFFFFFF
END_INDEX = 0xFFFFFFFE


@dataclass(frozen=True)
class Packet:
    stream_id: int
    frame_index: int
    fragment_index: int
    fragment_count: int
    payload: bytes

    def _head(self) -> bytes:
        return PACKET_HEADER.pack(self.stream_id, self.frame_index, self.fragment_index,
                                  self.fragment_count)

    def to_bytes(self) -> bytes:
        head = self._head()
        return head + struct.pack("<I", zlib.crc32(head + self.payload)) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Packet":
        if len(data) < OVERHEAD:
            raise DecodeError("datagram shorter than a packet header")
        sid, fidx, frag, count = PACKET_HEADER.unpack_from(data)
        (crc,) = struct.unpack_from("<I", data, PACKET_HEADER.size)
        payload = data[OVERHEAD:]
        if zlib.crc32(data[:PACKET_HEADER.size] + payload) != crc:
            raise DecodeError("packet CRC mismatch")
        if not frag < count:
            raise DecodeError("fragment index out of range")
        return cls(sid, fidx, frag, count, payload)


@dataclass(frozen=True)
class LossReport:
    frame_index: int
    missing: tuple


def packetize(record: bytes, frame_index: int, mtu: int = DEFAULT_MTU,
              stream_id: int = 0) -> list[Packet]:
    """Cut *record* into ``ceil(len / (mtu - 16))`` fragments (one for an empty record)."""
    if mtu <= OVERHEAD:
        raise ConfigError(f"mtu must exceed the {OVERHEAD}-byte packet header")
    room = mtu - OVERHEAD
    chunks = [record[i:i + room] for i in range(0, len(record), room)] or [b""]
    if len(chunks) > 0xFFFF:
        raise ConfigError("record needs more than 65535 fragments at this mtu")
    return [Packet(stream_id, frame_index, i, len(chunks), c) for i, c in enumerate(chunks)]


def depacketize(packets: Iterable[Packet], frame_index: int) -> Union[bytes, LossReport]:
    """Reassemble one record; duplicates and foreign packets are ignored."""
    frags: dict[int, bytes] = {}
    count = None
    for p in packets:
        if p.frame_index != frame_index:
            continue
        if count is None:
            count = p.fragment_count
        elif p.fragment_count != count:
            continue
        frags.setdefault(p.fragment_index, p.payload)
    if count is None:
        return LossReport(frame_index, ())
    missing = tuple(i for i in range(count) if i not in frags)
    if missing:
        return LossReport(frame_index, missing)
    return b"".join(frags[i] for i in range(count))


def stream_packets(stream: Bitstream, mtu: int = DEFAULT_MTU, stream_id: int = 0,
                   control_repeats: int = 3) -> list[Packet]:
    control = stream.header.pack() + stream.background
    out = []
    for _ in range(max(1, control_repeats)):
        out += packetize(control, CONTROL_INDEX, mtu, stream_id)
    for t, rec in enumerate(stream.records):
        out += packetize(rec, t, mtu, stream_id)
    out += packetize(b"", END_INDEX, mtu, stream_id)
    return out


class Reassembler:
    """Collects the packets of one stream and rebuilds a (possibly holed) Bitstream."""

    def __init__(self, stream_id: Optional[int] = None):
        self.stream_id = stream_id
        self._frames: dict[int, dict] = {}
        self._control: list[dict] = []
        self.finished = False

    def add(self, p: Packet) -> None:
        if self.stream_id is None:
            self.stream_id = p.stream_id
        if p.stream_id != self.stream_id:
            return
        if p.frame_index == END_INDEX:
            self.finished = True
            return
        if p.frame_index == CONTROL_INDEX:
            # Repeated copies restart the fragment numbering.
            if p.fragment_index == 0 or not self._control:
                self._control.append({})
            self._control[-1].setdefault(p.fragment_index, p)
            return
        self._frames.setdefault(p.frame_index, {}).setdefault(p.fragment_index, p)

    def add_datagram(self, data: bytes) -> bool:
        try:
            self.add(Packet.from_bytes(data))
        except DecodeError as e:
            log.debug("dropping datagram: %s", e)
            return False
        return True

    def _control_bytes(self) -> bytes:
        for copy in self._control:
            rec = depacketize(copy.values(), CONTROL_INDEX)
            if isinstance(rec, bytes) and len(rec) >= HEADER_SIZE:
                return rec
        raise DecodeError("no complete copy of the stream header arrived")

    def bitstream(self) -> tuple[Bitstream, list[int]]:
        """The received stream and the indices of frames with lost fragments."""
        control = self._control_bytes()
        header = StreamHeader.unpack(control)
        records, lost = [], []
        for t in range(header.frames):
            rec = depacketize(self._frames.get(t, {}).values(), t)
            if isinstance(rec, LossReport):
                lost.append(t)
                rec = b""
            records.append(rec)
        return Bitstream(header, control[HEADER_SIZE:], records), lost


def loopback(stream: Bitstream, loss: float = 0.0, seed: int = 0, mtu: int = DEFAULT_MTU,
             stream_id: int = 0, control_repeats: int = 3) -> tuple[Bitstream, list[int]]:
    """Send through an in-memory link that drops each datagram with probability *loss*."""
    datagrams = [p.to_bytes() for p in stream_packets(stream, mtu, stream_id, control_repeats)]
    drops = packet_drops(len(datagrams), loss, seed, stream_id)
    rx = Reassembler(stream_id)
    for d, lost in zip(datagrams, drops):
        if not lost:
            rx.add_datagram(d)
    return rx.bitstream()


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def send_udp(stream: Bitstream, dest: tuple[str, int], mtu: int = DEFAULT_MTU,
             stream_id: int = 0, control_repeats: int = 3, loss: float = 0.0,
             seed: int = 0) -> int:
    """Fire-and-forget transmission; returns the number of datagrams sent.

    A nonzero *loss* withholds each datagram with that probability (seeded),
    to exercise the receiver's concealment over a real socket.
    """
    packets = stream_packets(stream, mtu, stream_id, control_repeats)
    drops = packet_drops(len(packets), loss, seed, stream_id)
    sent = 0
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        for p, lost in zip(packets, drops):
            if not lost:
                sock.sendto(p.to_bytes(), dest)
                sent += 1
    return sent


def recv_udp(listen: Union[tuple[str, int], socket.socket], timeout: float = 5.0,
             max_size: int = 65535) -> tuple[Bitstream, list[int]]:
    """Receive one stream until its end marker or until *timeout* seconds of silence."""
    own = not isinstance(listen, socket.socket)
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM) if own else listen
    try:
        if own:
            sock.bind(listen)
        sock.settimeout(timeout)
        rx = Reassembler()
        while not rx.finished:
            try:
                data, _ = sock.recvfrom(max_size)
            except socket.timeout:
                break
            rx.add_datagram(data)
        return rx.bitstream()
    finally:
        if own:
            sock.close()
