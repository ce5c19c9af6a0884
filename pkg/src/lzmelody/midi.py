"""Minimal Standard MIDI File reader/writer.

Events keep their raw bytes: ``status`` is the (possibly running-status
restored) status byte, ``data`` the bytes that follow it. For meta events
``data`` is the meta type byte followed by the payload; for sysex events it
is the payload. Lengths are re-derived on write.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field


class MidiError(Exception):
    pass


class MidiBadMagicError(MidiError):
    pass


class MidiTruncatedError(MidiError):
    pass


class MidiVlqError(MidiError):
    pass


class MidiUnsupportedError(MidiError):
    pass


NOTE_OFF = 0x80
NOTE_ON = 0x90
PROGRAM_CHANGE = 0xC0
META = 0xFF
META_TEMPO = 0x51
META_END_OF_TRACK = 0x2F

# data-byte counts for channel voice messages, by high nibble
_CHANNEL_DATA_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


@dataclass(frozen=True)
class MidiEvent:
    delta: int
    status: int
    data: bytes = b""

    @property
    def is_note_on(self) -> bool:
        return self.status & 0xF0 == NOTE_ON and self.data[1] > 0

    @property
    def is_note_off(self) -> bool:
        kind = self.status & 0xF0
        return kind == NOTE_OFF or (kind == NOTE_ON and self.data[1] == 0)

    @property
    def is_meta(self) -> bool:
        return self.status == META


@dataclass
class SmfDocument:
    format: int = 0
    division: int = 480
    tracks: list[list[MidiEvent]] = field(default_factory=list)

    def note_events(self) -> list[MidiEvent]:
        return [e for tr in self.tracks for e in tr if e.is_note_on or e.is_note_off]


def read_vlq(buf: bytes, pos: int) -> tuple[int, int]:
    """Decode a variable-length quantity at ``pos``; returns (value, new_pos)."""
    value = 0
    for i in range(4):
        if pos >= len(buf):
            raise MidiTruncatedError("variable-length quantity runs past end of data")
        b = buf[pos]
        pos += 1
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, pos
    raise MidiVlqError("variable-length quantity longer than 4 bytes")


def write_vlq(value: int) -> bytes:
    if not 0 <= value <= 0x0FFFFFFF:
        raise MidiVlqError(f"value {value} not representable as a variable-length quantity")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _parse_track(chunk: bytes) -> list[MidiEvent]:
    events = []
    pos, running = 0, None
    n = len(chunk)
    while pos < n:
        delta, pos = read_vlq(chunk, pos)
        if pos >= n:
            raise MidiTruncatedError("event missing after delta time")
        status = chunk[pos]
        if status & 0x80:
            pos += 1
        elif running is None:
            raise MidiError("data byte without a preceding status byte")
        else:
            status = running
        if status == META:
            if pos >= n:
                raise MidiTruncatedError("meta event truncated")
            mtype = chunk[pos]
            length, pos = read_vlq(chunk, pos + 1)
            if pos + length > n:
                raise MidiTruncatedError("meta event payload truncated")
            events.append(MidiEvent(delta, META, bytes([mtype]) + chunk[pos:pos + length]))
            pos += length
            running = None
        elif status in (0xF0, 0xF7):
            length, pos = read_vlq(chunk, pos)
            if pos + length > n:
                raise MidiTruncatedError("sysex payload truncated")
            events.append(MidiEvent(delta, status, chunk[pos:pos + length]))
            pos += length
            running = None
        else:
            k = _CHANNEL_DATA_LEN.get(status & 0xF0)
            if k is None:
                raise MidiError(f"unsupported status byte 0x{status:02X}")
            if pos + k > n:
                raise MidiTruncatedError("channel message truncated")
            events.append(MidiEvent(delta, status, chunk[pos:pos + k]))
            pos += k
            running = status
    return events


def parse_smf(data: bytes) -> SmfDocument:
    if len(data) < 4 or data[:4] != b"MThd":
        raise MidiBadMagicError("not a Standard MIDI File (missing MThd)")
    if len(data) < 14:
        raise MidiTruncatedError("header chunk truncated")
    (hlen,) = struct.unpack_from(">I", data, 4)
    if hlen < 6 or len(data) < 8 + hlen:
        raise MidiTruncatedError("header chunk truncated")
    fmt, ntracks, division = struct.unpack_from(">HHH", data, 8)
    doc = SmfDocument(format=fmt, division=division)
    pos = 8 + hlen
    while pos < len(data) and len(doc.tracks) < ntracks:
        if pos + 8 > len(data):
            raise MidiTruncatedError("chunk header truncated")
        ctype = data[pos:pos + 4]
        (clen,) = struct.unpack_from(">I", data, pos + 4)
        body = data[pos + 8:pos + 8 + clen]
        if len(body) < clen:
            raise MidiTruncatedError(f"{ctype!r} chunk truncated")
        if ctype == b"MTrk":
            doc.tracks.append(_parse_track(body))
        pos += 8 + clen
    if len(doc.tracks) < ntracks:
        raise MidiTruncatedError(f"header announces {ntracks} tracks, found {len(doc.tracks)}")
    return doc


def _encode_event(ev: MidiEvent) -> bytes:
    if ev.status == META:
        return bytes([META, ev.data[0]]) + write_vlq(len(ev.data) - 1) + ev.data[1:]
    if ev.status in (0xF0, 0xF7):
        return bytes([ev.status]) + write_vlq(len(ev.data)) + ev.data
    return bytes([ev.status]) + ev.data


def write_smf(doc: SmfDocument) -> bytes:
    """Serialize with explicit status bytes on every event (no running status)."""
    out = [b"MThd", struct.pack(">IHHH", 6, doc.format, len(doc.tracks), doc.division)]
    for track in doc.tracks:
        body = b"".join(write_vlq(ev.delta) + _encode_event(ev) for ev in track)
        out.append(b"MTrk" + struct.pack(">I", len(body)) + body)
    return b"".join(out)


def tempo_event(bpm: float, delta: int = 0) -> MidiEvent:
    us = round(60_000_000 / bpm)
    return MidiEvent(delta, META, bytes([META_TEMPO]) + us.to_bytes(3, "big"))


def end_of_track(delta: int = 0) -> MidiEvent:
    return MidiEvent(delta, META, bytes([META_END_OF_TRACK]))
