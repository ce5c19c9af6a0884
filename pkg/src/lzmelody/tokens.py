"""Piano-roll tokenization: 0 = rest, 1 = continuation, 2.. = pitch onsets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .midi import (
    NOTE_OFF,
    NOTE_ON,
    PROGRAM_CHANGE,
    MidiEvent,
    MidiUnsupportedError,
    SmfDocument,
    end_of_track,
    tempo_event,
)

REST = 0
CONTINUATION = 1
FIRST_PITCH = 2
ALPHABET_SIZE = 90
SEQ_LEN = 256
NUM_PITCHES = ALPHABET_SIZE - FIRST_PITCH
VELOCITY = 100


class TokenError(Exception):
    pass


@dataclass(frozen=True)
class PianoRollConfig:
    steps_per_quarter: int = 4
    pitch_offset: int = 21
    tempo_bpm: float = 120.0
    ticks_per_quarter: int = 480
    seq_len: int = SEQ_LEN

    def __post_init__(self):
        if self.steps_per_quarter < 1:
            raise ValueError("steps_per_quarter must be >= 1")
        if self.pitch_offset < 0 or self.pitch_offset + NUM_PITCHES - 1 > 127:
            raise ValueError("pitch range must fit in MIDI 0..127")
        if self.ticks_per_quarter % self.steps_per_quarter:
            raise ValueError("ticks_per_quarter must be a multiple of steps_per_quarter")

    @property
    def ticks_per_step(self) -> int:
        return self.ticks_per_quarter // self.steps_per_quarter

    def pitch_to_token(self, pitch: int) -> int:
        p = min(max(pitch, self.pitch_offset), self.pitch_offset + NUM_PITCHES - 1)
        return p - self.pitch_offset + FIRST_PITCH

    def token_to_pitch(self, token: int) -> int:
        return token - FIRST_PITCH + self.pitch_offset


@dataclass(frozen=True)
class Note:
    start: int  # grid step
    end: int  # exclusive grid step
    pitch: int


def extract_notes(doc: SmfDocument, cfg: PianoRollConfig) -> list[Note]:
    """Grid-quantized notes from every track, ordered by onset then pitch."""
    if doc.division & 0x8000:
        raise MidiUnsupportedError("SMPTE time division is not supported")
    if doc.division == 0:
        raise TokenError("time division of 0 ticks per quarter")
    notes = []
    for track in doc.tracks:
        tick = 0
        sounding: dict[tuple[int, int], list[int]] = {}
        for ev in track:
            tick += ev.delta
            if ev.status >= 0xF0:
                continue
            key = (ev.status & 0x0F, ev.data[0] if ev.data else 0)
            if ev.is_note_on:
                sounding.setdefault(key, []).append(tick)
            elif ev.is_note_off and sounding.get(key):
                start = sounding[key].pop(0)
                notes.append((start, tick, key[1]))
        for (_, pitch), starts in sounding.items():
            notes.extend((s, tick, pitch) for s in starts)

    scale = cfg.steps_per_quarter / doc.division
    out = []
    for start, end, pitch in notes:
        s = int(round(start * scale))
        e = max(int(round(end * scale)), s + 1)
        out.append(Note(s, e, pitch))
    out.sort(key=lambda n: (n.start, n.pitch, n.end))
    return out


def encode_tokens(doc: SmfDocument, cfg: PianoRollConfig = PianoRollConfig()) -> np.ndarray:
    """Monophonic piano roll: at each step the highest sounding note wins.

    A step emits the pitch token when the winning note differs from the one
    chosen at the previous step (fresh onset or a lower note re-exposed),
    and a continuation while the same note keeps winning.
    """
    if not doc.tracks:
        raise TokenError("document has no tracks")
    n = cfg.seq_len
    best = np.full(n, -1, dtype=np.int64)
    best_pitch = np.full(n, -1, dtype=np.int64)
    for i, note in enumerate(extract_notes(doc, cfg)):
        lo, hi = max(note.start, 0), min(note.end, n)
        if lo >= hi:
            continue
        seg = slice(lo, hi)
        take = note.pitch > best_pitch[seg]
        # equal pitch: the later onset takes over (re-strike)
        take |= (note.pitch == best_pitch[seg])
        best[seg] = np.where(take, i, best[seg])
        best_pitch[seg] = np.where(take, note.pitch, best_pitch[seg])
    out = np.zeros(n, dtype=np.uint8)
    prev = -1
    for t in range(n):
        cur = best[t]
        if cur < 0:
            out[t] = REST
        elif cur == prev:
            out[t] = CONTINUATION
        else:
            out[t] = cfg.pitch_to_token(int(best_pitch[t]))
        prev = cur
    return out


def token_notes(tokens, cfg: PianoRollConfig = PianoRollConfig()) -> list[Note]:
    """Notes implied by a token sequence; a continuation with nothing sounding is a rest."""
    notes = []
    cur_start, cur_pitch = None, None
    for t, tok in enumerate(np.asarray(tokens).tolist()):
        if tok >= ALPHABET_SIZE or tok < 0:
            raise TokenError(f"token {tok} outside the alphabet")
        if tok == CONTINUATION and cur_start is not None:
            continue
        if cur_start is not None:
            notes.append(Note(cur_start, t, cur_pitch))
            cur_start = None
        if tok >= FIRST_PITCH:
            cur_start, cur_pitch = t, cfg.token_to_pitch(tok)
    if cur_start is not None:
        notes.append(Note(cur_start, len(tokens), cur_pitch))
    return notes


def decode_tokens(tokens, cfg: PianoRollConfig = PianoRollConfig()) -> SmfDocument:
    """Format-0 document: tempo, program 0, one velocity-100 note per onset."""
    tps = cfg.ticks_per_step
    timed = []  # (tick, order, status, data); note-offs sort before note-ons
    for note in token_notes(tokens, cfg):
        timed.append((note.start * tps, 1, NOTE_ON, bytes([note.pitch, VELOCITY])))
        timed.append((note.end * tps, 0, NOTE_OFF, bytes([note.pitch, 0])))
    timed.sort(key=lambda e: (e[0], e[1]))
    events = [tempo_event(cfg.tempo_bpm), MidiEvent(0, PROGRAM_CHANGE, bytes([0]))]
    last = 0
    for tick, _, status, data in timed:
        events.append(MidiEvent(tick - last, status, data))
        last = tick
    events.append(end_of_track(max(len(tokens) * tps - last, 0)))
    return SmfDocument(format=0, division=cfg.ticks_per_quarter, tracks=[events])


def is_valid_sequence(tokens) -> bool:
    """True when no continuation directly follows a rest."""
    t = np.asarray(tokens)
    return not bool(((t[1:] == CONTINUATION) & (t[:-1] == REST)).any())
