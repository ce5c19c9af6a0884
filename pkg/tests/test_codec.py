import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lzmelody.corpus import (
    CorpusBadMagicError,
    CorpusTruncatedError,
    CorpusVersionError,
    TokenCorpus,
    format_text,
    read_corpus,
    write_corpus,
)
from lzmelody.midi import (
    META,
    MidiBadMagicError,
    MidiEvent,
    MidiTruncatedError,
    MidiVlqError,
    SmfDocument,
    end_of_track,
    parse_smf,
    read_vlq,
    write_smf,
    write_vlq,
)
from lzmelody.tokens import (
    PianoRollConfig,
    TokenError,
    decode_tokens,
    encode_tokens,
    extract_notes,
    is_valid_sequence,
    token_notes,
)


def note_doc(notes, division=480, running_status=False):
    """Format-0 document from (start_tick, end_tick, pitch) triples."""
    timed = []
    for s, e, p in notes:
        timed.append((s, 1, 0x90, bytes([p, 90])))
        timed.append((e, 0, 0x80, bytes([p, 0])))
    timed.sort(key=lambda x: (x[0], x[1]))
    events, last = [], 0
    for tick, _, st_, data in timed:
        events.append(MidiEvent(tick - last, st_, data))
        last = tick
    events.append(end_of_track())
    return SmfDocument(0, division, [events])


def valid_tokens(draw_list):
    """Turn arbitrary tokens into a sequence decode/encode must preserve."""
    out = []
    for t in draw_list:
        if t == 1 and (not out or out[-1] == 0):
            t = 0
        out.append(t)
    return np.array(out, dtype=np.uint8)


class TestVlq:
    @pytest.mark.parametrize("value,encoded", [
        (0, b"\x00"), (0x40, b"\x40"), (0x7F, b"\x7f"), (0x80, b"\x81\x00"),
        (0x2000, b"\xc0\x00"), (0x3FFF, b"\xff\x7f"), (0x100000, b"\xc0\x80\x00"),
        (0x0FFFFFFF, b"\xff\xff\xff\x7f"),
    ])
    def test_known_encodings(self, value, encoded):
        assert write_vlq(value) == encoded
        assert read_vlq(encoded, 0) == (value, len(encoded))

    def test_too_long(self):
        with pytest.raises(MidiVlqError):
            read_vlq(b"\x81\x81\x81\x81\x01", 0)

    def test_truncated(self):
        with pytest.raises(MidiTruncatedError):
            read_vlq(b"\x81", 0)


class TestSmf:
    def test_single_note(self):
        doc = parse_smf(write_smf(note_doc([(0, 480, 60)])))
        assert len(doc.note_events()) == 2
        assert doc.division == 480 and doc.format == 0

    def test_running_status(self):
        # note-on C4, then E4 and two note-offs (velocity 0) under running status
        body = bytes([0x00, 0x90, 60, 100, 0x00, 64, 100, 0x83, 0x60, 60, 0, 0x00, 64, 0,
                      0x00, 0xFF, 0x2F, 0x00])
        data = b"MThd" + (6).to_bytes(4, "big") + bytes([0, 0, 0, 1, 0x01, 0xE0]) \
            + b"MTrk" + len(body).to_bytes(4, "big") + body
        doc = parse_smf(data)
        evs = doc.tracks[0]
        assert [e.status for e in evs[:4]] == [0x90] * 4
        assert evs[2].delta == 480 and evs[2].is_note_off
        assert parse_smf(write_smf(doc)).tracks == doc.tracks

    def test_bad_magic(self):
        data = bytearray(write_smf(note_doc([(0, 480, 60)])))
        data[:4] = b"XXXX"
        with pytest.raises(MidiBadMagicError):
            parse_smf(bytes(data))

    def test_truncated_track(self):
        data = write_smf(note_doc([(0, 480, 60)]))
        with pytest.raises(MidiTruncatedError):
            parse_smf(data[:-3])

    def test_meta_and_sysex_roundtrip(self):
        events = [MidiEvent(0, META, b"\x03" + b"melody"), MidiEvent(10, 0xF0, b"\x7e\x7f\x09\x01\xf7"),
                  MidiEvent(0, 0xB0, bytes([7, 100])), MidiEvent(5, 0xC0, bytes([3])), end_of_track()]
        doc = SmfDocument(1, 96, [events, [end_of_track(7)]])
        back = parse_smf(write_smf(doc))
        assert back.tracks == doc.tracks and back.format == 1 and back.division == 96

    @given(st.lists(st.tuples(st.integers(0, 5000), st.integers(1, 2000), st.integers(0, 127)),
                    max_size=20))
    @settings(max_examples=50)
    def test_roundtrip_property(self, notes):
        doc = note_doc([(s, s + d, p) for s, d, p in notes])
        once = parse_smf(write_smf(doc))
        assert once.tracks == doc.tracks
        assert parse_smf(write_smf(once)).tracks == once.tracks


class TestEncode:
    def test_quarter_note_c4(self):
        toks = encode_tokens(note_doc([(0, 480, 60)]))
        assert toks[:6].tolist() == [41, 1, 1, 1, 0, 0]
        assert len(toks) == 256 and (toks[4:] == 0).all()

    def test_silence(self):
        doc = SmfDocument(0, 480, [[end_of_track(480 * 8)]])
        assert (encode_tokens(doc) == 0).all()

    def test_highest_pitch_wins(self):
        toks = encode_tokens(note_doc([(0, 480, 60), (0, 480, 64)]))
        assert toks[:4].tolist() == [45, 1, 1, 1]

    def test_lower_note_reexposed_gets_an_onset(self):
        toks = encode_tokens(note_doc([(0, 960, 60), (0, 240, 72)]))
        assert toks[:8].tolist() == [53, 1, 41, 1, 1, 1, 1, 1]

    def test_out_of_range_pitches_clamp(self):
        toks = encode_tokens(note_doc([(0, 120, 10), (240, 360, 120)]))
        assert toks[0] == 2 and toks[2] == 89

    def test_truncates_to_256_steps(self):
        toks = encode_tokens(note_doc([(0, 480 * 100, 60)]))
        assert len(toks) == 256 and toks[0] == 41 and (toks[1:] == 1).all()

    def test_empty_document(self):
        with pytest.raises(TokenError):
            encode_tokens(SmfDocument(0, 480, []))

    @given(st.lists(st.integers(0, 89), min_size=1, max_size=256))
    def test_output_invariants(self, raw):
        toks = encode_tokens(decode_tokens(valid_tokens(raw)))
        assert toks.max() < 90
        assert is_valid_sequence(toks)


class TestDecode:
    def test_one_note_duration(self):
        doc = decode_tokens([41, 1, 1, 1])
        ons = [e for e in doc.tracks[0] if e.is_note_on]
        offs = [e for e in doc.tracks[0] if e.is_note_off]
        assert len(ons) == len(offs) == 1
        assert ons[0].data == bytes([60, 100])
        assert offs[0].delta == 480

    def test_all_rest(self):
        assert decode_tokens(np.zeros(256, dtype=np.uint8)).note_events() == []

    def test_export_constants(self):
        doc = decode_tokens([41])
        evs = doc.tracks[0]
        assert doc.format == 0 and doc.division == 480
        assert evs[0].data == b"\x51\x07\xa1\x20"  # 500000 us per quarter = 120 BPM
        assert (evs[1].status, evs[1].data) == (0xC0, b"\x00")

    @given(st.lists(st.integers(0, 89), min_size=1, max_size=256))
    def test_token_roundtrip(self, raw):
        toks = valid_tokens(raw)
        cfg = PianoRollConfig(seq_len=len(toks))
        assert encode_tokens(parse_smf(write_smf(decode_tokens(toks, cfg))), cfg).tolist() == toks.tolist()

    @given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 87)), min_size=1, max_size=30))
    def test_document_roundtrip(self, gaps_pitches):
        # monophonic, grid-aligned, in range
        notes, t = [], 0
        for gap_len, p in gaps_pitches:
            dur = 1 + (p % 5)
            if t + gap_len + dur > 256:
                break
            notes.append((t * 120 + gap_len * 120, (t + gap_len + dur) * 120, 21 + p))
            t += gap_len + dur
        cfg = PianoRollConfig()
        doc = note_doc(notes)
        back = decode_tokens(encode_tokens(doc, cfg), cfg)
        assert extract_notes(back, cfg) == extract_notes(doc, cfg)


class TestCorpus:
    def test_roundtrip(self, rng):
        c = TokenCorpus(90, 256, rng.integers(0, 90, size=(3, 256)))
        assert read_corpus(write_corpus(c)) == c

    def test_empty(self):
        c = TokenCorpus(90, 256, np.zeros((0, 256)))
        blob = write_corpus(c)
        assert len(blob) == 19
        back = read_corpus(blob)
        assert back == c and len(back) == 0

    def test_header_layout(self):
        blob = write_corpus(TokenCorpus(90, 4, [[0, 1, 2, 3]]))
        assert blob[:5] == b"LZTK\x01"
        assert blob[5:7] == (90).to_bytes(2, "little")
        assert blob[7:11] == (4).to_bytes(4, "little")
        assert blob[11:19] == (1).to_bytes(8, "little")
        assert blob[19:] == bytes([0, 1, 2, 3])

    def test_short_payload(self, rng):
        blob = write_corpus(TokenCorpus(90, 256, rng.integers(0, 90, size=(2, 256))))
        with pytest.raises(CorpusTruncatedError):
            read_corpus(blob[:-1])

    def test_bad_magic_and_version(self):
        blob = bytearray(write_corpus(TokenCorpus(90, 2, [[1, 2]])))
        with pytest.raises(CorpusBadMagicError):
            read_corpus(b"NOPE" + bytes(blob[4:]))
        blob[4] = 2
        with pytest.raises(CorpusVersionError):
            read_corpus(bytes(blob))

    def test_text_dump(self):
        assert format_text(TokenCorpus(90, 3, [[0, 41, 1], [2, 0, 0]])) == "0 41 1\n2 0 0\n"

    def test_token_notes_ignore_orphan_continuation(self):
        assert token_notes([1, 1, 41, 1]) == token_notes([0, 0, 41, 1])
