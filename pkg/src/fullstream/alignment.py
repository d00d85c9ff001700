"""Incremental phoneme buffer and the monotonic alignment state machine.

Duration tokens jointly encode a cursor shift (0-2) and a phonemes-per-frame
coverage width (1-2), giving 6 token ids.  The alignment cursor indexes
non-punctuation phonemes only; punctuation stays visible to the encoder
window but never satisfies duration needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

N_DURATION_TOKENS = 6
SHIFT_RANGE = (0, 1, 2)
PPF_RANGE = (1, 2)
DEFAULT_LA_MIN = 3
DEFAULT_LA_MAX = 25


@dataclass(frozen=True)
class Phoneme:
    symbol: int
    is_punctuation: bool = False
    is_syllable_nucleus: bool = False

    def __post_init__(self):
        if self.is_punctuation and self.is_syllable_nucleus:
            raise ValueError("punctuation phonemes are never syllable nuclei")


@dataclass(frozen=True)
class DurationToken:
    shift: int
    ppf: int

    def __post_init__(self):
        if self.shift not in SHIFT_RANGE:
            raise ValueError(f"shift must be in {SHIFT_RANGE}, got {self.shift}")
        if self.ppf not in PPF_RANGE:
            raise ValueError(f"ppf must be in {PPF_RANGE}, got {self.ppf}")

    @property
    def token_id(self) -> int:
        return duration_encode(self.shift, self.ppf)


def duration_encode(shift: int, ppf: int) -> int:
    """Bijection (shift, ppf) -> id = shift*2 + (ppf-1), ids 0..5."""
    if shift not in SHIFT_RANGE or ppf not in PPF_RANGE:
        raise ValueError(f"invalid duration token (shift={shift}, ppf={ppf})")
    return shift * 2 + (ppf - 1)


def duration_decode(token_id: int) -> tuple[int, int]:
    if not (0 <= token_id < N_DURATION_TOKENS):
        raise ValueError(f"duration token id {token_id} out of range [0, {N_DURATION_TOKENS})")
    return token_id // 2, token_id % 2 + 1


class PhonemeStream:
    """Append-only phoneme buffer with an end-of-input flag."""

    def __init__(self):
        self._buffer: list[Phoneme] = []
        self._nonpunct_positions: list[int] = []
        self.ended = False

    def append(self, phoneme: Phoneme) -> None:
        if self.ended:
            raise ValueError("cannot append after the stream has ended")
        if not phoneme.is_punctuation:
            self._nonpunct_positions.append(len(self._buffer))
        self._buffer.append(phoneme)

    def extend(self, phonemes) -> None:
        for p in phonemes:
            self.append(p)

    def end(self) -> None:
        self.ended = True

    def __len__(self) -> int:
        return len(self._buffer)

    def __getitem__(self, i):
        return self._buffer[i]

    @property
    def phonemes(self) -> list[Phoneme]:
        return self._buffer

    @property
    def nonpunct_count(self) -> int:
        return len(self._nonpunct_positions)

    def nonpunct_position(self, idx: int) -> int:
        """Buffer position of the idx-th non-punctuation phoneme."""
        return self._nonpunct_positions[idx]

    def nonpunct_phoneme(self, idx: int) -> Phoneme:
        return self._buffer[self._nonpunct_positions[idx]]


@dataclass
class AlignmentState:
    """Monotonic phoneme cursor plus the per-frame coverage log."""

    cursor: int = 0
    frames_emitted: int = 0
    assignments: list[list[int]] = field(default_factory=list)
    coverage_gaps: list[tuple[int, list[int]]] = field(default_factory=list)
    max_covered: int = -1  # highest phoneme index covered so far


def advance(
    state: AlignmentState, token: DurationToken, stream: "PhonemeStream | None" = None
) -> list[int]:
    """Apply one duration token: cover [cursor, cursor+ppf-1], then shift the cursor.

    Returns the covered phoneme indices.  A shift beyond the coverage width
    skips phonemes; the skip is recorded as a coverage gap, not an error.
    Passing the stream validates the token against the legality mask first.
    """
    if stream is not None and not legal_duration_mask(state, stream)[token.token_id]:
        raise ValueError(
            f"duration token (shift={token.shift}, ppf={token.ppf}) illegal at "
            f"cursor {state.cursor} with {stream.nonpunct_count} phonemes buffered"
        )
    covered = list(range(state.cursor, state.cursor + token.ppf))
    if token.shift > token.ppf:
        skipped = list(range(state.cursor + token.ppf, state.cursor + token.shift))
        state.coverage_gaps.append((state.frames_emitted, skipped))
    state.assignments.append(covered)
    state.cursor += token.shift
    state.frames_emitted += 1
    state.max_covered = max(state.max_covered, covered[-1])
    return covered


def first_coverage_nuclei(state: AlignmentState, stream: PhonemeStream, covered: list[int]) -> int:
    """Syllable nuclei among newly covered phonemes.

    A nucleus counts once, at first coverage, so elongation does not inflate
    the measured speaking rate.  Call before advance() updates max_covered,
    or pass the pre-advance watermark explicitly via covered bookkeeping.
    """
    prev_max = state.max_covered
    return sum(
        1 for i in covered if i > prev_max and stream.nonpunct_phoneme(i).is_syllable_nucleus
    )


def legal_duration_mask(state: AlignmentState, stream: PhonemeStream) -> list[bool]:
    """Legality of each of the 6 duration tokens at the current cursor.

    A token is illegal when its coverage would run past the last buffered
    non-punctuation phoneme or the post-shift cursor would pass the end of
    the buffer.  Look-ahead is the gate's job, checked once per frame start:
    if the mask also pinned the cursor la_min short of the buffer, a zero-
    shift token would always stay legal and generation could never stall,
    it would silently elongate instead.
    """
    total = stream.nonpunct_count
    mask = []
    for token_id in range(N_DURATION_TOKENS):
        shift, ppf = duration_decode(token_id)
        mask.append(state.cursor + ppf <= total and state.cursor + shift <= total)
    return mask


def gate(stream: PhonemeStream, state: AlignmentState, la_min: int = DEFAULT_LA_MIN) -> bool:
    """True when generation may proceed: enough buffered look-ahead, or the
    stream has ended with phonemes still unconsumed."""
    remaining = stream.nonpunct_count - state.cursor
    if stream.ended:
        return remaining > 0
    return remaining >= la_min


def visible_window(
    stream: PhonemeStream, state: AlignmentState, la_max: int = DEFAULT_LA_MAX
) -> list[Phoneme]:
    """Phonemes visible to the encoder: the current phoneme plus up to la_max
    non-punctuation phonemes ahead, with interleaved punctuation included."""
    if stream.nonpunct_count == 0:
        return []
    if state.cursor >= stream.nonpunct_count:
        return []
    start = stream.nonpunct_position(state.cursor)
    last_np = min(state.cursor + la_max, stream.nonpunct_count - 1)
    end = stream.nonpunct_position(last_np)
    return stream.phonemes[start : end + 1]


def strip_punctuation(phonemes: list[Phoneme]) -> tuple[list[int], list[int]]:
    """Positions that survive punctuation removal.

    Returns (kept_positions, back_map) where back_map[i] is the original
    position of the i-th kept phoneme (they coincide; kept for clarity at
    call sites that index the reduced sequence).
    """
    kept = [i for i, p in enumerate(phonemes) if not p.is_punctuation]
    return kept, list(kept)


@dataclass(frozen=True)
class PromptSpec:
    """Acoustic prompt: per-frame codec tokens plus the UNK symbol that
    replaces the prompt transcript, one UNK per frame."""

    frame_count: int
    audio_tokens: tuple  # frame_count rows of 16 token ids
    unk_symbol: int = 0

    def __post_init__(self):
        if self.frame_count < 0:
            raise ValueError("frame_count must be >= 0")
        if len(self.audio_tokens) != self.frame_count:
            raise ValueError(
                f"prompt has {len(self.audio_tokens)} token rows for {self.frame_count} frames"
            )


def mask_prompt(prompt: PromptSpec) -> list[int]:
    """Masked prompt transcript: exactly one UNK symbol per acoustic frame."""
    return [prompt.unk_symbol] * prompt.frame_count
