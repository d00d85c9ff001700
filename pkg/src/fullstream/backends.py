"""Pluggable model backends producing joint temporal logits and per-codebook
acoustic logits.

Two implementations ship: a scripted backend that replays a state-keyed logit
table (the oracle for closed-loop tests) and a seeded toy transformer with
incremental decoding for shape, causality, and latency realism.  Both honor
the same request contract, so the engine cannot tell them apart.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .alignment import Phoneme
from .sampling import GuidanceConfig

__all__ = [
    "ModelDims",
    "SpeakerEmbedding",
    "BackendRequest",
    "TtOutput",
    "DtOutput",
    "make_cfg_batch",
    "ScriptedProgram",
    "ScriptedBackend",
    "ToyBackend",
    "save_weights",
    "load_weights",
    "stationary_program",
]


@dataclass(frozen=True)
class ModelDims:
    n_semantic_vocab: int = 64
    d_bins: int = 6
    n_codebooks: int = 16  # 1 semantic + 15 acoustic
    acoustic_vocab: int = 64
    embed: int = 64
    pt_layers: int = 2
    tt_layers: int = 2
    dt_layers: int = 1
    heads: int = 4
    frame_rate: float = 12.5
    phoneme_vocab: int = 64
    max_window: int = 64

    def __post_init__(self):
        if self.embed % self.heads != 0:
            raise ValueError("embed must divide evenly across heads")
        if self.n_codebooks < 2:
            raise ValueError("need at least 1 semantic + 1 acoustic codebook")

    @property
    def joint_width(self) -> int:
        return self.n_semantic_vocab * self.d_bins

    @property
    def n_acoustic(self) -> int:
        return self.n_codebooks - 1


@dataclass(frozen=True)
class SpeakerEmbedding:
    """Unit-norm speaker vector with a conditioning weight applied at the
    depth stage (default raises the conditioning by 50%)."""

    vector: np.ndarray
    conditioning_scale: float = 1.5

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("speaker embedding must be finite")
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError("speaker embedding must be nonzero")
        object.__setattr__(self, "vector", v / norm)

    @classmethod
    def random(cls, dim: int, seed: int, conditioning_scale: float = 1.5) -> "SpeakerEmbedding":
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal(dim), conditioning_scale)


@dataclass(frozen=True)
class BackendRequest:
    """One temporal step: the visible phoneme window, full audio-token history
    (prompt frames first), and the CFG drop flags for this branch."""

    window: tuple
    history: tuple  # rows of n_codebooks token ids
    speaker: SpeakerEmbedding | None
    frame_index: int
    cursor: int
    prompt_frames: int = 0
    drop_text: bool = False
    drop_audio_prefix: bool = False
    drop_speaker: bool = False

    def __post_init__(self):
        if self.frame_index != len(self.history):
            raise ValueError(
                f"frame index {self.frame_index} does not match history length {len(self.history)}"
            )

    def history_digest(self) -> str:
        h = hashlib.sha1()
        for row in self.history:
            h.update(np.asarray(row, dtype=np.int64).tobytes())
        return h.hexdigest()[:12]


@dataclass(frozen=True)
class TtOutput:
    joint_flat: np.ndarray  # width n_semantic_vocab * d_bins
    embedding: np.ndarray  # frame embedding consumed by the depth stage


@dataclass(frozen=True)
class DtOutput:
    codebook_logits: np.ndarray  # (n_acoustic, acoustic_vocab)


def make_cfg_batch(
    request: BackendRequest, guidance: GuidanceConfig
) -> tuple[BackendRequest, BackendRequest]:
    """Conditional request plus its unconditional twin with enabled
    conditionings dropped (text/audio prefix for the temporal stage, speaker
    for the depth stage)."""
    uncond = replace(
        request,
        drop_text=guidance.text_cfg_enabled,
        drop_audio_prefix=guidance.audio_cfg_enabled,
        drop_speaker=guidance.speaker_cfg_enabled,
    )
    return request, uncond


# ---------------------------------------------------------------------------
# scripted backend
# ---------------------------------------------------------------------------


def _match_rule(when: dict, request: BackendRequest) -> bool:
    if "frame" in when and request.frame_index != when["frame"]:
        return False
    if "frame_mod" in when:
        m, r = when["frame_mod"]
        if request.frame_index % m != r:
            return False
    if "cursor" in when and request.cursor != when["cursor"]:
        return False
    if "cursor_mod" in when:
        m, r = when["cursor_mod"]
        if request.cursor % m != r:
            return False
    if "text_dropped" in when and request.drop_text != when["text_dropped"]:
        return False
    if "digest" in when and request.history_digest() != when["digest"]:
        return False
    return True


class ScriptedProgram:
    """State-keyed logit table: ordered rules matched on (frame index, cursor,
    history digest, drop flags); first match wins, optional default."""

    def __init__(
        self,
        rules: list[dict],
        default: dict | None = None,
        n_vocab: int = 8,
        d_bins: int = 6,
        acoustic_vocab: int = 8,
        n_acoustic: int = 15,
        temperature: float = 0.9,
    ):
        self.rules = rules
        self.default = default
        self.n_vocab = n_vocab
        self.d_bins = d_bins
        self.acoustic_vocab = acoustic_vocab
        self.n_acoustic = n_acoustic
        self.temperature = temperature
        for rule in list(rules) + ([default] if default else []):
            self._compile(rule)

    def _compile(self, rule: dict) -> None:
        """Materialize joint and acoustic logit arrays for one rule."""
        if "joint" in rule:
            joint = np.asarray(rule["joint"], dtype=np.float64)
            if joint.shape != (self.d_bins, self.n_vocab):
                raise ValueError(f"rule joint shape {joint.shape} != ({self.d_bins}, {self.n_vocab})")
        elif "duration_probs" in rule:
            probs = np.asarray(rule["duration_probs"], dtype=np.float64)
            if probs.size != self.d_bins or np.any(probs <= 0):
                raise ValueError("duration_probs must be strictly positive, one per bin")
            probs = probs / probs.sum()
            # constant rows: the temperature-scaled marginal recovers probs exactly
            joint = np.repeat(
                (self.temperature * np.log(probs))[:, None], self.n_vocab, axis=1
            )
            if "semantic_logits" in rule:
                joint = joint + np.asarray(rule["semantic_logits"], dtype=np.float64)[None, :]
        else:
            raise ValueError("rule needs either 'joint' or 'duration_probs'")
        rule["_joint"] = joint

        if "acoustic" in rule:
            ac = np.asarray(rule["acoustic"], dtype=np.float64)
            if ac.shape != (self.n_acoustic, self.acoustic_vocab):
                raise ValueError("bad acoustic logits shape")
        elif "acoustic_peaks" in rule:
            peaks = rule["acoustic_peaks"]
            if len(peaks) != self.n_acoustic:
                raise ValueError(f"need {self.n_acoustic} acoustic peaks")
            ac = np.zeros((self.n_acoustic, self.acoustic_vocab))
            for i, p in enumerate(peaks):
                ac[i, p] = 1.0
        else:
            ac = np.zeros((self.n_acoustic, self.acoustic_vocab))
        rule["_acoustic"] = ac

    def lookup(self, request: BackendRequest) -> dict:
        for rule in self.rules:
            if _match_rule(rule.get("when", {}), request):
                return rule
        if self.default is not None:
            return self.default
        raise ValueError(
                "scripted program has no rule for state "
                f"(frame={request.frame_index}, cursor={request.cursor}, "
                f"digest={request.history_digest()})"
        )

    def to_json(self) -> str:
        def strip(rule):
            return {k: v for k, v in rule.items() if not k.startswith("_")}

        return json.dumps(
            {
                "n_vocab": self.n_vocab,
                "d_bins": self.d_bins,
                "acoustic_vocab": self.acoustic_vocab,
                "n_acoustic": self.n_acoustic,
                "temperature": self.temperature,
                "rules": [strip(r) for r in self.rules],
                "default": strip(self.default) if self.default else None,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ScriptedProgram":
        doc = json.loads(text)
        return cls(
            rules=doc.get("rules", []),
            default=doc.get("default"),
            n_vocab=doc.get("n_vocab", 8),
            d_bins=doc.get("d_bins", 6),
            acoustic_vocab=doc.get("acoustic_vocab", 8),
            n_acoustic=doc.get("n_acoustic", 15),
            temperature=doc.get("temperature", 0.9),
        )

    @classmethod
    def from_file(cls, path) -> "ScriptedProgram":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def stationary_program(
    duration_probs=(0.26, 0.10, 0.24, 0.12, 0.06, 0.22),
    n_vocab: int = 8,
    acoustic_vocab: int = 8,
) -> ScriptedProgram:
    """Constant full-support program: the default closed-loop test scenario."""
    return ScriptedProgram(
        rules=[],
        default={"duration_probs": list(duration_probs)},
        n_vocab=n_vocab,
        acoustic_vocab=acoustic_vocab,
    )


def make_backend(kind: str, seed: int = 0):
    """Backend from a CLI-style spec: `toy`, `scripted`, or `scripted:FILE`."""
    if kind == "scripted":
        return ScriptedBackend(stationary_program())
    if kind.startswith("scripted:"):
        return ScriptedBackend(ScriptedProgram.from_file(kind.split(":", 1)[1]))
    if kind == "toy":
        return ToyBackend(ModelDims(), seed=seed)
    raise ValueError(f"unknown backend {kind!r}")


class ScriptedBackend:
    """Replays a scripted program; deterministic and stateless apart from
    remembering the last temporal rule so the depth step can serve its
    acoustic logits."""

    def __init__(self, program: ScriptedProgram, embed: int = 8):
        self.program = program
        self.dims = ModelDims(
            n_semantic_vocab=program.n_vocab,
            d_bins=program.d_bins,
            acoustic_vocab=program.acoustic_vocab,
            n_codebooks=program.n_acoustic + 1,
            embed=embed,
            heads=1,
        )
        self._last_rule: dict | None = None

    def tt_step(self, request: BackendRequest) -> TtOutput:
        rule = self.program.lookup(request)
        self._last_rule = rule
        return TtOutput(
            joint_flat=rule["_joint"].reshape(-1).copy(),
            embedding=np.zeros(self.dims.embed),
        )

    def tt_step_batch(self, requests: list[BackendRequest]) -> list[TtOutput]:
        return [self.tt_step(r) for r in requests]

    def dt_step(
        self,
        frame_embedding: np.ndarray,
        semantic_token: int,
        speaker: SpeakerEmbedding | None,
        speaker_dropped: bool = False,
    ) -> DtOutput:
        if self._last_rule is None:
            raise ValueError("depth step before any temporal step")
        return DtOutput(codebook_logits=self._last_rule["_acoustic"].copy())


# ---------------------------------------------------------------------------
# toy transformer backend
# ---------------------------------------------------------------------------


def _init(rng: np.random.Generator, *shape, scale: float = 0.1) -> np.ndarray:
    """float32-representable values upcast to float64, so the 32-bit weight
    export round-trips bit-exactly."""
    w = rng.standard_normal(shape, dtype=np.float32) * np.float32(scale)
    return w.astype(np.float64)


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-5) * g + b


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class _Block:
    """Pre-norm transformer block with optional causal masking."""

    def __init__(self, rng: np.random.Generator, dim: int, heads: int):
        self.dim = dim
        self.heads = heads
        self.wq = _init(rng, dim, dim)
        self.wk = _init(rng, dim, dim)
        self.wv = _init(rng, dim, dim)
        self.wo = _init(rng, dim, dim)
        self.w1 = _init(rng, dim, 4 * dim)
        self.w2 = _init(rng, 4 * dim, dim)
        self.ln1_g = np.ones(dim)
        self.ln1_b = np.zeros(dim)
        self.ln2_g = np.ones(dim)
        self.ln2_b = np.zeros(dim)

    def tensors(self, prefix: str) -> dict:
        return {
            f"{prefix}.wq": self.wq, f"{prefix}.wk": self.wk, f"{prefix}.wv": self.wv,
            f"{prefix}.wo": self.wo, f"{prefix}.w1": self.w1, f"{prefix}.w2": self.w2,
            f"{prefix}.ln1_g": self.ln1_g, f"{prefix}.ln1_b": self.ln1_b,
            f"{prefix}.ln2_g": self.ln2_g, f"{prefix}.ln2_b": self.ln2_b,
        }

    def _attend(self, q: np.ndarray, k: np.ndarray, v: np.ndarray, causal_offset: int | None):
        tq, dim = q.shape
        tk = k.shape[0]
        hd = dim // self.heads
        qh = q.reshape(tq, self.heads, hd).transpose(1, 0, 2)
        kh = k.reshape(tk, self.heads, hd).transpose(1, 0, 2)
        vh = v.reshape(tk, self.heads, hd).transpose(1, 0, 2)
        scores = qh @ kh.transpose(0, 2, 1) / np.sqrt(hd)
        if causal_offset is not None:
            qpos = np.arange(tq)[:, None] + causal_offset
            kpos = np.arange(tk)[None, :]
            scores = np.where(kpos <= qpos, scores, -np.inf)
        out = _softmax(scores) @ vh
        return out.transpose(1, 0, 2).reshape(tq, dim)

    def forward(self, x: np.ndarray, cache: dict | None = None, causal: bool = False) -> np.ndarray:
        """x: (T, dim) new positions.  With a cache, keys/values accumulate
        across calls and queries attend to everything seen so far."""
        h = _layer_norm(x, self.ln1_g, self.ln1_b)
        q, k, v = h @ self.wq, h @ self.wk, h @ self.wv
        if cache is not None:
            offset = cache["k"].shape[0] if "k" in cache else 0
            k = np.concatenate([cache["k"], k]) if "k" in cache else k
            v = np.concatenate([cache["v"], v]) if "v" in cache else v
            cache["k"], cache["v"] = k, v
            attn = self._attend(q, k, v, causal_offset=offset)
        else:
            attn = self._attend(q, k, v, causal_offset=0 if causal else None)
        x = x + attn @ self.wo
        h = _layer_norm(x, self.ln2_g, self.ln2_b)
        return x + _gelu(h @ self.w1) @ self.w2


class ToyBackend:
    """Seeded random-weight transformer stack: a windowed phoneme encoder, a
    causal temporal decoder with per-branch KV caches, and a parallel-head
    depth stage.  Inference only; the point is exact shapes, causality, and
    realistic per-frame compute, not trained quality."""

    def __init__(self, dims: ModelDims = ModelDims(), seed: int = 0):
        self.dims = dims
        self.seed = seed
        rng = np.random.default_rng(seed)
        d = dims.embed
        self.phoneme_embed = _init(rng, dims.phoneme_vocab, d)
        self.pt_pos = _init(rng, dims.max_window, d)
        self.semantic_embed = _init(rng, dims.n_semantic_vocab, d)
        self.acoustic_embed = _init(rng, dims.n_acoustic, dims.acoustic_vocab, d)
        self.bos_audio = _init(rng, d)
        self.null_text = _init(rng, d)
        self.null_audio = _init(rng, d)
        self.null_speaker = _init(rng, d)
        self.pt_blocks = [_Block(rng, d, dims.heads) for _ in range(dims.pt_layers)]
        self.tt_blocks = [_Block(rng, d, dims.heads) for _ in range(dims.tt_layers)]
        self.tt_ln_g = np.ones(d)
        self.tt_ln_b = np.zeros(d)
        self.joint_head = _init(rng, d, dims.joint_width)
        self.joint_bias = np.zeros(dims.joint_width)
        self.dt_in_frame = _init(rng, d, d)
        self.dt_in_speaker = _init(rng, d, d)
        self.dt_in_semantic = _init(rng, d, d)
        self.dt_blocks_w1 = [_init(rng, d, 4 * d) for _ in range(dims.dt_layers)]
        self.dt_blocks_w2 = [_init(rng, 4 * d, d) for _ in range(dims.dt_layers)]
        self.dt_heads = _init(rng, dims.n_acoustic, d, dims.acoustic_vocab)
        # per-CFG-branch incremental state
        self._branches: dict[tuple[bool, bool], dict] = {}

    # -- weight registry -----------------------------------------------------

    def tensors(self) -> dict:
        t = {
            "phoneme_embed": self.phoneme_embed, "pt_pos": self.pt_pos,
            "semantic_embed": self.semantic_embed, "acoustic_embed": self.acoustic_embed,
            "bos_audio": self.bos_audio, "null_text": self.null_text,
            "null_audio": self.null_audio, "null_speaker": self.null_speaker,
            "tt_ln_g": self.tt_ln_g, "tt_ln_b": self.tt_ln_b,
            "joint_head": self.joint_head, "joint_bias": self.joint_bias,
            "dt_in_frame": self.dt_in_frame, "dt_in_speaker": self.dt_in_speaker,
            "dt_in_semantic": self.dt_in_semantic, "dt_heads": self.dt_heads,
        }
        for i, blk in enumerate(self.pt_blocks):
            t.update(blk.tensors(f"pt.{i}"))
        for i, blk in enumerate(self.tt_blocks):
            t.update(blk.tensors(f"tt.{i}"))
        for i, w in enumerate(self.dt_blocks_w1):
            t[f"dt.{i}.w1"] = w
        for i, w in enumerate(self.dt_blocks_w2):
            t[f"dt.{i}.w2"] = w
        return t

    def set_tensor(self, name: str, value: np.ndarray) -> None:
        t = self.tensors()
        if name not in t:
            raise KeyError(name)
        t[name][...] = value

    # -- phoneme encoder -----------------------------------------------------

    def _encode_window(self, window) -> np.ndarray:
        """Context vector for the cursor phoneme from the visible window."""
        if not window:
            return self.null_text.copy()
        if len(window) > self.dims.max_window:
            raise ValueError(f"window of {len(window)} exceeds max of {self.dims.max_window}")
        ids = []
        for p in window:
            sym = p.symbol if isinstance(p, Phoneme) else int(p)
            if not (0 <= sym < self.dims.phoneme_vocab):
                raise ValueError(f"phoneme symbol {sym} outside vocab of {self.dims.phoneme_vocab}")
            ids.append(sym)
        x = self.phoneme_embed[ids] + self.pt_pos[: len(ids)]
        for blk in self.pt_blocks:
            x = blk.forward(x)
        return x[0]

    # -- temporal decoder ----------------------------------------------------

    def _audio_input(self, position: int, request: BackendRequest, drop_prefix: bool) -> np.ndarray:
        """Audio embedding feeding temporal position `position` (the tokens of
        the previous frame, BOS at position 0)."""
        if position == 0:
            return self.bos_audio
        row = request.history[position - 1]
        if drop_prefix and (position - 1) < request.prompt_frames:
            return self.null_audio
        if len(row) != self.dims.n_codebooks:
            raise ValueError(f"history row has {len(row)} codebooks, expected {self.dims.n_codebooks}")
        sem = row[0]
        if not (0 <= sem < self.dims.n_semantic_vocab):
            raise ValueError(f"semantic token {sem} out of range")
        acc = self.semantic_embed[sem].copy()
        for i, tok in enumerate(row[1:]):
            if not (0 <= tok < self.dims.acoustic_vocab):
                raise ValueError(f"acoustic token {tok} out of range")
            acc += self.acoustic_embed[i, tok]
        return acc / self.dims.n_codebooks

    def _text_input(self, position: int, request: BackendRequest, drop_text: bool) -> np.ndarray:
        if position < request.prompt_frames:
            # masked prompt transcript: one UNK per prompt frame
            return self.phoneme_embed[0]
        if drop_text:
            return self.null_text
        return self._encode_window(request.window)

    def _branch(self, key: tuple[bool, bool]) -> dict:
        if key not in self._branches:
            self._branches[key] = {"len": 0, "rows": [], "inputs": [], "caches": [{} for _ in self.tt_blocks]}
        return self._branches[key]

    def tt_step(self, request: BackendRequest) -> TtOutput:
        if request.speaker is not None and request.speaker.vector.size != self.dims.embed:
            raise ValueError("speaker embedding width does not match model dims")
        key = (request.drop_text, request.drop_audio_prefix)
        br = self._branch(key)
        n = len(request.history)
        seen = br["rows"]
        if [tuple(r) for r in request.history[: len(seen)]] != seen:
            raise ValueError("audio history diverged from this backend session; use a fresh backend")
        if br["len"] > n:
            raise ValueError(f"temporal position {n} already decoded on this branch")
        # positions br["len"]..n-1 have inputs fixed by history; position n is current
        new_inputs = []
        for pos in range(br["len"], n + 1):
            x = self._audio_input(pos, request, key[1]) + self._text_input(pos, request, key[0])
            new_inputs.append(x)
        x = np.stack(new_inputs)
        for blk, cache in zip(self.tt_blocks, br["caches"]):
            x = blk.forward(x, cache=cache)
        br["len"] = n + 1
        br["rows"] = [tuple(r) for r in request.history]
        br["inputs"].extend(new_inputs)
        h = _layer_norm(x[-1], self.tt_ln_g, self.tt_ln_b)
        return TtOutput(joint_flat=h @ self.joint_head + self.joint_bias, embedding=h)

    def tt_step_batch(self, requests: list[BackendRequest]) -> list[TtOutput]:
        return [self.tt_step(r) for r in requests]

    def tt_recompute(self, branch_key: tuple[bool, bool] = (False, False)) -> np.ndarray:
        """From-scratch forward over every recorded input of a branch; returns
        the full (T, joint_width) logit matrix for cache-consistency checks."""
        br = self._branch(branch_key)
        if not br["inputs"]:
            raise ValueError("branch has no recorded steps")
        x = np.stack(br["inputs"])
        for blk in self.tt_blocks:
            x = blk.forward(x, causal=True)
        h = _layer_norm(x, self.tt_ln_g, self.tt_ln_b)
        return h @ self.joint_head + self.joint_bias

    # -- depth stage -----------------------------------------------------------

    def dt_step(
        self,
        frame_embedding: np.ndarray,
        semantic_token: int,
        speaker: SpeakerEmbedding | None,
        speaker_dropped: bool = False,
    ) -> DtOutput:
        if frame_embedding.shape != (self.dims.embed,):
            raise ValueError(f"frame embedding shape {frame_embedding.shape} != ({self.dims.embed},)")
        if not (0 <= semantic_token < self.dims.n_semantic_vocab):
            raise ValueError(f"semantic token {semantic_token} out of range")
        if speaker_dropped or speaker is None:
            spk = self.null_speaker
        else:
            spk = speaker.vector * speaker.conditioning_scale
        h = (
            frame_embedding @ self.dt_in_frame
            + spk @ self.dt_in_speaker
            + self.semantic_embed[semantic_token] @ self.dt_in_semantic
        )
        for w1, w2 in zip(self.dt_blocks_w1, self.dt_blocks_w2):
            h = h + _gelu(h @ w1) @ w2
        logits = np.einsum("d,cdv->cv", h, self.dt_heads)
        return DtOutput(codebook_logits=logits)


# ---------------------------------------------------------------------------
# weight export / import: text header + flat little-endian float32 payload
# ---------------------------------------------------------------------------

_WEIGHT_MAGIC = "toy-backbone-weights v1"


def save_weights(backend: ToyBackend, path) -> None:
    tensors = backend.tensors()
    names = sorted(tensors)
    header = {
        "dims": backend.dims.__dict__,
        "seed": backend.seed,
        "tensors": [[n, list(tensors[n].shape)] for n in names],
    }
    with open(path, "wb") as fh:
        fh.write((_WEIGHT_MAGIC + "\n").encode())
        fh.write((json.dumps(header) + "\n").encode())
        for n in names:
            fh.write(np.ascontiguousarray(tensors[n], dtype="<f4").tobytes())


def load_weights(path) -> ToyBackend:
    with open(path, "rb") as fh:
        magic = fh.readline().decode().strip()
        if magic != _WEIGHT_MAGIC:
            raise ValueError(f"not a toy weight file (header {magic!r})")
        header = json.loads(fh.readline().decode())
        payload = fh.read()
    backend = ToyBackend(ModelDims(**header["dims"]), seed=header["seed"])
    offset = 0
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        offset += count * 4
        backend.set_tensor(name, arr.reshape(shape).astype(np.float64))
    if offset != len(payload):
        raise ValueError("weight payload size mismatch")
    return backend
