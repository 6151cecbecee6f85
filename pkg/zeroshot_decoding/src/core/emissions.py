"""
Emission matrices: the interface between an acoustic model and the decoder.

Binary layout (little-endian)::

    b"CTCE" | u32 version=1 | u32 T | u32 V
    V x (u16 byte length + UTF-8 symbol)
    T*V float32 natural-log probabilities, row-major

Each utterance lives in its own file; a manifest TSV
(``utterance_id<TAB>path<TAB>reference-text``) lists them. Manifest paths
are resolved relative to the manifest's directory.
"""

import logging
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from config.settings import NEG_INF
from .exceptions import (DimensionError, EmptyReference, FormatError, InvalidConfig,
                         InvalidEmissions, IoFailure, ParseError, VocabMismatch)
from .file_exporter import FileExporter
from .romanizer import ALPHABET, RomanizedText

logger = logging.getLogger(__name__)

MAGIC = b"CTCE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_VOCAB_LENGTH = struct.Struct("<H")

# tolerance on |logsumexp(row)|
ROW_NORM_TOLERANCE = 1e-3
# multiplicative jitter range on non-target probabilities
JITTER_FRACTION = 0.1


def row_logsumexp(logp: np.ndarray) -> np.ndarray:
    top = logp.max(axis=1, keepdims=True)
    return (top + np.log(np.exp(logp - top).sum(axis=1, keepdims=True)))[:, 0]


@dataclass(frozen=True, eq=False)
class EmissionMatrix:
    """T x V log-probabilities over the canonical alphabet, stored as float32"""
    utterance_id: str
    logp: np.ndarray
    vocab: tuple = ALPHABET.symbols

    def __post_init__(self):
        logp = np.array(self.logp, dtype=np.float32)
        logp.setflags(write=False)
        object.__setattr__(self, "logp", logp)
        object.__setattr__(self, "vocab", tuple(self.vocab))

        if self.vocab != ALPHABET.symbols:
            raise VocabMismatch(
                f"Utterance '{self.utterance_id}': vocabulary differs from the "
                "canonical alphabet")
        if logp.ndim != 2 or logp.shape[1] != len(self.vocab):
            raise InvalidEmissions(
                f"Utterance '{self.utterance_id}': expected T x {len(self.vocab)} "
                f"matrix, got shape {logp.shape}")
        if logp.size == 0:
            return
        if not np.all(np.isfinite(logp)) or np.any(logp > 0):
            raise InvalidEmissions(
                f"Utterance '{self.utterance_id}': entries must be finite and <= 0")
        norms = row_logsumexp(logp.astype(np.float64))
        bad = np.flatnonzero(np.abs(norms) > ROW_NORM_TOLERANCE)
        if bad.size:
            raise InvalidEmissions(
                f"Utterance '{self.utterance_id}': frame {int(bad[0])} is not "
                f"normalized (log-sum {norms[bad[0]]:.4f})")

    @property
    def num_frames(self) -> int:
        return self.logp.shape[0]

    def scores(self) -> np.ndarray:
        """float64 copy used for search arithmetic"""
        return self.logp.astype(np.float64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmissionMatrix):
            return NotImplemented
        return (self.utterance_id == other.utterance_id
                and self.vocab == other.vocab
                and self.logp.shape == other.logp.shape
                and self.logp.tobytes() == other.logp.tobytes())

    __hash__ = None


def write_emissions(m: EmissionMatrix) -> bytes:
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, m.num_frames, len(m.vocab))]
    for symbol in m.vocab:
        encoded = symbol.encode("utf-8")
        parts.append(_VOCAB_LENGTH.pack(len(encoded)))
        parts.append(encoded)
    parts.append(m.logp.astype("<f4").tobytes())
    return b"".join(parts)


def read_emissions(data: bytes, utterance_id: str = "",
                   path: Optional[str] = None) -> EmissionMatrix:
    if len(data) < _HEADER.size:
        raise FormatError("Truncated header", path=path)
    magic, version, num_frames, vocab_size = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"Bad magic {magic!r}", path=path)
    if version != FORMAT_VERSION:
        raise FormatError(f"Unsupported version {version}", path=path)

    offset = _HEADER.size
    vocab: List[str] = []
    for _ in range(vocab_size):
        if offset + _VOCAB_LENGTH.size > len(data):
            raise FormatError("Truncated vocabulary", path=path)
        (length,) = _VOCAB_LENGTH.unpack_from(data, offset)
        offset += _VOCAB_LENGTH.size
        if offset + length > len(data):
            raise FormatError("Truncated vocabulary", path=path)
        try:
            vocab.append(data[offset:offset + length].decode("utf-8"))
        except UnicodeDecodeError:
            raise FormatError("Vocabulary entry is not UTF-8", path=path)
        offset += length

    if tuple(vocab) != ALPHABET.symbols:
        raise VocabMismatch("Vocabulary differs from the canonical alphabet", path=path)

    payload = data[offset:]
    expected = num_frames * vocab_size * 4
    if len(payload) != expected:
        raise DimensionError(
            f"Payload has {len(payload)} bytes, expected {expected} "
            f"for T={num_frames}, V={vocab_size}", path=path)

    logp = np.frombuffer(payload, dtype="<f4").reshape(num_frames, vocab_size)
    return EmissionMatrix(utterance_id=utterance_id, logp=logp, vocab=tuple(vocab))


def save_emissions(m: EmissionMatrix, filepath: Union[str, Path]):
    FileExporter.write_bytes(write_emissions(m), filepath)


def load_emissions(filepath: Union[str, Path],
                   utterance_id: Optional[str] = None) -> EmissionMatrix:
    path = Path(filepath)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise IoFailure(f"Cannot read emissions: {e}", path=str(path))
    return read_emissions(data, utterance_id if utterance_id is not None else path.stem,
                          path=str(path))


def utterance_seed(seed: int, utterance_id: str) -> int:
    """Per-utterance seed, independent of processing order"""
    return (seed & 0xFFFFFFFF) ^ zlib.crc32(utterance_id.encode("utf-8"))


def synthesize_emissions(reference: Union[RomanizedText, Sequence[str]],
                         frames_per_symbol: int = 1, noise: float = 0.0,
                         seed: int = 0, jitter: bool = False,
                         utterance_id: str = "") -> EmissionMatrix:
    """
    Build emissions whose per-frame argmax spells the reference.

    Each symbol gets `frames_per_symbol` frames with probability 1 - noise;
    the rest is spread evenly over the other V - 1 symbols (NEG_INF when
    noise is 0). A blank frame separates identical consecutive symbols.
    With `jitter`, non-target probabilities are scaled by factors drawn
    from [0.9, 1.1] and the row is renormalized.
    """
    symbols = tuple(reference.symbols if isinstance(reference, RomanizedText) else reference)
    if not symbols:
        raise EmptyReference("Cannot synthesize emissions for an empty reference")
    if frames_per_symbol < 1:
        raise InvalidConfig(f"frames_per_symbol must be >= 1, got {frames_per_symbol}")
    if not 0.0 <= noise < 1.0:
        raise InvalidConfig(f"noise must lie in [0, 1), got {noise}")
    unknown = [s for s in symbols if s not in ALPHABET.producible]
    if unknown:
        raise InvalidEmissions(f"Reference contains non-canonical symbols {unknown[:3]}")

    targets: List[int] = []
    for i, symbol in enumerate(symbols):
        if i > 0 and symbol == symbols[i - 1]:
            targets.append(ALPHABET.blank_index)
        targets.extend([ALPHABET.index(symbol)] * frames_per_symbol)

    num_frames, vocab_size = len(targets), len(ALPHABET)
    rows = np.arange(num_frames)
    probs = np.full((num_frames, vocab_size), noise / (vocab_size - 1))
    probs[rows, targets] = 1.0 - noise

    if jitter and noise > 0:
        rng = np.random.default_rng(seed)
        factors = rng.uniform(1 - JITTER_FRACTION, 1 + JITTER_FRACTION,
                              size=probs.shape)
        factors[rows, targets] = 1.0
        probs = probs * factors
        probs /= probs.sum(axis=1, keepdims=True)

    with np.errstate(divide="ignore"):
        logp = np.where(probs > 0, np.log(probs), NEG_INF)
    return EmissionMatrix(utterance_id=utterance_id, logp=logp)


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    path: Path
    reference: str


def parse_manifest(text: str, base_dir: Path,
                   path: Optional[str] = None) -> List[ManifestEntry]:
    entries: List[ManifestEntry] = []
    seen: Dict[str, int] = {}
    for line_number, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3 or not fields[0] or not fields[1]:
            raise ParseError("Expected 'utterance_id<TAB>path<TAB>reference'",
                             path=path, line=line_number)
        utterance_id, emission_path, reference = fields
        if utterance_id in seen:
            raise ParseError(
                f"Utterance '{utterance_id}' already listed on line {seen[utterance_id]}",
                path=path, line=line_number)
        seen[utterance_id] = line_number
        entries.append(ManifestEntry(
            utterance_id=utterance_id, path=base_dir / emission_path, reference=reference))
    return entries


def read_manifest(filepath: Union[str, Path]) -> List[ManifestEntry]:
    path = Path(filepath)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"Cannot read manifest: {e}", path=str(path))
    return parse_manifest(text, path.parent, path=str(path))


def write_manifest(entries: Sequence[ManifestEntry], filepath: Union[str, Path]):
    """Paths are written relative to the manifest directory when possible"""
    base_dir = Path(filepath).parent.resolve()
    rows = []
    for entry in entries:
        emission_path = Path(entry.path).resolve()
        try:
            emission_path = emission_path.relative_to(base_dir)
        except ValueError:
            pass
        rows.append((entry.utterance_id, emission_path.as_posix(), entry.reference))
    FileExporter.export_tsv(rows, filepath)
