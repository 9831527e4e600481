"""Corpus I/O, frozen word vectors, aspect alignment and a synthetic corpus."""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

MAX_LEN = 80


class Polarity(IntEnum):
    POSITIVE = 0
    NEUTRAL = 1
    NEGATIVE = 2

    @classmethod
    def parse(cls, name: str) -> "Polarity":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown polarity {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


class CorpusError(ValueError):
    pass


class SegmentId(IntEnum):
    CONTEXT = 0
    ASPECT = 1


def _check_span(text: str, start: int, end: int) -> None:
    if not (0 <= start < end <= len(text)):
        raise CorpusError(f"aspect span [{start}, {end}) invalid for text of length {len(text)}")
    if not text[start:end].strip():
        raise CorpusError("aspect span is blank")


@dataclass(frozen=True)
class UnlabeledSample:
    text: str
    aspect_start: int
    aspect_end: int

    def __post_init__(self):
        _check_span(self.text, self.aspect_start, self.aspect_end)

    @property
    def aspect(self) -> str:
        return self.text[self.aspect_start:self.aspect_end]


@dataclass(frozen=True)
class LabeledSample:
    text: str
    aspect_start: int
    aspect_end: int
    label: Polarity

    def __post_init__(self):
        _check_span(self.text, self.aspect_start, self.aspect_end)
        object.__setattr__(self, "label", Polarity(self.label))

    @property
    def aspect(self) -> str:
        return self.text[self.aspect_start:self.aspect_end]


Sample = Union[LabeledSample, UnlabeledSample]


def sample_to_dict(sample: Sample) -> dict:
    out = {"text": sample.text, "aspect_start": sample.aspect_start,
           "aspect_end": sample.aspect_end}
    if isinstance(sample, LabeledSample):
        out["label"] = sample.label.label
    return out


def sample_from_dict(obj: dict) -> Sample:
    for key in ("text", "aspect_start", "aspect_end"):
        if key not in obj:
            raise CorpusError(f"missing field {key!r}")
    text, start, end = obj["text"], obj["aspect_start"], obj["aspect_end"]
    if not isinstance(text, str) or not isinstance(start, int) or not isinstance(end, int):
        raise CorpusError("text must be a string and offsets integers")
    label = obj.get("label")
    if label is None:
        return UnlabeledSample(text, start, end)
    return LabeledSample(text, start, end, Polarity.parse(label))


def load_jsonl(path) -> List[Sample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                samples.append(sample_from_dict(json.loads(line)))
            except (json.JSONDecodeError, CorpusError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return samples


def dump_jsonl(samples: Iterable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            obj = s if isinstance(s, dict) else sample_to_dict(s)
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


class Vocabulary:
    """Token index with a frozen vector table; PAD and UNK are reserved and all-zero."""

    PAD = 0
    UNK = 1
    RESERVED = ("<pad>", "<unk>")

    def __init__(self, tokens: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.shape[0] != len(tokens):
            raise ValueError("one vector per token required")
        self.tokens: List[str] = list(self.RESERVED) + list(tokens)
        self.index: Dict[str, int] = {}
        for i, tok in enumerate(self.tokens):
            if tok in self.index:
                raise ValueError(f"duplicate token {tok!r}")
            self.index[tok] = i
        dim = vectors.shape[1] if vectors.ndim == 2 else 0
        table = np.zeros((len(self.tokens), dim))
        table[len(self.RESERVED):] = vectors
        table.setflags(write=False)
        self._vectors = table

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def lookup(self, token: str) -> int:
        return self.index.get(token, self.UNK)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update("\n".join(self.tokens).encode())
        h.update(self._vectors.tobytes())
        return h.hexdigest()

    @classmethod
    def from_table(cls, tokens: Sequence[str], table: np.ndarray) -> "Vocabulary":
        """Rebuild from a full token list (reserved entries included) and table."""
        if tuple(tokens[: len(cls.RESERVED)]) != cls.RESERVED:
            raise ValueError("token list must start with the reserved entries")
        return cls(tokens[len(cls.RESERVED):], np.asarray(table)[len(cls.RESERVED):])


def load_word_vectors(path, dim: int) -> Vocabulary:
    tokens, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise CorpusError(
                    f"{path}:{lineno}: token {token!r} has {len(values)} values, expected {dim}"
                )
            try:
                rows.append([float(v) for v in values])
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: token {token!r} has a non-numeric value") from None
            tokens.append(token)
    return Vocabulary(tokens, np.array(rows).reshape(len(rows), dim))


def save_word_vectors(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tok, vec in zip(vocab.tokens[2:], vocab.vectors[2:]):
            fh.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")


@dataclass(frozen=True)
class TokenizedSample:
    tokens: Tuple[str, ...]
    token_ids: Tuple[int, ...]
    aspect_start: int
    aspect_len: int
    segment_ids: Tuple[int, ...]
    position_tags: Tuple[int, ...]
    label: Optional[Polarity] = None

    @property
    def aspect_span(self) -> Tuple[int, int]:
        return self.aspect_start, self.aspect_start + self.aspect_len

    @property
    def left_ids(self) -> Tuple[int, ...]:
        return self.token_ids[: self.aspect_start]

    @property
    def aspect_ids(self) -> Tuple[int, ...]:
        return self.token_ids[self.aspect_start: self.aspect_start + self.aspect_len]

    @property
    def right_ids(self) -> Tuple[int, ...]:
        return self.token_ids[self.aspect_start + self.aspect_len:]

    def __len__(self):
        return len(self.token_ids)


_TOKEN_RE = re.compile(r"\S+")


def position_tags(n: int, k: int, l_a: int) -> Tuple[int, ...]:
    """Signed distance of each token to the aspect span [k, k + l_a)."""
    last = k + l_a - 1
    return tuple(i - k if i < k else (i - last if i > last else 0) for i in range(n))


def tokenize_and_align(sample: Sample, vocabulary: Vocabulary, max_len: int = MAX_LEN) -> TokenizedSample:
    matches = list(_TOKEN_RE.finditer(sample.text))
    start, end = sample.aspect_start, sample.aspect_end
    span = sample.text[start:end]
    start += len(span) - len(span.lstrip())
    end -= len(span) - len(span.rstrip())
    starts = [m.start() for m in matches]
    ends = [m.end() for m in matches]
    if start not in starts or end not in ends:
        raise CorpusError(
            f"aspect {sample.text[start:end]!r} is not aligned to whitespace token boundaries"
        )
    k = starts.index(start)
    last = ends.index(end)
    if len(matches) > max_len:
        raise CorpusError(f"sentence has {len(matches)} tokens, maximum is {max_len}")
    tokens = tuple(m.group().lower() for m in matches)
    l_a = last - k + 1
    segments = tuple(
        int(SegmentId.ASPECT) if k <= i <= last else int(SegmentId.CONTEXT)
        for i in range(len(tokens))
    )
    return TokenizedSample(
        tokens=tokens,
        token_ids=tuple(vocabulary.lookup(t) for t in tokens),
        aspect_start=k,
        aspect_len=l_a,
        segment_ids=segments,
        position_tags=position_tags(len(tokens), k, l_a),
        label=getattr(sample, "label", None),
    )


def corpus_stats(samples: Sequence[Sample]) -> dict:
    counts = {p.label: 0 for p in Polarity}
    lengths = []
    for s in samples:
        if isinstance(s, LabeledSample):
            counts[s.label.label] += 1
        lengths.append(len(s.text.split()))
    stats = {"n": len(samples), "counts": counts, "mean_length": None, "std_length": None}
    if lengths:
        arr = np.array(lengths, dtype=np.float64)
        stats["mean_length"] = round(float(arr.mean()), 2)
        stats["std_length"] = round(float(arr.std()), 2)
    return stats


# synthetic corpus

POSITIVE_WORDS = (
    "great tasty excellent delicious wonderful superb fantastic amazing lovely "
    "perfect fresh friendly brilliant outstanding splendid delightful pleasant "
    "terrific marvelous charming generous flawless impressive exquisite heavenly "
    "divine gorgeous stellar fabulous cozy attentive crisp elegant juicy warm "
    "welcoming satisfying refreshing tender fragrant vibrant polished gracious "
    "memorable sublime rich creamy savory flavorful"
).split()
NEGATIVE_WORDS = (
    "awful bland terrible horrible rude stale soggy greasy disgusting dreadful "
    "mediocre overpriced cold slow dirty nasty lousy burnt salty sour rancid "
    "inedible tasteless unfriendly sloppy disappointing noisy cramped smelly "
    "chewy dry watery overcooked undercooked filthy grim miserable careless "
    "dismal shabby sticky lukewarm gross pathetic unpleasant rotten flimsy "
    "tacky atrocious abysmal"
).split()
NEUTRAL_WORDS = (
    "ordinary average standard typical plain regular usual normal moderate "
    "simple basic common conventional modest middling adequate routine familiar "
    "expected customary traditional predictable medium mild passable unremarkable "
    "neutral uniform general stock everyday generic functional serviceable "
    "sizable rectangular square round beige gray wooden metal ceramic seasonal "
    "local daily weekly printed listed numbered labeled"
).split()
ASPECTS = (
    "pizza", "service", "pasta", "staff", "dessert", "wine list", "decor",
    "sushi", "waiter", "menu", "burger", "soup", "salad", "coffee", "steak",
    "bread", "music", "patio", "fries", "curry", "hot sauce", "seafood platter",
)
TEMPLATES = (
    "the {A} was {S1} and {S2}",
    "i thought the {A} was {S1} , honestly {S2}",
    "{F} the {A} here is {S1} and quite {S2}",
    "our {A} seemed {S1} but also {S2} {F}",
    "the {A} is {S1} , {S2} as always",
    "{F} we found the {A} {S1} and {S2}",
    "they said the {A} is {S2} , it was {S1}",
    "my friend called the {A} {S1} and {S2} {F}",
    "what a {S1} {A} , so {S2}",
    "the {A} tonight : {S1} , {S2} , {F}",
)
FILLERS = (
    "overall", "again", "tonight", "sadly", "today", "then", "frankly",
    "last week", "at lunch", "for sure", "as planned", "this time",
)


@dataclass(frozen=True)
class VocabSpec:
    positive: Tuple[str, ...] = tuple(POSITIVE_WORDS)
    neutral: Tuple[str, ...] = tuple(NEUTRAL_WORDS)
    negative: Tuple[str, ...] = tuple(NEGATIVE_WORDS)
    aspects: Tuple[str, ...] = ASPECTS
    templates: Tuple[str, ...] = TEMPLATES
    fillers: Tuple[str, ...] = FILLERS

    def __post_init__(self):
        pos, neu, neg = set(self.positive), set(self.neutral), set(self.negative)
        if pos & neu or pos & neg or neu & neg:
            raise ValueError("sentiment lexicons must be disjoint")

    def lexicon(self, polarity: Polarity) -> Tuple[str, ...]:
        return (self.positive, self.neutral, self.negative)[int(polarity)]

    def words(self) -> List[str]:
        seen, out = set(), []
        pieces = [*self.positive, *self.neutral, *self.negative]
        for chunk in (*self.aspects, *self.templates, *self.fillers):
            pieces.extend(chunk.split())
        for w in pieces:
            w = w.lower()
            if w.startswith("{") or w in seen:
                continue
            seen.add(w)
            out.append(w)
        return out

    def capacity(self) -> int:
        per_class = min(len(self.positive), len(self.neutral), len(self.negative))
        return (len(self.templates) * len(self.aspects) * len(self.fillers)
                * per_class * (per_class - 1) * 3)


@dataclass
class SyntheticCorpus:
    labeled: List[LabeledSample]
    unlabeled: List[UnlabeledSample]
    unlabeled_labels: List[Polarity]
    held_out: List[LabeledSample]
    spec: VocabSpec = field(default_factory=VocabSpec)

    def write(self, directory) -> Dict[str, Path]:
        """Write corpus files; unlabeled gold labels go to a separate side-channel file."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "labeled": d / "labeled.jsonl",
            "unlabeled": d / "unlabeled.jsonl",
            "unlabeled_labels": d / "unlabeled_labels.jsonl",
            "held_out": d / "held_out.jsonl",
        }
        dump_jsonl(self.labeled, paths["labeled"])
        dump_jsonl(self.unlabeled, paths["unlabeled"])
        dump_jsonl(({"label": p.label} for p in self.unlabeled_labels), paths["unlabeled_labels"])
        dump_jsonl(self.held_out, paths["held_out"])
        return paths


def _render(rng: np.random.Generator, spec: VocabSpec, polarity: Polarity) -> Tuple[str, int, int]:
    template = spec.templates[rng.integers(len(spec.templates))]
    aspect = spec.aspects[rng.integers(len(spec.aspects))]
    lex = spec.lexicon(polarity)
    i, j = rng.choice(len(lex), size=2, replace=False)
    filler = spec.fillers[rng.integers(len(spec.fillers))]
    head, tail = template.split("{A}")
    fill = {"S1": lex[i], "S2": lex[j], "F": filler}
    head = head.format(**fill)
    tail = tail.format(**fill)
    text = " ".join((head + aspect + tail).split())
    start = len(" ".join(head.split()) + " ") if head.strip() else 0
    return text, start, start + len(aspect)


def synthesize_corpus(
    seed: int,
    n_labeled: int,
    n_unlabeled: int,
    n_held_out: int = 600,
    vocab_spec: Optional[VocabSpec] = None,
) -> SyntheticCorpus:
    """Deterministic aspect-sentiment corpus: two same-polarity words per sentence."""
    spec = vocab_spec or VocabSpec()
    total = n_labeled + n_unlabeled + n_held_out
    if min(n_labeled, n_unlabeled, n_held_out) < 0:
        raise ValueError("sample counts must be non-negative")
    if total > spec.capacity():
        raise ValueError(f"{total} samples exceed template diversity ({spec.capacity()})")
    rng = np.random.default_rng(seed)

    def draw(polarities):
        out = []
        for p in polarities:
            text, a, b = _render(rng, spec, Polarity(int(p)))
            out.append((text, a, b, Polarity(int(p))))
        return out

    balanced = np.arange(n_held_out) % 3
    rng.shuffle(balanced)
    held = [LabeledSample(t, a, b, p) for t, a, b, p in draw(balanced)]
    lab = [LabeledSample(t, a, b, p) for t, a, b, p in draw(rng.integers(0, 3, n_labeled))]
    unl = draw(rng.integers(0, 3, n_unlabeled))
    return SyntheticCorpus(
        labeled=lab,
        unlabeled=[UnlabeledSample(t, a, b) for t, a, b, _ in unl],
        unlabeled_labels=[p for *_, p in unl],
        held_out=held,
        spec=spec,
    )


def synthetic_word_vectors(spec: Optional[VocabSpec] = None, dim: int = 32, seed: int = 0) -> Vocabulary:
    """Random vectors for the synthetic vocabulary: carry no sentiment information."""
    spec = spec or VocabSpec()
    words = spec.words()
    rng = np.random.default_rng(seed)
    return Vocabulary(words, rng.normal(0.0, 1.0 / math.sqrt(dim), size=(len(words), dim)))
