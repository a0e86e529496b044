"""Synthetic two-domain suggestion corpora.

Suggestions come from imperative templates, non-suggestions from declarative
ones. Both domains share the template words; only the content lexicon
(nouns and adjectives) changes between the source and target domain.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..tensor import RngStream
from .corpus import DOMAIN_SOURCE, DOMAIN_TARGET, RawExample


@dataclass(frozen=True)
class Lexicon:
    nouns: tuple[str, ...]
    adjectives: tuple[str, ...]

    @property
    def words(self) -> frozenset:
        return frozenset(self.nouns) | frozenset(self.adjectives)


ELECTRONICS = Lexicon(
    nouns=("battery", "screen", "charger", "keyboard", "speaker", "camera", "cable", "app",
           "firmware", "touchpad", "headset", "remote", "adapter", "stylus", "microphone",
           "display", "laptop", "router", "dock", "webcam"),
    adjectives=("wireless", "glossy", "bluetooth", "dim", "laggy", "backlit", "portable",
                "waterproof", "bulky", "sleek", "responsive", "magnetic"),
)

HOTELS = Lexicon(
    nouns=("room", "pool", "breakfast", "lobby", "shuttle", "towel", "balcony", "elevator",
           "minibar", "spa", "reception", "pillow", "buffet", "parking", "sauna", "suite",
           "terrace", "concierge", "corridor", "bathtub"),
    adjectives=("cozy", "spacious", "tidy", "noisy", "sunny", "heated", "quiet", "luxurious",
                "crowded", "airy", "rustic", "fragrant"),
)

SUGGESTION_TEMPLATES = (
    "please add a {adj} {noun}",
    "please add a {noun}",
    "it would be great if the {noun} was more {adj}",
    "you should make the {noun} {adj}",
    "i suggest bringing a {adj} {noun}",
    "please consider improving the {noun}",
    "they should offer a {adj} {noun}",
    "make sure you ask for a {adj} {noun}",
    "do not forget to check the {noun}",
    "i would recommend upgrading the {noun}",
)

STATEMENT_TEMPLATES = (
    "the {noun} is {adj}",
    "i bought the {noun} last week",
    "my {noun} arrived on time",
    "the {noun} was {adj} and we liked it",
    "we loved the {adj} {noun}",
    "overall the {noun} feels {adj}",
    "the {noun} looked {adj} in the photos",
    "our {noun} was {adj}",
    "there is a {adj} {noun} here",
    "this {noun} has been {adj} so far",
)

OPENERS = ("", "", "", "honestly ,", "also ,", "overall ,", "btw ,")
CLOSERS = ("", ".", ".", "!", "...", "for the price .", "during the trip .", "every single day .")


def _template_regex(template: str) -> re.Pattern:
    body = re.escape(template).replace(r"\{adj\}", r"\S+").replace(r"\{noun\}", r"\S+")
    openers = "|".join(re.escape(o + " ") for o in OPENERS if o)
    return re.compile(rf"^(?:{openers})?{body}(?: .*)?$")


_SUGGESTION_PATTERNS = tuple(_template_regex(t) for t in SUGGESTION_TEMPLATES)


def template_oracle(sentence: str) -> int:
    """Rule-based classifier that recognizes the suggestion templates."""
    return int(any(p.match(sentence) for p in _SUGGESTION_PATTERNS))


@dataclass(frozen=True)
class SynthSpec:
    n_train: int = 2000
    n_trial: int = 200
    n_test: int = 400
    positive_rate: float = 0.5
    lexicon_a: Lexicon = ELECTRONICS
    lexicon_b: Lexicon = HOTELS

    def validate(self):
        for name in ("n_train", "n_trial", "n_test"):
            if getattr(self, name) <= 0:
                raise ValueError(f"synthetic split size {name} must be positive")
        if not 0.0 <= self.positive_rate <= 1.0:
            raise ValueError("positive_rate must lie in [0, 1]")
        shared = self.lexicon_a.words & self.lexicon_b.words
        if shared:
            raise ValueError(f"domain lexicons overlap: {sorted(shared)[:5]}")


@dataclass
class SynthCorpus:
    train: list
    trial_a: list
    trial_b: list
    test_a: list
    test_b: list

    def splits(self) -> dict[str, list]:
        return {"train": self.train, "trial_a": self.trial_a, "trial_b": self.trial_b,
                "test_a": self.test_a, "test_b": self.test_b}


def _sentence(rng: RngStream, template: str, lex: Lexicon) -> str:
    noun = lex.nouns[int(rng.integers(len(lex.nouns)))]
    adj = lex.adjectives[int(rng.integers(len(lex.adjectives)))]
    core = template.format(noun=noun, adj=adj)
    opener = OPENERS[int(rng.integers(len(OPENERS)))]
    closer = CLOSERS[int(rng.integers(len(CLOSERS)))]
    return " ".join(part for part in (opener, core, closer) if part)


def _split(rng: RngStream, name: str, n: int, rate: float, lex: Lexicon, domain: str) -> list:
    n_pos = int(round(n * rate))
    labels = [1] * n_pos + [0] * (n - n_pos)
    labels = [labels[i] for i in rng.permutation(n)]
    out = []
    for i, y in enumerate(labels):
        pool = SUGGESTION_TEMPLATES if y else STATEMENT_TEMPLATES
        template = pool[int(rng.integers(len(pool)))]
        out.append(RawExample(f"{name}-{i:05d}", _sentence(rng, template, lex), y, domain))
    return out


def synth_generate(spec: SynthSpec, rng: RngStream) -> SynthCorpus:
    """Generate the five labeled splits; deterministic for a given seed."""
    spec.validate()
    a, b = spec.lexicon_a, spec.lexicon_b
    return SynthCorpus(
        train=_split(rng.child("train"), "train", spec.n_train, spec.positive_rate, a, DOMAIN_SOURCE),
        trial_a=_split(rng.child("trial_a"), "trial_a", spec.n_trial, spec.positive_rate, a, DOMAIN_SOURCE),
        trial_b=_split(rng.child("trial_b"), "trial_b", spec.n_trial, spec.positive_rate, b, DOMAIN_TARGET),
        test_a=_split(rng.child("test_a"), "test_a", spec.n_test, spec.positive_rate, a, DOMAIN_SOURCE),
        test_b=_split(rng.child("test_b"), "test_b", spec.n_test, spec.positive_rate, b, DOMAIN_TARGET),
    )
