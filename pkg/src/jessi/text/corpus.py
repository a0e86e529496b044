"""Raw examples, tokenization and CSV ingestion."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass

DOMAIN_SOURCE = "A"
DOMAIN_TARGET = "B"
DOMAINS = (DOMAIN_SOURCE, DOMAIN_TARGET)

# letters/digits with internal apostrophes or hyphens, else any single non-space char
_TOKEN_RE = re.compile(r"[^\W_]+(?:['\-][^\W_]+)*|\S")


class EmptySentenceError(ValueError):
    pass


class DatasetParseError(ValueError):
    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class RawExample:
    id: str
    sentence: str
    label: int | None
    domain: str

    def __post_init__(self):
        if not self.sentence.strip():
            raise EmptySentenceError(f"example {self.id!r} has an empty sentence")
        if self.label not in (None, 0, 1):
            raise ValueError(f"label must be 0, 1 or None, got {self.label!r}")
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")


@dataclass(frozen=True)
class TokenizedExample:
    tokens: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.tokens)


def tokenize(sentence: str) -> TokenizedExample:
    """Lowercase, then split into word runs and single punctuation marks.

    >>> tokenize("Please add USB-C!").tokens
    ('please', 'add', 'usb-c', '!')
    """
    tokens = tuple(_TOKEN_RE.findall(sentence.lower()))
    if not tokens:
        raise EmptySentenceError("cannot tokenize a blank sentence")
    return TokenizedExample(tokens)


def _is_label_field(value: str) -> bool:
    return value.strip().lstrip("+-").isdigit()


def parse_dataset(text: str, domain: str, labeled: bool, source="<string>") -> list[RawExample]:
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    examples = []
    try:
        for row_no, row in enumerate(reader):
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) not in (2, 3):
                raise DatasetParseError(source, line, f"expected 2 or 3 fields, got {len(row)}")
            if row_no == 0:
                looks_like_header = (len(row) == 3 and row[2].strip() and not _is_label_field(row[2])) or (
                    len(row) == 2 and row[0].strip().lower() == "id")
                if looks_like_header:
                    continue
            ex_id, sentence = row[0], row[1]
            label = None
            if labeled:
                raw = row[2].strip() if len(row) == 3 else ""
                if raw not in ("0", "1"):
                    raise DatasetParseError(source, line, f"label must be 0 or 1, got {raw!r}")
                label = int(raw)
            if not sentence.strip():
                raise DatasetParseError(source, line, "empty sentence")
            examples.append(RawExample(ex_id, sentence, label, domain))
    except csv.Error as exc:
        raise DatasetParseError(source, reader.line_num, f"malformed CSV: {exc}") from None
    return examples


def load_dataset(path, domain: str, labeled: bool) -> list[RawExample]:
    """Read ``id,sentence[,label]`` rows; a header row is skipped when present."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return parse_dataset(text, domain, labeled, source=path)


def format_dataset(examples) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "sentence", "label"])
    for ex in examples:
        writer.writerow([ex.id, ex.sentence, "" if ex.label is None else ex.label])
    return buf.getvalue()


def write_dataset(path, examples) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_dataset(examples))
