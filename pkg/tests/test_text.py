import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jessi.evaluation import prf1
from jessi.tensor import RngStream
from jessi.text import (
    ELECTRONICS,
    HOTELS,
    PAD,
    UNK,
    DatasetParseError,
    EmbeddingFormatError,
    EmbeddingPair,
    EmptySentenceError,
    Lexicon,
    RawExample,
    SynthSpec,
    build_vocab,
    encode,
    format_dataset,
    load_dataset,
    load_embeddings,
    make_batches,
    parse_dataset,
    synth_generate,
    template_oracle,
    tokenize,
    write_dataset,
)


# ------------------------------------------------------------------ tokenizer

def test_tokenize_examples():
    assert tokenize("Please add USB-C!").tokens == ("please", "add", "usb-c", "!")
    assert tokenize("It's  great,ok").tokens == ("it's", "great", ",", "ok")
    assert tokenize("x").n == 1


def test_tokenize_blank_raises():
    with pytest.raises(EmptySentenceError):
        tokenize("   ")


@settings(max_examples=100, deadline=None)
@given(st.text(min_size=1, max_size=40).filter(lambda s: s.strip()))
def test_tokenize_is_idempotent_on_its_output(s):
    try:
        toks = tokenize(s).tokens
    except EmptySentenceError:
        return
    assert tokenize(" ".join(toks)).tokens == toks


# ------------------------------------------------------------------ CSV

def test_parse_with_and_without_header():
    with_header = "id,sentence,label\n1,Please add a charger,1\n2,\"Nice, quiet room\",0\n"
    rows = parse_dataset(with_header, "A", labeled=True)
    assert [(r.id, r.label) for r in rows] == [("1", 1), ("2", 0)]
    assert rows[1].sentence == "Nice, quiet room"
    assert parse_dataset("1,Please add a charger,1\n", "A", labeled=True)[0].label == 1


def test_parse_unlabeled_two_columns():
    rows = parse_dataset("id,sentence\n7,hello there\n", "B", labeled=False)
    assert rows == [RawExample("7", "hello there", None, "B")]


@pytest.mark.parametrize("text,line", [
    ("1,ok,1\n2,bad,7\n", 2),
    ("1,ok,1\n2,only\n", 2),
    ('1,"unterminated,1\n', 1),
    ("1,ok,1\n2, ,0\n", 2),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(DatasetParseError) as err:
        parse_dataset(text, "A", labeled=True, source="f.csv")
    assert err.value.line >= line
    assert "f.csv" in str(err.value)


def test_dataset_round_trip(tmp_path):
    rows = [RawExample("a", 'she said "hi", twice', 1, "A"), RawExample("b", "line two", 0, "A")]
    path = tmp_path / "d.csv"
    write_dataset(path, rows)
    assert load_dataset(path, "A", labeled=True) == rows
    assert format_dataset(rows) == path.read_text()


# ------------------------------------------------------------------ vocabulary and embeddings

def test_vocab_ordering_and_reserved_ids():
    v = build_vocab(["b a a", "c b a"])
    assert v.itos[:5] == ["<pad>", "<unk>", "a", "b", "c"]
    assert v.index("zzz") == UNK
    assert v.index("<pad>") == UNK
    assert list(v.encode(["a", "c", "nope"])) == [2, 4, UNK]


def test_vocab_min_frequency():
    v = build_vocab(["a a b"], min_frequency=2)
    assert "a" in v and "b" not in v


def test_load_embeddings(tmp_path, rng):
    v = build_vocab(["cat dog"])
    f = tmp_path / "e.txt"
    f.write_text("cat 1 2 3\nunrelated 4 5 6\n")
    table = load_embeddings(f, v, 3, rng)
    np.testing.assert_array_equal(table[v.index("cat")], [1, 2, 3])
    assert (table[PAD] == 0).all()
    dog = table[v.index("dog")]
    assert (np.abs(dog) <= 0.25).all() and np.abs(dog).sum() > 0


def test_oov_rows_bounded_over_seeds():
    v = build_vocab(["w%d" % i for i in range(50)])
    for seed in range(5):
        t = load_embeddings(None, v, 8, RngStream(seed))
        assert (np.abs(t) <= 0.25).all()


def test_embedding_dimension_error(tmp_path, rng):
    f = tmp_path / "e.txt"
    f.write_text("cat 1 2 3\ndog 1 2\n")
    with pytest.raises(EmbeddingFormatError, match=":2:"):
        load_embeddings(f, build_vocab(["cat dog"]), 3, rng)


def test_embedding_pair_lookup(rng):
    v = build_vocab(["a b"])
    pair = EmbeddingPair(load_embeddings(None, v, 4, rng), load_embeddings(None, v, 3, rng))
    assert pair.dim == 7
    assert pair.lookup(v.index("a")).shape == (7,)
    assert (pair.lookup(PAD) == 0).all()


# ------------------------------------------------------------------ batching

def _encoded(n):
    rows = [RawExample(str(i), "word " * (1 + i % 5), i % 2, "A") for i in range(n)]
    return encode(rows, build_vocab(rows))


def test_batch_sizes_and_order():
    ex = _encoded(70)
    batches = make_batches(ex, 32)
    assert [len(b) for b in batches] == [32, 32, 6]
    assert [i for b in batches for i in b.ids] == [e.id for e in ex]


def test_shuffled_epoch_is_a_partition_and_replayable():
    ex = _encoded(70)
    a = make_batches(ex, 32, shuffle=True, rng=RngStream(9))
    b = make_batches(ex, 32, shuffle=True, rng=RngStream(9))
    ids = [i for batch in a for i in batch.ids]
    assert sorted(ids) == sorted(e.id for e in ex)
    assert ids == [i for batch in b for i in batch.ids]


def test_padding_mask_matches_lengths():
    b = make_batches(_encoded(5), 5)[0]
    assert (b.mask.sum(axis=1) == b.lengths).all()
    assert (b.token_ids[b.mask == 0] == PAD).all()


def test_encode_truncates_to_max_len():
    rows = [RawExample("x", "a b c d e f", 1, "A")]
    assert encode(rows, build_vocab(rows), max_len=4)[0].length == 4


# ------------------------------------------------------------------ synthetic corpora

def test_synth_counts_and_lexicons():
    corpus = synth_generate(SynthSpec(n_train=1000, n_trial=50, n_test=80), RngStream(0))
    assert sum(e.label for e in corpus.train) == 500
    assert not (ELECTRONICS.words & HOTELS.words)
    b_tokens = {t for e in corpus.test_b for t in tokenize(e.sentence).tokens}
    assert not (b_tokens & ELECTRONICS.words)
    assert {e.domain for e in corpus.trial_b} == {"B"}


def test_synth_template_oracle_is_perfect():
    corpus = synth_generate(SynthSpec(), RngStream(1))
    for split in corpus.splits().values():
        pred = [template_oracle(e.sentence) for e in split]
        assert prf1(pred, [e.label for e in split])[2] == 1.0


def test_synth_is_deterministic():
    a = synth_generate(SynthSpec(n_train=100), RngStream(5))
    b = synth_generate(SynthSpec(n_train=100), RngStream(5))
    assert a.splits() == b.splits()


@pytest.mark.parametrize("bad", [
    SynthSpec(n_train=0),
    SynthSpec(positive_rate=1.5),
    SynthSpec(lexicon_b=Lexicon(("battery",), ("cozy",))),
])
def test_synth_spec_validation(bad):
    with pytest.raises(ValueError):
        bad.validate()
