import pytest

from conceptvec.corpus import Edition, ParallelCorpus, WORD


def make_edition(edition_id, verses, mode=WORD, ngram_order=None):
    """Edition from {verse_id: text}, text as str or bytes."""
    enc = {
        vid: (text.encode() if isinstance(text, str) else text)
        for vid, text in verses.items()
    }
    return Edition(edition_id, enc, mode, ngram_order)


def make_corpus(editions, pivots=(), train=None, test=None):
    eds = {e.edition_id: e for e in editions}
    all_ids = set()
    for e in editions:
        all_ids.update(e.verses)
    if train is None:
        train = all_ids if test is None else all_ids - set(test)
    return ParallelCorpus(eds, set(train), set(test or ()), list(pivots))


@pytest.fixture
def two_verse_pair():
    a = make_edition("aa", {"001": "the cat sat", "002": "the dog ran"})
    b = make_edition("bb", {"001": "le chat assis", "002": "le chien courut"})
    return a, b
