import unicodedata

import pytest
from hypothesis import given, strategies as st

from ipactc.phoneset import (
    BLANK,
    LanguagePhoneMap,
    PhoneSetError,
    UnknownLanguageError,
    UnknownSymbolError,
    coverage,
    encode_labels,
    extend,
    load_phone_set,
    merge_phone_sets,
    save_phone_set,
)


def _map(lang, phones):
    return LanguagePhoneMap(lang, tuple(phones))


def test_merge_shared_symbol():
    u = merge_phone_sets([_map("L1", "pa"), _map("L2", "po")])
    assert u.symbols == (BLANK, "p", "a", "o")
    assert u.per_language["L1"] == (0, 1, 2)
    assert u.per_language["L2"] == (0, 1, 3)


def test_merge_single_language():
    u = merge_phone_sets([_map("L1", "pa")])
    assert u.symbols == (BLANK, "p", "a")


def test_merge_disjoint_counts():
    u = merge_phone_sets([_map("L1", "abc"), _map("L2", "defg")])
    assert u.num_symbols == 8


def test_merge_requires_maps():
    with pytest.raises(PhoneSetError):
        merge_phone_sets([])


def test_blank_rejected_in_inventories():
    with pytest.raises(PhoneSetError):
        _map("L1", ["a", BLANK])


def test_merge_idempotent():
    u = merge_phone_sets([_map("L1", "abc"), _map("L2", "bcd")])
    again = merge_phone_sets(
        [_map(lang, u.language_symbols(lang)) for lang in u.languages]
    )
    assert again.symbols == u.symbols


def test_merge_size_is_union_plus_blank():
    maps = [_map("L1", "abc"), _map("L2", "bcd"), _map("L3", "xya")]
    union = set("abcd") | set("xy")
    assert merge_phone_sets(maps).num_symbols == 1 + len(union)


def test_nfc_normalization_merges_equivalent_codepoints():
    composed = "é"  # e acute, single codepoint
    decomposed = "é"
    assert unicodedata.normalize("NFC", decomposed) == composed
    u = merge_phone_sets([_map("L1", [composed]), _map("L2", [decomposed])])
    assert u.num_symbols == 2  # blank + one merged symbol


def test_coverage_partition():
    u = merge_phone_sets([_map("L1", "pao")])
    report = coverage(u, _map("T", "pou"))
    assert report.covered == ("p", "o")
    assert report.unseen == ("u",)
    assert report.covered_count == 2


def test_coverage_subset_and_disjoint():
    u = merge_phone_sets([_map("L1", "pao")])
    assert coverage(u, _map("T", "pa")).unseen == ()
    assert coverage(u, _map("T", "xyz")).covered_count == 0


def test_extend_appends_without_moving_indices():
    u = merge_phone_sets([_map("L1", "pao")])
    ext, index_map = extend(u, _map("T", "pu"))
    assert ext.symbols[: u.num_symbols] == u.symbols
    assert ext.symbols[-1] == "u"
    assert ext.version == u.version + 1
    assert index_map == {i: i for i in range(u.num_symbols)}
    assert "T" in ext.per_language


def test_extend_identity_case():
    u = merge_phone_sets([_map("L1", "pao")])
    ext, index_map = extend(u, _map("T", "pa"))
    assert ext.symbols == u.symbols
    assert ext.version == u.version + 1
    assert index_map == {i: i for i in range(u.num_symbols)}


def test_extend_closes_coverage():
    u = merge_phone_sets([_map("L1", "pao")])
    target = _map("T", "puxy")
    ext, _ = extend(u, target)
    assert coverage(ext, target).unseen == ()


def test_extend_monotone_coverage_of_third_language():
    u = merge_phone_sets([_map("L1", "abc"), _map("L2", "bcd")])
    third = _map("L3", "adxy")
    before = coverage(u, third).covered_count
    ext, _ = extend(u, _map("T", "xz"))
    after = coverage(ext, third).covered_count
    assert after >= before


@given(
    st.lists(
        st.lists(
            st.sampled_from("abcdefghij"), min_size=1, max_size=8, unique=True
        ),
        min_size=1,
        max_size=4,
    )
)
def test_merge_properties(inventories):
    maps = [_map(f"L{i}", inv) for i, inv in enumerate(inventories)]
    u = merge_phone_sets(maps)
    union = set().union(*(set(inv) for inv in inventories))
    assert u.num_symbols == 1 + len(union)
    # every language's symbols resolve back to themselves
    for m in maps:
        assert u.language_symbols(m.language_id) == m.phones


def test_encode_labels():
    u = merge_phone_sets([_map("L1", "pao")])
    assert encode_labels(u, "L1", ["p", "a"]) == (1, 2)
    assert encode_labels(u, "L1", []) == ()


def test_encode_labels_errors_name_offender():
    u = merge_phone_sets([_map("L1", "pa"), _map("L2", "po")])
    with pytest.raises(UnknownSymbolError, match="'o'"):
        encode_labels(u, "L1", ["o"])  # o belongs to L2 only
    with pytest.raises(UnknownLanguageError, match="L9"):
        encode_labels(u, "L9", ["p"])


def test_encode_never_emits_blank():
    u = merge_phone_sets([_map("L1", "pa")])
    with pytest.raises((UnknownSymbolError, PhoneSetError)):
        encode_labels(u, "L1", [BLANK])


def test_round_trip_file(tmp_path):
    u = merge_phone_sets([_map("L1", ["a", "ʃ", "e"]), _map("L2", ["a", "ø"])])
    ext, _ = extend(u, _map("L3", ["a", "θ"]))
    path = tmp_path / "phones.txt"
    save_phone_set(path, ext)
    loaded = load_phone_set(path)
    assert loaded == ext
    # bit-exact round trip
    save_phone_set(tmp_path / "again.txt", loaded)
    assert (tmp_path / "again.txt").read_bytes() == path.read_bytes()


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a phone set\n", encoding="utf-8")
    with pytest.raises(PhoneSetError):
        load_phone_set(path)
