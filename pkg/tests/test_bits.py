from hypothesis import given, strategies as st

from semvid.bits import BitReader, BitWriter, egk_length, ue_length


def test_ue_codewords():
    w = BitWriter()
    for n in (0, 1, 2, 3, 7):
        w.write_ue(n)
    # 1 | 010 | 011 | 00100 | 0001000
    assert "".join(str(b) for b in w._bits) == "1010011001000001000"
    assert [ue_length(n) for n in (0, 1, 2, 3, 7)] == [1, 3, 3, 5, 7]


@given(st.lists(st.tuples(st.integers(0, 10 ** 6), st.integers(0, 8)), max_size=50))
def test_egk_round_trip(items):
    w = BitWriter()
    for n, k in items:
        w.write_egk(n, k)
    assert len(w) == sum(egk_length(n, k) for n, k in items)
    r = BitReader(w.getvalue())
    assert [r.read_egk(k) for _, k in items] == [n for n, _ in items]


def test_msb_first_padding():
    w = BitWriter()
    w.write_bits(0b101, 3)
    assert w.getvalue() == bytes([0b10100000])
