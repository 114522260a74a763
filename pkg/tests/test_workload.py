import numpy as np
import pytest

from sparsim.workload import (
    BadDtypeError,
    BadMagicError,
    TruncatedFileError,
    gen_random,
    load_matrix,
    pw_to_gemm,
    store_matrix,
)
from sparsim.engine import simulate_matmul


def test_gen_random_no_zeros_at_sparsity_zero():
    m = gen_random(20, 20, 0.0, 1)
    assert (m != 0).all()


def test_gen_random_all_zeros_at_sparsity_one():
    m = gen_random(20, 20, 1.0, 1)
    assert not m.any()


def test_gen_random_exact_zero_count():
    m = gen_random(1024, 1024, 0.75, 42)
    assert int((m == 0).sum()) == 786432
    again = gen_random(1024, 1024, 0.75, 42)
    assert np.array_equal(m, again)


@pytest.mark.parametrize("sparsity", [0.1, 0.33, 0.5, 0.9])
def test_gen_random_rounded_count(sparsity):
    m = gen_random(31, 17, sparsity, 7)
    assert int((m == 0).sum()) == round(sparsity * 31 * 17)


def test_gen_random_dtype_and_range():
    m = gen_random(64, 64, 0.5, 3)
    assert m.dtype == np.int8
    nz = m[m != 0]
    assert nz.min() >= -128 and nz.max() <= 127


def test_gen_random_different_seeds_differ():
    assert not np.array_equal(gen_random(16, 16, 0.5, 1), gen_random(16, 16, 0.5, 2))


def test_gen_random_rejects_bad_sparsity():
    with pytest.raises(ValueError):
        gen_random(4, 4, 1.5, 0)


@pytest.mark.parametrize("shape", [(8, 8), (0, 0), (0, 5), (5, 0), (1, 200)])
def test_store_load_roundtrip(shape, tmp_path):
    m = gen_random(shape[0], shape[1], 0.5, 42)
    path = tmp_path / "m.sdm"
    store_matrix(m, path)
    assert np.array_equal(load_matrix(path), m)


def test_binary_header_layout(tmp_path):
    m = np.array([[1, -2, 3], [0, 5, 0]], dtype=np.int8)
    path = tmp_path / "m.sdm"
    store_matrix(m, path)
    data = path.read_bytes()
    assert data[:13] == b"SDM1" + b"\x02\x00\x00\x00" + b"\x03\x00\x00\x00" + b"\x01"
    assert data[13:] == bytes([1, 256 - 2, 3, 0, 5, 0])


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty"
    path.write_bytes(b"")
    with pytest.raises(TruncatedFileError):
        load_matrix(path)


def test_load_truncated_payload(tmp_path):
    path = tmp_path / "m.sdm"
    store_matrix(gen_random(8, 8, 0.5, 1), path)
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(TruncatedFileError):
        load_matrix(path)


def test_load_truncated_header(tmp_path):
    path = tmp_path / "m.sdm"
    path.write_bytes(b"SDM1\x02\x00")
    with pytest.raises(TruncatedFileError):
        load_matrix(path)


def test_load_bad_dtype(tmp_path):
    path = tmp_path / "m.sdm"
    store_matrix(gen_random(2, 2, 0.0, 1), path)
    data = bytearray(path.read_bytes())
    data[12] = 0x07
    path.write_bytes(bytes(data))
    with pytest.raises(BadDtypeError):
        load_matrix(path)


def test_load_binary_garbage(tmp_path):
    path = tmp_path / "m.bin"
    path.write_bytes(bytes([0x80, 0x81, 0x82, 0x83, 0x84]))
    with pytest.raises(BadMagicError):
        load_matrix(path)


def test_load_text_grid(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("1 -2 3\n0 five 6\n")
    with pytest.raises(BadMagicError):
        load_matrix(path)
    path.write_text("1 -2 3\n0 5 6\n")
    assert load_matrix(path).tolist() == [[1, -2, 3], [0, 5, 6]]


def test_load_text_ragged(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("1 2 3\n4 5\n")
    with pytest.raises(BadMagicError):
        load_matrix(path)


def test_load_text_out_of_range(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("1 2\n3 400\n")
    with pytest.raises(BadMagicError):
        load_matrix(path)


def test_pw_to_gemm_scalar():
    a, b = pw_to_gemm(np.array([[2]], np.int8), np.array([[3]], np.int8))
    c, _ = simulate_matmul(a, b, backend="numpy")
    assert c.tolist() == [[6]]


def test_pw_to_gemm_identity_weights():
    x = gen_random(6, 10, 0.4, 5)
    w = np.eye(6, dtype=np.int8)
    a, b = pw_to_gemm(w, x)
    c, _ = simulate_matmul(a, b, backend="numpy")
    assert np.array_equal(c, x.astype(np.int32))


def test_pw_to_gemm_matches_conv_oracle():
    c_out, c_in, h, w = 5, 7, 3, 4
    weights = gen_random(c_out, c_in, 0.5, 11)
    acts = gen_random(c_in, h * w, 0.5, 12)
    a, b = pw_to_gemm(weights, acts)
    got, _ = simulate_matmul(a, b, backend="numpy")
    # naive pointwise convolution: every spatial site mixes channels
    img = acts.reshape(c_in, h, w).astype(np.int64)
    expect = np.zeros((c_out, h, w), dtype=np.int64)
    for co in range(c_out):
        for y in range(h):
            for x in range(w):
                expect[co, y, x] = sum(
                    int(weights[co, ci]) * int(img[ci, y, x]) for ci in range(c_in)
                )
    assert np.array_equal(got, expect.reshape(c_out, h * w))


def test_pw_to_gemm_rejects_channel_mismatch():
    with pytest.raises(ValueError):
        pw_to_gemm(np.zeros((2, 3), np.int8), np.zeros((4, 5), np.int8))
