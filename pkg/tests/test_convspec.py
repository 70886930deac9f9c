"""Circular convolution matrices and their frequency-domain treatment.

Every spectral-domain claim is checked against the dense matrix built by
direct indexing, and the dense matrix itself is checked against a literal
convolution loop.
"""

import json
import struct

import numpy as np
import pytest

from permalign import convspec
from permalign.convspec import (ConvKernel, build_conv_matrix,
                                conv_alignment_objective, conv_singular_values,
                                kernel_permute, load_kernel, random_kernel,
                                save_kernel, spectral_blocks)
from permalign.errors import FormatError
from permalign.rng import STREAM_FIXTURE, stream


def _delta_kernel(n, m):
    k = np.zeros((n, n, m, m))
    for c in range(m):
        k[0, 0, c, c] = 1.0
    return ConvKernel(k=k, n=n, m=m)


def _vec(x, n, m):
    # channel-major layout: vec[d*n^2 + r*n + i] = x[d, r, i]
    return x.reshape(m * n * n)


def _dft_unitary(n):
    idx = np.arange(n)
    f = np.exp(2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)
    return np.kron(f, f)


# -- dense matrix -------------------------------------------------------------


def test_delta_kernel_builds_identity():
    for n, m in ((3, 1), (4, 2)):
        dense = build_conv_matrix(_delta_kernel(n, m)).m_dense
        np.testing.assert_allclose(dense, np.eye(m * n * n), atol=1e-14)


def test_dense_matrix_matches_convolution_loop():
    n, m = 4, 2
    kernel = random_kernel(n, m, seed=10)
    dense = build_conv_matrix(kernel).m_dense
    gen = stream(11, STREAM_FIXTURE)
    for _ in range(3):
        x = gen.standard_normal((m, n, n))
        y = np.zeros((m, n, n))
        for c in range(m):
            for r in range(n):
                for i in range(n):
                    acc = 0.0
                    for d in range(m):
                        for p in range(n):
                            for q in range(n):
                                acc += kernel.k[p, q, c, d] * x[
                                    d, (r + p) % n, (i + q) % n
                                ]
                    y[c, r, i] = acc
        np.testing.assert_allclose(
            dense @ _vec(x, n, m), _vec(y, n, m), atol=1e-10
        )


def test_blocks_are_doubly_circulant():
    n, m = 4, 2
    kernel = random_kernel(n, m, seed=12)
    mat = build_conv_matrix(kernel)
    for c in range(m):
        for d in range(m):
            block = mat.block(c, d)
            for r in range(n):
                for i in range(n):
                    for rp in range(n):
                        for ip in range(n):
                            assert block[r * n + i, rp * n + ip] == (
                                kernel.k[(rp - r) % n, (ip - i) % n, c, d]
                            )


def test_frobenius_norm_lemma():
    # ||M - M'||_F^2 = n^2 ||K - K'||_F^2
    for n, m in ((3, 2), (4, 3)):
        ka = random_kernel(n, m, seed=13)
        kb = random_kernel(n, m, seed=14)
        lhs = np.sum(
            (build_conv_matrix(ka).m_dense - build_conv_matrix(kb).m_dense) ** 2
        )
        rhs = n * n * np.sum((ka.k - kb.k) ** 2)
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_dense_guard_rejects_large_kernels():
    kernel = ConvKernel(k=np.zeros((16, 16, 17, 17)), n=16, m=17)
    with pytest.raises(ValueError, match="dense path"):
        build_conv_matrix(kernel)


def test_kernel_shape_validation():
    with pytest.raises(ValueError, match="shape"):
        ConvKernel(k=np.zeros((3, 3, 2, 1)), n=3, m=2)
    with pytest.raises(ValueError, match="finite"):
        ConvKernel(k=np.full((2, 2, 1, 1), np.nan), n=2, m=1)


# -- spectral blocks ----------------------------------------------------------


def test_spectral_blocks_of_delta_kernel():
    blocks = spectral_blocks(_delta_kernel(4, 3))
    for c in range(3):
        for d in range(3):
            expect = 1.0 if c == d else 0.0
            np.testing.assert_allclose(blocks.g[c, d], expect, atol=1e-12)


def test_dft_diagonalizes_every_block():
    n, m = 4, 2
    kernel = random_kernel(n, m, seed=15)
    mat = build_conv_matrix(kernel)
    blocks = spectral_blocks(kernel)
    q = _dft_unitary(n)
    for c in range(m):
        for d in range(m):
            conj = q.conj().T @ mat.block(c, d) @ q
            off = conj - np.diag(np.diag(conj))
            assert np.max(np.abs(off)) < 1e-9
            np.testing.assert_allclose(
                np.diag(conj), blocks.g[c, d], atol=1e-9
            )


def test_spectral_blocks_channel_equivariance():
    n, m = 3, 3
    kernel = random_kernel(n, m, seed=16)
    p_out = np.array([2, 0, 1])
    p_in = np.array([1, 2, 0])
    g = spectral_blocks(kernel).g
    gp = spectral_blocks(kernel_permute(kernel, p_out, p_in)).g
    for c in range(m):
        for d in range(m):
            np.testing.assert_allclose(
                gp[c, d], g[p_out[c], p_in[d]], atol=1e-12
            )


# -- singular values ----------------------------------------------------------


def test_conv_singular_values_of_delta_are_ones():
    s = conv_singular_values(_delta_kernel(4, 2))
    np.testing.assert_allclose(s, np.ones(2 * 16), atol=1e-12)


def test_conv_singular_values_homogeneous():
    kernel = random_kernel(3, 2, seed=17)
    scaled = ConvKernel(k=2.5 * kernel.k, n=3, m=2)
    np.testing.assert_allclose(
        conv_singular_values(scaled),
        2.5 * conv_singular_values(kernel),
        rtol=1e-10,
    )


def test_conv_singular_values_match_dense_svd():
    for n, m in ((2, 1), (4, 2), (4, 3), (8, 2)):
        kernel = random_kernel(n, m, seed=100 + 10 * n + m)
        spectral = conv_singular_values(kernel)
        dense = np.linalg.svd(
            build_conv_matrix(kernel).m_dense, compute_uv=False
        )
        np.testing.assert_allclose(spectral, dense, atol=1e-6)
        assert np.all(np.diff(spectral) <= 1e-12)


def test_single_channel_singular_values_are_frequency_magnitudes():
    kernel = random_kernel(4, 1, seed=18)
    mags = np.sort(np.abs(spectral_blocks(kernel).g[0, 0]))[::-1]
    np.testing.assert_allclose(conv_singular_values(kernel), mags, atol=1e-10)


# -- channel permutation ------------------------------------------------------


def test_kernel_permute_identity_is_noop():
    kernel = random_kernel(3, 3, seed=19)
    same = kernel_permute(kernel, np.arange(3), np.arange(3))
    np.testing.assert_array_equal(same.k, kernel.k)


def test_kernel_permute_commutes_with_dense_matrix():
    n, m = 3, 3
    kernel = random_kernel(n, m, seed=20)
    p_out = np.array([1, 2, 0])
    p_in = np.array([2, 1, 0])
    dense_p = build_conv_matrix(kernel_permute(kernel, p_out, p_in))
    dense = build_conv_matrix(kernel)
    for c in range(m):
        for d in range(m):
            np.testing.assert_array_equal(
                dense_p.block(c, d), dense.block(p_out[c], p_in[d])
            )


def test_kernel_permute_validates_length():
    kernel = random_kernel(3, 2, seed=21)
    with pytest.raises(ValueError):
        kernel_permute(kernel, np.array([0, 1, 2]), np.array([0, 1]))


# -- alignment objective ------------------------------------------------------


def test_conv_alignment_self_identity_is_squared_spectrum():
    kernel = random_kernel(4, 2, seed=22)
    s = conv_singular_values(kernel)
    obj = conv_alignment_objective(
        kernel, kernel, np.arange(2), np.arange(2)
    )
    assert obj == pytest.approx(float(np.sum(s**2)), rel=1e-8)


def test_conv_alignment_equals_dense_inner_product():
    n, m = 4, 3
    ka = random_kernel(n, m, seed=23)
    kb = random_kernel(n, m, seed=24)
    gen = stream(25, STREAM_FIXTURE)
    for _ in range(6):
        p_out = gen.permutation(m)
        p_in = gen.permutation(m)
        obj = conv_alignment_objective(ka, kb, p_out, p_in)
        ma = build_conv_matrix(ka).m_dense
        mb = build_conv_matrix(kernel_permute(kb, p_out, p_in)).m_dense
        assert obj == pytest.approx(float(np.sum(ma * mb)), rel=1e-8, abs=1e-9)
        # distance identity follows from the inner-product form
        dist = float(np.sum((ma - mb) ** 2))
        norms = float(np.sum(ma**2) + np.sum(mb**2))
        assert dist == pytest.approx(norms - 2 * obj, rel=1e-8)


def test_conv_alignment_recovers_planted_channel_permutation():
    import itertools

    n, m = 4, 3
    for seed in (26, 27):
        ka = random_kernel(n, m, seed=seed)
        rho_out = np.array([2, 0, 1])
        rho_in = np.array([0, 2, 1])
        kb = kernel_permute(ka, rho_out, rho_in)
        best, best_pair = -np.inf, None
        for p_out in itertools.permutations(range(m)):
            for p_in in itertools.permutations(range(m)):
                obj = conv_alignment_objective(
                    ka, kb, np.array(p_out), np.array(p_in)
                )
                if obj > best:
                    best, best_pair = obj, (p_out, p_in)
        assert np.array_equal(best_pair[0], np.argsort(rho_out))
        assert np.array_equal(best_pair[1], np.argsort(rho_in))
        s = conv_singular_values(ka)
        assert best == pytest.approx(float(np.sum(s**2)), rel=1e-8)


def test_conv_alignment_validates_sizes():
    ka = random_kernel(3, 2, seed=28)
    kb = random_kernel(4, 2, seed=29)
    with pytest.raises(ValueError, match="mismatch"):
        conv_alignment_objective(ka, kb, np.arange(2), np.arange(2))


# -- kernel files -------------------------------------------------------------


def test_kernel_roundtrip(tmp_path):
    kernel = random_kernel(4, 2, seed=30)
    path = tmp_path / "k.nnck"
    save_kernel(kernel, path, notes="fixture")
    back = load_kernel(path)
    assert back.n == 4 and back.m == 2
    # payload is float32 on disk
    np.testing.assert_array_equal(
        back.k, kernel.k.astype(np.float32).astype(np.float64)
    )


def test_kernel_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.nnck"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(FormatError, match="magic"):
        load_kernel(path)


def test_kernel_load_rejects_future_version(tmp_path):
    kernel = random_kernel(2, 1, seed=31)
    path = tmp_path / "k.nnck"
    save_kernel(kernel, path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack(">I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="version"):
        load_kernel(path)


def test_kernel_load_rejects_truncation(tmp_path):
    kernel = random_kernel(3, 2, seed=32)
    path = tmp_path / "k.nnck"
    save_kernel(kernel, path)
    raw = path.read_bytes()
    for cut in (10, 14, len(raw) - 7):
        path.write_bytes(raw[:cut])
        with pytest.raises(FormatError, match="truncated"):
            load_kernel(path)
    # a cut inside the 8-byte header reads as a bad magic
    path.write_bytes(raw[:6])
    with pytest.raises(FormatError, match="magic"):
        load_kernel(path)


def test_kernel_load_rejects_trailing_bytes(tmp_path):
    kernel = random_kernel(2, 2, seed=33)
    path = tmp_path / "k.nnck"
    save_kernel(kernel, path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError, match="trailing"):
        load_kernel(path)


def test_kernel_load_rejects_bad_manifest(tmp_path):
    path = tmp_path / "k.nnck"
    blob = b"{not json"
    path.write_bytes(
        b"NNCK" + struct.pack(">I", 1) + struct.pack("<I", len(blob)) + blob
    )
    with pytest.raises(FormatError, match="JSON"):
        load_kernel(path)
    blob = json.dumps({"n": 2}).encode()
    path.write_bytes(
        b"NNCK" + struct.pack(">I", 1) + struct.pack("<I", len(blob)) + blob
    )
    with pytest.raises(FormatError, match="missing key"):
        load_kernel(path)
