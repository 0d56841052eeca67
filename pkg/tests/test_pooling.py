import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bofsae.errors import ContractError, DecodeError, PoolingError
from bofsae.pooling import (
    PooledFeature,
    SpmConfig,
    cell_index,
    load_features,
    save_features,
    spm_max_pool,
)

import oracles

RAW = SpmConfig((1, 2, 4), normalize=False)


def random_case(rng, M=None, K=None):
    M = M or int(rng.integers(1, 40))
    K = K or int(rng.integers(1, 10))
    codes = rng.uniform(size=(M, K))
    xs, ys = rng.uniform(size=M), rng.uniform(size=M)
    # Put some points exactly on cell boundaries.
    xs[::5] = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=len(xs[::5]))
    return codes, xs, ys


def test_hand_worked_example():
    code = np.array([0.3, 0.9])
    f = spm_max_pool([code], [0.1], [0.1], SpmConfig((1, 2), normalize=False))
    # Level 1 cell, then the four level-2 cells with only the top-left occupied.
    np.testing.assert_array_equal(f.vector, np.r_[code, code, [0, 0], [0, 0], [0, 0]])


def test_row_major_with_rows_from_y():
    f = spm_max_pool([[1.0]], [0.9], [0.1], SpmConfig((2,), normalize=False))
    np.testing.assert_array_equal(f.vector, [0, 1, 0, 0])
    f = spm_max_pool([[1.0]], [0.1], [0.9], SpmConfig((2,), normalize=False))
    np.testing.assert_array_equal(f.vector, [0, 0, 1, 0])


def test_boundary_position_one_lands_in_last_cell():
    assert cell_index(1.0, 4) == 3
    assert cell_index(0.75, 4) == 3 and cell_index(0.7499, 4) == 2
    f = spm_max_pool([[1.0]], [1.0], [1.0], SpmConfig((4,), normalize=False))
    assert f.vector[-1] == 1.0 and f.vector.sum() == 1.0


def test_bitwise_against_brute_force(rng):
    for _ in range(100):
        codes, xs, ys = random_case(rng)
        got = spm_max_pool(codes, xs, ys, RAW).vector
        want = oracles.spm_pool(codes.tolist(), xs.tolist(), ys.tolist(), (1, 2, 4), False)
        assert got.tobytes() == want.tobytes()


def test_normalized_against_brute_force(rng):
    for _ in range(20):
        codes, xs, ys = random_case(rng)
        got = spm_max_pool(codes, xs, ys, SpmConfig()).vector
        want = oracles.spm_pool(codes.tolist(), xs.tolist(), ys.tolist(), (1, 2, 4), True)
        np.testing.assert_allclose(got, want, rtol=1e-14)
        assert abs(np.linalg.norm(got) - 1) < 1e-12


@pytest.mark.parametrize("K", [8, 1024])
def test_length_law(rng, K):
    codes, xs, ys = random_case(rng, M=30, K=K)
    assert len(spm_max_pool(codes, xs, ys, SpmConfig()).vector) == 21 * K
    assert SpmConfig().dim(1024) == 21504


def test_duplicates_and_permutation(rng):
    codes, xs, ys = random_case(rng, M=25, K=4)
    base = spm_max_pool(codes, xs, ys, RAW).vector
    perm = rng.permutation(25)
    np.testing.assert_array_equal(spm_max_pool(codes[perm], xs[perm], ys[perm], RAW).vector, base)
    doubled = spm_max_pool(np.r_[codes, codes], np.r_[xs, xs], np.r_[ys, ys], RAW).vector
    np.testing.assert_array_equal(doubled, base)


def test_monotone_in_codes(rng):
    codes, xs, ys = random_case(rng, M=25, K=4)
    base = spm_max_pool(codes, xs, ys, RAW).vector
    bumped = codes.copy()
    bumped[3] += 0.5
    assert np.all(spm_max_pool(bumped, xs, ys, RAW).vector >= base)


@given(st.integers(1, 30), st.integers(1, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_property_level_one_is_global_max(M, K, seed):
    r = np.random.default_rng(seed)
    codes = r.uniform(size=(M, K))
    f = spm_max_pool(codes, r.uniform(size=M), r.uniform(size=M), RAW).vector
    np.testing.assert_array_equal(f[:K], codes.max(axis=0))
    # Each level's cells partition the points, so their max over cells is also the global max.
    np.testing.assert_array_equal(f[K:5 * K].reshape(4, K).max(axis=0), codes.max(axis=0))


def test_errors():
    with pytest.raises(PoolingError):
        spm_max_pool(np.zeros((0, 3)), [], [], SpmConfig())
    with pytest.raises(ContractError):
        spm_max_pool([[1.0]], [1.5], [0.0], SpmConfig())
    with pytest.raises(ContractError):
        spm_max_pool([[1.0], [2.0]], [0.5], [0.5], SpmConfig())
    with pytest.raises(ContractError):
        SpmConfig((2, 1))


def test_gfpf_round_trip(tmp_path, rng):
    feats = [PooledFeature(rng.uniform(size=12).astype(np.float32).astype(np.float64), i % 3)
             for i in range(5)]
    save_features(tmp_path / "f.gfpf", feats)
    blob = (tmp_path / "f.gfpf").read_bytes()
    assert blob[:4] == b"GFPF" and len(blob) == 16 + 5 * 4 + 5 * 12 * 4
    back = load_features(tmp_path / "f.gfpf")
    assert [f.label for f in back] == [0, 1, 2, 0, 1]
    for a, b in zip(feats, back):
        np.testing.assert_array_equal(a.vector, b.vector)
    (tmp_path / "t.gfpf").write_bytes(blob[:-2])
    with pytest.raises(DecodeError):
        load_features(tmp_path / "t.gfpf")
