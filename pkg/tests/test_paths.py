import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mmsde.errors import GridMismatch
from mmsde.paths import Control, Path, TimeGrid, brownian_values, cm_norm, sample_brownian, sup_distance
from mmsde.streams import block_ranges, stream


def test_grid_basics():
    g = TimeGrid(2.0, 4)
    assert g.dt == 0.5
    assert np.array_equal(g.times, [0.0, 0.5, 1.0, 1.5, 2.0])


@pytest.mark.parametrize("N", [0, -3, 2.5])
def test_grid_rejects_bad_N(N):
    with pytest.raises(ValueError, match="N"):
        TimeGrid(1.0, N)


def test_grid_rejects_nonpositive_T():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)


@pytest.mark.parametrize(
    "hdot, T, expected",
    [([1.0], 1.0, 1.0), ([0.0], 1.0, 0.0), ([3.0, 4.0], 1.0, 5.0), ([2.0], 4.0, 4.0)],
)
def test_cm_norm_constant_controls(hdot, T, expected):
    assert cm_norm(Control.constant(TimeGrid(T, 10), hdot)) == pytest.approx(expected, rel=1e-15)


def test_control_path_integrates_hdot():
    g = TimeGrid(1.0, 4)
    h = Control(g, [1.0, 2.0, 0.0, -1.0])
    assert np.allclose(h.path().values[:, 0], [0, 0.25, 0.75, 0.75, 0.5])


def test_control_algebra_and_grid_check():
    g = TimeGrid(1.0, 3)
    a, b = Control.constant(g, [1.0]), Control.constant(g, [2.0])
    assert np.array_equal((a + 2 * b).hdot, np.full((3, 1), 5.0))
    with pytest.raises(GridMismatch):
        a + Control.constant(TimeGrid(1.0, 4), [1.0])


def test_sup_distance():
    g = TimeGrid(1.0, 2)
    u = Path(g, [[0.0, 0.0], [1.0, 1.0], [0.0, 3.0]])
    v = Path(g, np.zeros((3, 2)))
    assert sup_distance(u, v) == 3.0
    with pytest.raises(GridMismatch):
        sup_distance(u, Path(TimeGrid(1.0, 3), np.zeros((4, 2))))


def test_path_csv_round_trip(tmp_path):
    g = TimeGrid(1.5, 7)
    p = Path(g, np.random.default_rng(0).normal(size=(8, 2)))
    p.to_csv(tmp_path / "p.csv")
    q = Path.from_csv(tmp_path / "p.csv")
    assert q.grid == g and np.array_equal(q.values, p.values)
    text = (tmp_path / "p.csv").read_bytes()
    assert b"\r" not in text and text.startswith(b"t,x_1,x_2\n")


def test_control_csv_and_npz_round_trip(tmp_path):
    g = TimeGrid(1.0, 5)
    h = Control(g, np.arange(10.0).reshape(5, 2))
    h.to_csv(tmp_path / "h.csv")
    assert np.array_equal(Control.from_csv(tmp_path / "h.csv", 1.0).hdot, h.hdot)
    p = h.path()
    p.dump(tmp_path / "p.npz")
    assert np.array_equal(Path.load(tmp_path / "p.npz").values, p.values)


def test_brownian_is_deterministic_and_starts_at_zero():
    g = TimeGrid(1.0, 12)
    a, b = sample_brownian(2, g, 5, 3), sample_brownian(2, g, 5, 3)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.values[0], [0.0, 0.0])
    assert not np.array_equal(a.values, sample_brownian(2, g, 5, 4).values)


@settings(max_examples=30, deadline=None)
@given(N0=st.sampled_from([1, 3, 5, 7]), L=st.integers(0, 6), extra=st.integers(1, 3),
       seed=st.integers(0, 2**31), replica=st.integers(0, 1000))
def test_brownian_coarse_path_is_restriction_of_fine(N0, L, extra, seed, replica):
    coarse = brownian_values(2, TimeGrid(1.3, N0 * 2**L), seed, replica)
    fine = brownian_values(2, TimeGrid(1.3, N0 * 2 ** (L + extra)), seed, replica)
    assert np.array_equal(fine[:: 2**extra], coarse)


def test_brownian_increments_are_standard_gaussian():
    g = TimeGrid(2.0, 48)
    W = np.stack([brownian_values(1, g, 9, r)[:, 0] for r in range(2000)])
    inc = np.diff(W, axis=1) / np.sqrt(g.dt)
    assert stats.kstest(inc.ravel(), "norm").pvalue > 1e-3
    # independence of increments shows up as variance linear in time
    assert np.var(W[:, -1]) == pytest.approx(2.0, rel=0.1)


def test_streams_are_keyed_not_ordered():
    a = stream(1, "x", 5).random(4)
    stream(1, "x", 4).random(100)
    assert np.array_equal(a, stream(1, "x", 5).random(4))
    assert not np.array_equal(a, stream(1, "y", 5).random(4))
    assert not np.array_equal(a, stream(2, "x", 5).random(4))


@given(n=st.integers(1, 50_000), bs=st.integers(1, 5000))
def test_block_ranges_cover(n, bs):
    blocks = list(block_ranges(n, bs))
    assert sum(s for _, s in blocks) == n
    assert [b for b, _ in blocks] == list(range(len(blocks)))
