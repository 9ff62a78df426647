import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boltzkit.fields import (FieldError, MaxwellianParams, build_grid,
                             exponential_partial_sums, field_to_csv,
                             load_field, moment, moment_index_set,
                             normalized_moments, sample_maxwellian,
                             save_field, verify_moment_interpolation,
                             weighted_ratio_integral)


@pytest.fixture(scope="module")
def fine_grid():
    return build_grid(3, 6.0, 31)


def test_grid_geometry():
    g = build_grid(3, 6.0, 11)
    assert g.delta == pytest.approx(12.0 / 11.0)
    assert g.axis[0] == pytest.approx(-6.0 + 0.5 * g.delta)
    np.testing.assert_allclose(g.axis, -g.axis[::-1], atol=1e-12)
    assert g.n_cells == 11 ** 3
    assert g.coords().shape == (11, 11, 11, 3)


def test_build_grid_rejections():
    with pytest.raises(FieldError, match="dimension"):
        build_grid(4, 6.0, 11)
    with pytest.raises(FieldError, match=">= 2"):
        build_grid(3, 6.0, 1)
    with pytest.raises(FieldError, match="vmax"):
        build_grid(3, -1.0, 11)
    with pytest.raises(FieldError, match="cap"):
        build_grid(3, 6.0, 300)


def test_maxwellian_moments(fine_grid):
    f = sample_maxwellian(MaxwellianParams(a=1.0), fine_grid)
    assert moment(fine_grid, f, 0.0) == pytest.approx(np.pi ** 1.5, rel=1e-12)
    assert moment(fine_grid, f, 1.0) == pytest.approx(1.5 * np.pi ** 1.5,
                                                      rel=1e-10)


def test_maxwellian_validation():
    with pytest.raises(FieldError, match="positive"):
        MaxwellianParams(a=-1.0)


def test_weighted_ratio_integral(fine_grid):
    f = sample_maxwellian(MaxwellianParams(a=1.0), fine_grid)
    m = MaxwellianParams(a=0.5)
    # int e^{-v^2} e^{0.5 v^2} = (2 pi)^{3/2}
    assert weighted_ratio_integral(fine_grid, f, m) == pytest.approx(
        (2.0 * np.pi) ** 1.5, rel=1e-6)
    with pytest.raises(FieldError, match="w_eps"):
        weighted_ratio_integral(fine_grid, f, m, weight="w_eps")
    with pytest.raises(FieldError, match="unknown weight"):
        weighted_ratio_integral(fine_grid, f, m, weight="bogus")


def test_exponential_partial_sums(fine_grid):
    f = sample_maxwellian(MaxwellianParams(a=1.0), fine_grid)
    sums = exponential_partial_sums(fine_grid, f, a=0.5, k_terms=12)
    exact = (2.0 * np.pi) ** 1.5
    assert sums.shape == (13,)
    assert np.all(np.diff(sums) > 0)  # increasing partial sums
    assert sums[-1] == pytest.approx(exact, rel=1e-3)


def test_moment_index_set():
    j = moment_index_set(1.0, 3.0)
    assert list(j) == [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    j2 = moment_index_set(0.5, 1.0)
    assert 0.25 in j2 and 0.0 not in j2


def test_normalized_moments_ledger(fine_grid):
    f = sample_maxwellian(MaxwellianParams(a=1.0), fine_grid)
    led = normalized_moments(fine_grid, f, [0.5, 1.0, 2.0], b_norm=0.5)
    assert led.m_of(1.0) == pytest.approx(1.5 * np.pi ** 1.5, rel=1e-10)
    from scipy.special import gamma
    assert led.z_of(2.0) == pytest.approx(led.m_of(2.0) / gamma(2.5),
                                          rel=1e-12)
    with pytest.raises(FieldError, match="not present"):
        led.m_of(3.0)


@given(a=st.floats(min_value=0.2, max_value=2.0),
       k=st.floats(min_value=0.5, max_value=3.0))
@settings(max_examples=20, deadline=None)
def test_moment_interpolation_property(a, k):
    grid = build_grid(3, 5.0, 15)
    f = sample_maxwellian(MaxwellianParams(a=a), grid)
    rep = verify_moment_interpolation(grid, f, k1=0.5 * k, k=k, k2=2.0 * k)
    assert rep.ok


def test_moment_interpolation_point_mass():
    grid = build_grid(3, 5.0, 9)
    f = grid.zeros()
    f[4, 4, 4] = 1.0  # single cell: all slack collapses to zero
    rep = verify_moment_interpolation(grid, f, 1.0, 2.0, 4.0)
    assert rep.slack_low == pytest.approx(0.0, abs=1e-12)
    assert rep.slack_high == pytest.approx(0.0, abs=1e-12)
    assert rep.ok


def test_field_container_roundtrip(tmp_path):
    grid = build_grid(3, 4.0, 7)
    rng = np.random.default_rng(3)
    f = rng.random(grid.shape)
    path = tmp_path / "field.bin"
    save_field(path, grid, f)
    grid2, f2 = load_field(path)
    assert grid2 == grid
    np.testing.assert_array_equal(f, f2)
    # header is exactly 32 bytes + payload
    assert path.stat().st_size == 32 + 8 * grid.n_cells


def test_field_container_errors(tmp_path):
    grid = build_grid(2, 4.0, 5)
    path = tmp_path / "field.bin"
    save_field(path, grid, grid.zeros())
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    bad = tmp_path / "bad.bin"
    bad.write_bytes(raw)
    with pytest.raises(FieldError, match="magic"):
        load_field(bad)
    trunc = tmp_path / "trunc.bin"
    trunc.write_bytes(path.read_bytes()[:40])
    with pytest.raises(FieldError, match="expected"):
        load_field(trunc)


def test_field_to_csv(tmp_path):
    grid = build_grid(2, 2.0, 3)
    f = sample_maxwellian(MaxwellianParams(a=1.0), grid)
    path = tmp_path / "f.csv"
    field_to_csv(path, grid, f)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (9, 3)
    np.testing.assert_allclose(data[:, 2], f.reshape(-1))
