import numpy as np
import pytest
from hypothesis import given, strategies as st

from wallprobe.errors import GeometryError, InvalidArgument, ParseError
from wallprobe.fdtd import GridSpec
from wallprobe.walls import (PROFILE_SHAPE, TABLE_I, AirGap, DielectricProfile, Homogeneous, TargetSpec,
                             XLayered, YLayered, case_ids, enumerate_dataset, parse_wall, profile_centers,
                             rasterize_medium, rasterize_profile)


def test_enumeration_counts():
    specs = enumerate_dataset()
    kinds = [s.kind for s in specs]
    assert len(specs) == 892
    assert [kinds.count(k) for k in ("homo", "ylayer", "xlayer", "airgap")] == [130, 225, 225, 312]
    assert all(s.in_table_range() for s in specs)
    assert len(set(case_ids(specs))) == 892


def test_enumeration_is_deterministic():
    a = [s.to_line() for s in enumerate_dataset()]
    b = [s.to_line() for s in enumerate_dataset()]
    assert a == b


def test_kind_filter():
    specs = enumerate_dataset(kinds=("homo",))
    assert len(specs) == 130 and {s.kind for s in specs} == {"homo"}


eps = st.floats(1.0, 10.0, allow_nan=False)
pos = st.floats(0.01, 0.5, allow_nan=False)
walls = st.one_of(
    st.builds(Homogeneous, eps, pos),
    st.builds(lambda a, b, d1, d2: YLayered(a, a + b, d1, d2), eps, st.floats(0.1, 4), pos, pos),
    st.builds(lambda a, b, l2, th: XLayered(a, a + b, l2, th), eps, st.floats(0.1, 4), st.floats(0.1, 1.9), pos),
    st.builds(AirGap, eps, st.floats(0.2, 0.5), st.integers(1, 4)),
)


@given(walls)
def test_line_round_trip(spec):
    assert parse_wall(spec.to_line()) == spec


@pytest.mark.parametrize("line", ["brick,eps_r=3", "homo,eps_r", "homo,eps_r=x,th=0.1", "homo,eps_r=3,bogus=1"])
def test_parse_errors(line):
    with pytest.raises(ParseError):
        parse_wall(line)


def test_invalid_geometry():
    with pytest.raises(GeometryError):
        Homogeneous(0.5, 0.1)
    with pytest.raises(GeometryError):
        Homogeneous(3.0, -0.1)
    with pytest.raises(GeometryError):
        YLayered(3.0, 2.0, 0.1, 0.1)
    with pytest.raises(GeometryError):
        XLayered(2.0, 4.0, 2.5, 0.1)
    with pytest.raises(GeometryError):
        AirGap(4.0, 0.15, 2)  # thinner than the two solid shells
    with pytest.raises(InvalidArgument):
        Homogeneous(3.0, 0.1, sigma=-1)


def test_profile_homogeneous():
    prof = rasterize_profile(Homogeneous(5.0, 0.4))
    xc, yc = profile_centers()
    assert prof.shape == PROFILE_SHAPE
    inside = yc < 1.4
    assert np.all(prof.values[inside] == 5.0)
    assert np.all(prof.values[~inside] == 1.0)


def test_profile_ylayer_rows():
    prof = rasterize_profile(YLayered(2.0, 6.0, 0.1, 0.2))
    _, yc = profile_centers()
    u = yc - 1.0
    expect = np.where(u < 0.1, 2.0, np.where(u < 0.3, 6.0, np.where(u < 0.4, 2.0, 1.0)))
    assert np.array_equal(prof.values, np.repeat(expect[:, None], 32, axis=1))


def test_profile_xlayer_columns():
    prof = rasterize_profile(XLayered(2.0, 6.0, 0.7, 0.3))
    xc, _ = profile_centers()
    row = prof.values[0]
    assert np.all(row[np.abs(xc) < 0.35] == 6.0) and np.all(row[np.abs(xc) >= 0.35] == 2.0)


def test_airgap_voids():
    w = AirGap(4.0, 0.4, 3)
    gaps = w.gaps()
    assert len(gaps) == 3
    widths = {round(g[1] - g[0], 12) for g in gaps}
    assert len(widths) == 1
    assert np.isclose(3 * widths.pop() + 4 * 0.1, 2.0)
    eps, _, solid = w.material(0.0, 1.2)
    assert eps == 1.0 or eps == 4.0
    # centre of the first void is air, its shell is solid
    x0, x1, y0, y1 = gaps[0]
    assert w.material((x0 + x1) / 2, (y0 + y1) / 2)[0] == 1.0
    assert w.material((x0 + x1) / 2, 1.05)[0] == 4.0


def test_airgap_sigma_only_in_solid():
    w = AirGap(4.0, 0.4, 2, sigma=0.1)
    x0, x1, y0, y1 = w.gaps()[0]
    _, sig, _ = w.material(np.array([(x0 + x1) / 2, 0.0]), np.array([(y0 + y1) / 2, 1.05]))
    assert sig[0] == 0.0 and sig[1] == 0.1


def test_medium_sampled_at_nodes():
    g = GridSpec.default()
    spec = Homogeneous(5.0, 0.2)
    med = rasterize_medium(spec, g)
    X, Y = np.meshgrid(g.x, g.y, indexing="ij")
    inside = (X >= -1) & (X < 1) & (Y >= 1.0) & (Y < 1.2)
    assert np.array_equal(med.eps_r == 5.0, inside)


def test_target_behind_wall():
    g = GridSpec.default()
    wall = AirGap(4.0, 0.3, 2)
    t = TargetSpec((0.0, 1.3 + 0.5), 0.3, 0.3, 4.0)
    med = rasterize_medium(wall, g, t)
    X, Y = np.meshgrid(g.x, g.y, indexing="ij")
    assert np.all(med.eps_r[t.mask(X, Y)] == 4.0)
    with pytest.raises(GeometryError):
        rasterize_medium(wall, g, TargetSpec((0.0, 1.2), 0.3, 0.3, 4.0))


def test_zero_size_target_is_ignored():
    g = GridSpec.default()
    wall = Homogeneous(4.0, 0.2)
    a = rasterize_medium(wall, g)
    b = rasterize_medium(wall, g, TargetSpec((0.0, 1.6), 0.0, 0.0, 4.0))
    assert np.array_equal(a.eps_r, b.eps_r)


def test_profile_equality():
    a = DielectricProfile(np.ones((32, 32)))
    assert a == DielectricProfile(np.ones((32, 32)))
    assert a != DielectricProfile(np.full((32, 32), 2.0))
    with pytest.raises(InvalidArgument):
        DielectricProfile(np.ones(5))


def test_table_values():
    assert TABLE_I.homo_eps[0] == 3.0 and TABLE_I.homo_eps[-1] == 8.0 and len(TABLE_I.homo_eps) == 26
    assert TABLE_I.gap_n == (2, 3, 4)
