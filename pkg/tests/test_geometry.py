"""Layout construction: exact tiling, lookups, hashing, validation."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from beantrap import Strip, build_layout, default_chip_layout
from beantrap.errors import GeometryError


def test_default_layout_wires():
    layout = default_chip_layout()
    assert layout.strip_names() == ("Z", "U")
    z, u = layout.strips
    assert z.width == pytest.approx(40e-6)
    assert u.width == pytest.approx(300e-6)
    # K_C * width: the 40 um wire saturates at 1.8 A
    assert z.critical_current == pytest.approx(1.8)
    assert u.critical_current == pytest.approx(13.5)
    assert u.z_left > z.z_right


def test_default_layout_gap_is_edge_to_edge():
    layout = default_chip_layout(gap=80e-6)
    z, u = layout.strips
    assert u.z_left - z.z_right == pytest.approx(80e-6)


def test_tiling_is_exact():
    layout = default_chip_layout()
    for s in range(layout.n_strips):
        sl = layout.strip_slice(s)
        strip = layout.strips[s]
        assert np.sum(layout.widths[sl]) == pytest.approx(strip.width,
                                                          rel=1e-12)
        edges_l = layout.z_centers[sl] - 0.5 * layout.widths[sl]
        edges_r = layout.z_centers[sl] + 0.5 * layout.widths[sl]
        assert edges_l[0] == pytest.approx(strip.z_left, abs=1e-18)
        assert edges_r[-1] == pytest.approx(strip.z_right, abs=1e-18)
        # elements abut without gaps or overlaps
        np.testing.assert_allclose(edges_r[:-1], edges_l[1:], rtol=0,
                                   atol=1e-18)


def test_element_arrays_are_frozen():
    layout = default_chip_layout()
    with pytest.raises(ValueError):
        layout.z_centers[0] = 0.0


def test_strip_by_name():
    layout = default_chip_layout()
    assert layout.strip_by_name("Z") == 0
    assert layout.strip_by_name("U") == 1
    with pytest.raises(KeyError):
        layout.strip_by_name("W")


def test_layout_hash_tracks_content():
    a = default_chip_layout()
    b = default_chip_layout()
    c = default_chip_layout(gap=56e-6)
    assert a.layout_hash() == b.layout_hash()
    assert a.layout_hash() != c.layout_hash()


def test_overlapping_strips_rejected():
    strips = [Strip("a", 0.0, 40e-6, 4.5e4),
              Strip("b", 30e-6, 40e-6, 4.5e4)]
    with pytest.raises(GeometryError, match="overlap"):
        build_layout(strips)


def test_bad_strip_parameters_rejected():
    with pytest.raises(GeometryError, match="width"):
        build_layout([Strip("a", 0.0, 0.0, 4.5e4)])
    with pytest.raises(GeometryError, match="k_c"):
        build_layout([Strip("a", 0.0, 40e-6, -1.0)])
    with pytest.raises(GeometryError, match="duplicate"):
        build_layout([Strip("a", 0.0, 40e-6, 4.5e4),
                      Strip("a", 100e-6, 40e-6, 4.5e4)])
    with pytest.raises(GeometryError, match="element_width"):
        build_layout([Strip("a", 0.0, 2e-6, 4.5e4)], element_width=3e-6)
    with pytest.raises(GeometryError, match="at least one"):
        build_layout([])


@given(widths_um=st.lists(st.floats(1.0, 400.0), min_size=1, max_size=4),
       gap_um=st.floats(1.0, 200.0),
       element_um=st.floats(0.5, 1.0))
def test_tiling_partitions_any_strip_set(widths_um, gap_um, element_um):
    strips = []
    z = 0.0
    for i, w in enumerate(widths_um):
        strips.append(Strip(f"s{i}", (z + 0.5 * w) * 1e-6, w * 1e-6, 4.5e4))
        z += w + gap_um
    layout = build_layout(strips, element_width=element_um * 1e-6)
    assert layout.n_elements == layout.strip_index.size
    for s, strip in enumerate(strips):
        sl = layout.strip_slice(s)
        assert np.all(layout.strip_index[sl] == s)
        assert np.sum(layout.widths[sl]) == pytest.approx(strip.width,
                                                          rel=1e-9)
        assert np.all(layout.widths[sl] <= element_um * 1e-6 * (1 + 1e-9))
        assert np.all(layout.k_c[sl] == strip.k_c)
