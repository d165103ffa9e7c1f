import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radialns.grid import GridError, MIN_LAYER_NODES, SampledField, build_grid
from radialns.model import derive_constants

from conftest import make_params


def _grid(N=4096, R_max=200.0, eps=None, **changes):
    p = make_params(**changes)
    return build_grid(p, derive_constants(p), R_max=R_max, N=N, epsilon_scale=eps)


def test_layer_resolution_example():
    g = _grid(N=2048, R_max=100.0, eps=1e-3)
    assert g.layer_width == pytest.approx(1e-3)
    assert np.count_nonzero(g.nodes <= 1.01) >= MIN_LAYER_NODES
    assert g.nodes[0] == 1.0 and g.R_max == 100.0
    assert np.all(np.diff(g.nodes) > 0)


@pytest.mark.parametrize("N", [8, 63])
def test_insufficient_nodes(N):
    with pytest.raises(GridError, match="insufficient nodes"):
        _grid(N=N)


def test_thin_layer_names_required_count():
    with pytest.raises(GridError, match=r"N >= \d+ required"):
        _grid(N=64, eps=1e-9)


def test_thick_layer_falls_back_to_log_spacing():
    g = _grid(N=512, R_max=50.0, eps=100.0)
    assert g.layer_width > g.R_max / 10
    assert g.stretch == pytest.approx(np.log(50.0))
    np.testing.assert_allclose(np.diff(np.log(g.nodes))[-10:], np.diff(np.log(g.nodes))[-11], rtol=1e-2)


def test_short_domain_rejected():
    with pytest.raises(GridError, match="R_max"):
        _grid(R_max=5.0)


def test_refined_halves_spacing():
    g = _grid(N=1025)
    f = g.refined(2)
    assert f.N == 2049
    np.testing.assert_allclose(f.nodes[::2], g.nodes, rtol=1e-15)


def test_pinned_keeps_node_count():
    g = _grid().pinned([1.5, 2.0, 10.0])
    assert g.N == 4096
    for r in (1.5, 2.0, 10.0):
        assert g.nodes[g.index_of(r)] == r
    with pytest.raises(ValueError, match="not a grid node"):
        g.index_of(1.2345678)


@settings(max_examples=30, deadline=None)
@given(eps=st.floats(1e-6, 1.0), N=st.sampled_from([1024, 2048, 4096]))
def test_layer_invariant(eps, N):
    try:
        g = _grid(N=N, eps=eps)
    except GridError as exc:
        assert "insufficient nodes" in str(exc)
        return
    if g.layer_width < (g.R_max - 1) / 10:
        assert g.nodes_in_layer() >= MIN_LAYER_NODES
    assert g.nodes[0] == 1.0 and np.all(np.diff(g.nodes) > 0)


def test_sampled_field_rejects_bad_values():
    g = _grid(N=128, eps=0)
    with pytest.raises(ValueError, match="non-finite"):
        SampledField(g, np.full(128, np.nan))
    with pytest.raises(ValueError, match="values for"):
        SampledField(g, np.zeros(5))
