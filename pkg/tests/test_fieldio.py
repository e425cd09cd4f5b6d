import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from binarykin.errors import ContractError
from binarykin.fieldio import field_to_text, format_float, read_field, table_to_text, write_field
from binarykin.vgrid import DistributionPair, SpatialGrid, VelocityGrid

VG = VelocityGrid(2.0, 3)


def _pair(xdims, xpoints, seed=0):
    xg = SpatialGrid(xdims, xpoints)
    data = np.random.default_rng(seed).normal(size=(2, xg.size, VG.size))
    return DistributionPair(VG, xg, data)


@pytest.mark.parametrize("xdims,xpoints", [(1, 4), (3, 2)])
def test_roundtrip_exact(tmp_path, xdims, xpoints):
    f = _pair(xdims, xpoints)
    p = write_field(tmp_path / "f.csv", f, {"seed": 3})
    g, meta = read_field(p)
    assert np.array_equal(g.data, f.data)
    assert g.xgrid == f.xgrid and g.vgrid == f.vgrid
    assert meta["seed"] == "3"


def test_layout():
    text = field_to_text(_pair(1, 4), {"t": 0.5})
    lines = text.splitlines()
    assert lines[0].split(",") == ["v_radius=2", "v_points=3", "x_dims=1", "x_points=4", "t=0.5"]
    assert lines[1] == "x1_index,vx,vy,vz,fA,fB"
    assert len(lines) == 2 + 4 * 27
    assert lines[2].startswith("0,-2,-2,-2,")


def test_deterministic_bytes():
    assert field_to_text(_pair(1, 4, 7)) == field_to_text(_pair(1, 4, 7))


@given(arrays(np.float64, 5, elements=st.floats(allow_nan=False, allow_infinity=True)))
def test_float_format_roundtrips(values):
    for v in values:
        assert float(format_float(v)) == v
    assert format_float(float("nan")) == "nan"


def test_table_cells():
    text = table_to_text(["a", "b", "c"], [[1, 0.1, True]], {"k": "v"})
    assert text == "k=v\na,b,c\n1,0.10000000000000001,true\n"


def _corrupt(tmp_path, edit):
    p = write_field(tmp_path / "f.csv", _pair(1, 4))
    lines = p.read_text().splitlines()
    p.write_text("\n".join(edit(lines)) + "\n")
    return p


@pytest.mark.parametrize("edit,match", [
    (lambda L: L[:1], "missing"),
    (lambda L: ["v_radius=2,v_points=3,x_dims=1"] + L[1:], "x_points"),
    (lambda L: ["oops"] + L[1:], "key=value"),
    (lambda L: L[:1] + ["x1_index,vx,vy,vz,fB,fA"] + L[2:], "columns"),
    (lambda L: L[:-1], "rows"),
    (lambda L: L[:-1] + [L[2]], "missing or duplicated"),
    (lambda L: L[:2] + ["0,-2,-2,-1.5,1,1"] + L[3:], "grid"),
])
def test_malformed(tmp_path, edit, match):
    with pytest.raises(ContractError, match=match):
        read_field(_corrupt(tmp_path, edit))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        read_field(tmp_path / "nope.csv")
