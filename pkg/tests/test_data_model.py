import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icc.data import (CATEGORICAL, Column, ContrastSpec, Dataset, VariableRole, ate_contrast,
                      encode_categorical, grid_contrast, load_csv)
from icc.errors import ContrastError, ParseError, SchemaError

ROLES = {"y": "outcome", "a": "treatment", "z1": "instrument"}


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_three_rows(tmp_path):
    path = write(tmp_path, "y,a,z1\n1.0,0,2\n2.5,1,3\n-1,1,4\n")
    ds = load_csv(path, ROLES)
    assert ds.n == 3
    assert ds.names == ["y", "a", "z1"]
    np.testing.assert_array_equal(ds.y, [1.0, 2.5, -1.0])
    assert ds.column("z1").role is VariableRole.INSTRUMENT


def test_missing_outcome_role(tmp_path):
    path = write(tmp_path, "y,a,z1\n1,0,2\n")
    with pytest.raises(SchemaError):
        load_csv(path, {"a": "treatment", "z1": "instrument"})


def test_na_names_row(tmp_path):
    path = write(tmp_path, "y,a,z1\n1,0,2\nNA,1,3\n")
    with pytest.raises(ParseError) as info:
        load_csv(path, ROLES)
    assert info.value.row == 2
    assert "row 2" in str(info.value)


def test_non_numeric_cell(tmp_path):
    path = write(tmp_path, "y,a,z1\n1,0,abc\n")
    with pytest.raises(ParseError) as info:
        load_csv(path, ROLES)
    assert info.value.row == 1


def test_missing_column_and_file(tmp_path):
    path = write(tmp_path, "y,a\n1,0\n")
    with pytest.raises(SchemaError):
        load_csv(path, ROLES)
    with pytest.raises(SchemaError):
        load_csv(tmp_path / "nope.csv", ROLES)


def test_unmapped_column_dropped(tmp_path, caplog):
    path = write(tmp_path, "y,a,z1,extra\n1,0,2,9\n2,1,3,9\n")
    ds = load_csv(path, ROLES)
    assert "extra" not in ds.names
    assert any("extra" in d for d in ds.diagnostics)


def test_load_is_deterministic(tmp_path):
    path = write(tmp_path, "y,a,z1\n0.1,0,2\n0.2,1,3\n")
    a, b = load_csv(path, ROLES), load_csv(path, ROLES)
    for ca, cb in zip(a.columns, b.columns):
        assert ca.name == cb.name and ca.role == cb.role
        assert np.array_equal(ca.values, cb.values)


def test_latent_requires_simulated():
    y = Column("y", VariableRole.OUTCOME, [1.0, 2.0])
    a = Column("a", VariableRole.TREATMENT, [0.0, 1.0])
    u = Column("u", VariableRole.LATENT_CONFOUNDER, [0.0, 1.0])
    with pytest.raises(SchemaError):
        Dataset((y, a, u))
    assert Dataset((y, a, u), simulated=True).n == 2


def test_one_treatment_only():
    y = Column("y", VariableRole.OUTCOME, [1.0])
    a1 = Column("a1", VariableRole.TREATMENT, [0.0])
    a2 = Column("a2", VariableRole.TREATMENT, [1.0])
    with pytest.raises(SchemaError):
        Dataset((y, a1, a2))


def _cat_dataset(codes):
    return Dataset((
        Column("y", VariableRole.OUTCOME, np.zeros(len(codes))),
        Column("a", VariableRole.TREATMENT, np.zeros(len(codes))),
        Column("z", VariableRole.INSTRUMENT, codes, CATEGORICAL),
    ))


def test_encode_rank_codes():
    ds = encode_categorical(_cat_dataset([2, 5, 5, 9]))
    col = ds.column("z")
    np.testing.assert_array_equal(col.values, [0, 1, 1, 2])
    assert col.codebook == {2: 0, 5: 1, 9: 2}


def test_encode_contiguous_is_identity():
    ds = _cat_dataset([0, 1, 1, 2])
    assert encode_categorical(ds) is ds


def test_encode_continuous_noop():
    ds = Dataset((Column("y", VariableRole.OUTCOME, [0.3, 0.7]), Column("a", VariableRole.TREATMENT, [1.5, 2.5])))
    assert encode_categorical(ds) is ds


@given(st.lists(st.integers(-5, 50), min_size=1, max_size=30))
@settings(max_examples=60, deadline=None)
def test_encode_idempotent(codes):
    once = encode_categorical(_cat_dataset(codes))
    twice = encode_categorical(once)
    np.testing.assert_array_equal(once.column("z").values, twice.column("z").values)
    assert once.column("z").codebook == twice.column("z").codebook
    vals = once.column("z").values
    assert set(vals.tolist()) == set(range(len(set(codes))))


def test_ate_contrast():
    c = ate_contrast(1, 0)
    assert c.as_dict() == {0.0: -1.0, 1.0: 1.0}
    assert ate_contrast(0, 1).as_dict() == {0.0: 1.0, 1.0: -1.0}
    with pytest.raises(ContrastError):
        ate_contrast(1, 1)


@given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(-1e6, 1e6, allow_nan=False))
def test_ate_weights_sum_to_zero(a1, a0):
    if a1 == a0:
        return
    assert sum(ate_contrast(a1, a0).weights) == 0.0


def test_contrast_validation():
    with pytest.raises(ContrastError):
        ContrastSpec("discrete_weights", (1.0, 0.0), (1.0, -1.0))
    with pytest.raises(ContrastError):
        ContrastSpec("discrete_weights", (0.0, 1.0), (1.0, float("inf")))
    with pytest.raises(ContrastError):
        ContrastSpec("discrete_weights", (0.0,), (1.0, 2.0))


def test_grid_contrast_trapezoid():
    c = grid_contrast([0.0, 1.0, 3.0], [1.0, 1.0, 1.0])
    np.testing.assert_allclose(c.effective, [0.5, 1.5, 1.0])
    np.testing.assert_allclose(c.pi([0.0, 3.0, 2.0]), [0.5, 1.0, 0.0])
