import math
import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from photon_bec.core import (
    HBAR,
    K_B,
    ModelParams,
    ValidationError,
    detuning_for_ratio,
    dump_params,
    dye_cavity_params,
    kennard_stepanov,
    load_params,
    validate,
)

rates = st.floats(0.0, 1e3, allow_nan=False)


def test_constants_codata():
    assert HBAR == pytest.approx(1.054571817e-34, rel=1e-9)
    assert K_B == 1.380649e-23


def test_kennard_stepanov_ratio_57():
    # detuning giving B_em / B_abs = 57 at 300 K, worked out by hand in SI
    delta_si = -math.log(57.0) * 1.380649e-23 * 300.0 / 1.054571817e-34
    delta = delta_si * 1e-9
    assert detuning_for_ratio(57.0, 300.0) == pytest.approx(delta, rel=1e-9)
    exact = detuning_for_ratio(57.0, 300.0)
    assert 2.5e-5 / kennard_stepanov(2.5e-5, exact, 300.0) == pytest.approx(57.0, rel=1e-12)


def test_zero_detuning_gives_equal_rates():
    assert kennard_stepanov(3e-5, 0.0, 300.0) == 3e-5


def test_b_abs_inferred_from_detuning():
    delta = detuning_for_ratio(57.0, 300.0)
    p = ModelParams(M=10, kappa=1, B_em=2.5e-5, delta=delta, T=300.0)
    assert p.ratio == pytest.approx(57.0, rel=1e-12)


def test_inconsistent_explicit_b_abs_warns_and_wins():
    delta = detuning_for_ratio(57.0, 300.0)
    with pytest.warns(UserWarning, match="Kennard-Stepanov"):
        p = ModelParams(M=10, kappa=1, B_em=2.5e-5, B_abs=1e-6, delta=delta, T=300.0)
    assert p.B_abs == 1e-6


def test_dye_cavity_defaults():
    p = dye_cavity_params(gamma_up=1e-6)
    assert (p.M, p.kappa, p.B_em, p.gamma_down) == (5.17e9, 2.33, 2.5e-5, 0.0)
    assert p.ratio == pytest.approx(57.0)
    assert p.gamma_up == 1e-6


@pytest.mark.parametrize("field,value", [
    ("M", 0.5),
    ("M", math.inf),
    ("kappa", -1.0),
    ("gamma_up", math.nan),
    ("B_em", -1e-9),
    ("gamma_down", math.inf),
])
def test_validate_rejects(field, value):
    p = ModelParams(M=10, kappa=1, B_em=0.1, B_abs=0.01).replace(**{field: value})
    with pytest.raises(ValidationError) as info:
        validate(p)
    assert info.value.field == field


def test_validate_rejects_nonpositive_temperature():
    with pytest.raises(ValidationError, match="T"):
        validate(ModelParams(M=10, kappa=1, B_em=0.1, B_abs=0.01, T=0.0))


def test_validate_negative_detuning_needs_stronger_emission():
    with pytest.warns(UserWarning), pytest.raises(ValidationError) as info:
        validate(ModelParams(M=10, kappa=1, B_em=0.01, B_abs=0.1, delta=-1.0, T=300.0))
    assert info.value.field == "delta"


def test_validation_error_is_value_error():
    assert issubclass(ValidationError, ValueError)


@given(M=st.floats(1, 1e10), kappa=rates, gu=rates, gd=rates, be=rates, ba=rates)
def test_valid_params_pass(M, kappa, gu, gd, be, ba):
    p = ModelParams(M=M, kappa=kappa, gamma_up=gu, gamma_down=gd, B_em=be, B_abs=ba)
    assert validate(p) is p


def test_config_round_trip(tmp_path):
    p = dye_cavity_params(gamma_up=2.118686495567111e-06)
    path = tmp_path / "p.cfg"
    path.write_text(dump_params(p))
    assert load_params(path) == p


def test_config_comments_and_overrides(tmp_path):
    path = tmp_path / "p.cfg"
    path.write_text("# dye cavity\nM = 100\nkappa_GHz = 1.0  # loss\nB_em_GHz = 0.05\n")
    p = load_params(path, kappa=2.0)
    assert (p.M, p.kappa, p.B_em, p.B_abs) == (100.0, 2.0, 0.05, 0.0)


@pytest.mark.parametrize("text", ["bogus = 1\n", "M = ten\n"])
def test_config_errors(tmp_path, text):
    path = tmp_path / "p.cfg"
    path.write_text(text)
    with pytest.raises(ValidationError):
        load_params(path)


def test_params_are_frozen():
    p = ModelParams(M=10)
    with pytest.raises(AttributeError):
        p.M = 5
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert p.replace(kappa=2.0).kappa == 2.0
