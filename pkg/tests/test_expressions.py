import numpy as np
import pytest

from pymanreach.exceptions import ConfigError
from pymanreach.expressions import compile_array, evaluate_array, parse_array, parse_expression


def test_constant_arrays():
    assert np.allclose(evaluate_array("[0, pi/2, 0]"), [0.0, np.pi / 2, 0.0])
    assert np.allclose(evaluate_array("[-sqrt(2)/4]"), [-np.sqrt(2) / 4])
    assert evaluate_array("[[1]]").shape == (1, 1)
    assert evaluate_array("pi/4").shape == (1,)
    assert np.allclose(evaluate_array("[[0, 0], [0, 1], [1, 0]]"), [[0, 0], [0, 1], [1, 0]])


def test_caret_is_power():
    assert float(parse_expression("2^3")) == 8.0
    r = compile_array("[r^2, exp(-r)]", ('r',))
    assert np.allclose(r(np.array([3.0])), [9.0, np.exp(-3.0)])


def test_compiled_matrix_over_coordinates():
    G = compile_array("[[0, 0], [0, 1], [1 + 0.5*phi, 0]]", ('psi', 'theta', 'phi'))
    value = G(np.array([0.3, 1.0, 0.4]))
    assert value.shape == (3, 2)
    assert value[2, 0] == pytest.approx(1.2)

    f = compile_array("[-sin(theta)/2]", ('theta',))
    assert f(np.array([np.pi / 2]))[0] == pytest.approx(-0.5)


def test_unknown_names_are_rejected():
    with pytest.raises(ConfigError) as err:
        parse_expression("q + 1", ('r',), field='METRIC.0,0')
    assert err.value.field == 'METRIC.0,0'
    assert 'q' in str(err.value)


def test_unsupported_functions_are_rejected():
    with pytest.raises(ConfigError):
        parse_expression("log(r)", ('r',))
    with pytest.raises(ConfigError):
        parse_expression("atan(r)", ('r',))


def test_malformed_arrays_are_rejected():
    with pytest.raises(ConfigError):
        parse_array("[[1, 2], [3]]")
    with pytest.raises(ConfigError):
        parse_array("[1, 2")
    with pytest.raises(ConfigError):
        evaluate_array("[theta]", field='LOCAL_DATA.x0')


def test_names_outside_the_grammar_are_rejected():
    for text in ("factorial(4)", "oo", "Rational(1, 3)", "binomial(5, 2)", "E", "I*2"):
        with pytest.raises(ConfigError) as err:
            parse_expression(text, field='LOCAL_DATA.L_f')
        assert err.value.field == 'LOCAL_DATA.L_f'
    with pytest.raises(ConfigError):
        parse_expression("2 % 3")
    with pytest.raises(ConfigError):
        parse_expression("'text'")


def test_entries_are_never_executed(tmp_path):
    marker = tmp_path / 'marker'
    text = f"__import__('pathlib').Path('{marker}').touch() or 1"
    with pytest.raises(ConfigError):
        parse_expression(text)
    with pytest.raises(ConfigError):
        evaluate_array(f"[{text}]")
    assert not marker.exists()


def test_number_literals():
    assert float(parse_expression("1.5e-3")) == pytest.approx(1.5e-3)
    assert float(parse_expression(".25 + 2E1")) == pytest.approx(20.25)
    assert float(parse_expression("1/0.8")) == pytest.approx(1.25)
