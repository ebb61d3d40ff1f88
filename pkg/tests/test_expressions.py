import numpy as np
import pytest

from singular_pf.expressions import ExpressionError, parse_expr

PTS = np.array([[0.25, 0.5], [0.75, 0.1]])


def test_constants_and_cosines():
    assert np.all(parse_expr(2.5).evaluate(PTS) == 2.5)
    assert np.all(parse_expr({"const": -1}).evaluate(PTS) == -1.0)
    np.testing.assert_allclose(parse_expr({"cos": [1, 0], "amp": 2}).evaluate(PTS), 2 * np.cos(np.pi * PTS[:, 0]))
    np.testing.assert_allclose(parse_expr({"coord": 1, "amp": 3}).evaluate(PTS, extent=[1, 2]), 1.5 * PTS[:, 1])


def test_sum_product_ramp():
    e = parse_expr({"sum": [1.0, {"product": [2.0, {"coord": 0}]}]})
    np.testing.assert_allclose(e.evaluate(PTS), 1 + 2 * PTS[:, 0])
    r = parse_expr({"ramp": [0.0, 1.0, 1.0, 3.0]})
    assert r.time_dependent and not e.time_dependent
    assert r.evaluate(PTS, t=0.5)[0] == 2.0 and r.evaluate(PTS, t=5.0)[0] == 3.0 and r.evaluate(PTS, t=-1)[0] == 1.0


def test_noise_is_seeded():
    e = parse_expr({"noise": 0.5})
    a, b = e.evaluate(PTS, seed=1), e.evaluate(PTS, seed=1)
    assert np.array_equal(a, b) and not np.array_equal(a, e.evaluate(PTS, seed=2))
    assert np.all(np.abs(a) <= 0.5)


@pytest.mark.parametrize("data", [{"sum": 1.0, "amp": 2}, {"sum": [0.1, {"const": 1}], "extra": 1},
                                  {"noise": 0.1, "other": 2}, {"cos": [1, 0], "amp": 2.0, "coord": 3}])
def test_mixed_keys_rejected(data):
    with pytest.raises(ExpressionError):
        parse_expr(data)


@pytest.mark.parametrize("data", [1.5, {"cos": [1, 2], "amp": 0.3}, {"coord": 0, "amp": 2.0},
                                  {"sum": [1.0, {"product": [2.0, {"cos": [0, 1], "amp": 1.0}]}]},
                                  {"ramp": [0.0, 1.0, 2.0, 3.0]}, {"noise": 0.2, "stream": 3}])
def test_to_data_roundtrip(data):
    e = parse_expr(data)
    assert parse_expr(e.to_data()) == e


def test_rejections():
    for bad in (True, "x", [1, 2], {"sum": []}, {"ramp": [1, 2]}, {"unknown": 1}):
        with pytest.raises(ExpressionError):
            parse_expr(bad)
