import numpy as np
import pytest

from tkwfp.oracle import FieldSnapshot, error_metrics, evaluate_direct
from tkwfp.scenarios import CustomSignal, SourceSet, random_sources


def ramp(pos):
    pos = np.atleast_2d(pos)
    return SourceSet(pos, CustomSignal(lambda t, idx: t, len(pos)))


def test_single_source_closed_form():
    src = ramp([0, 0, 0])
    assert evaluate_direct(src, [[0.5, 0, 0]], 1.0).values[0] == pytest.approx(0.5 / (2 * np.pi))
    assert evaluate_direct(src, [[0.5, 0, 0]], 1.0).values[0] == pytest.approx(0.0795775, rel=1e-6)
    assert evaluate_direct(src, [[0.5, 0, 0]], 0.25).values[0] == 0.0


def test_superposition_mirror_sources():
    one = evaluate_direct(ramp([0.3, 0.1, -0.2]), [[0.0, 0.4, 0.5]], 2.0).values[0]
    two = evaluate_direct(ramp([[0.3, 0.1, -0.2], [-0.3, 0.1, -0.2]]), [[0.0, 0.4, 0.5]], 2.0).values[0]
    assert two == pytest.approx(2 * one, rel=1e-14)


def test_self_pair_skipped():
    src = ramp([[0, 0, 0], [0.5, 0, 0]])
    v = evaluate_direct(src, [[0, 0, 0]], 1.0).values[0]
    assert v == pytest.approx(0.5 / (2 * np.pi))


def test_inverse_distance_scaling():
    src = SourceSet(np.zeros((1, 3)), CustomSignal(lambda t, idx: np.ones_like(t), 1))
    vals = [evaluate_direct(src, [[r, 0, 0]], 5.0).values[0] * r for r in (0.1, 0.4, 1.3)]
    assert np.allclose(vals, 1 / (4 * np.pi), rtol=1e-14)


def test_linearity_in_signatures():
    src = random_sources(30, seed=5)
    x = np.random.default_rng(0).uniform(-1, 1, (20, 3))
    scaled = SourceSet(src.positions, CustomSignal(lambda t, idx: -2.5 * src.sigma(t, idx), 30))
    a = evaluate_direct(src, x, 4.0).values
    b = evaluate_direct(scaled, x, 4.0).values
    assert np.allclose(b, -2.5 * a, rtol=1e-13, atol=1e-15)


def test_chunking_does_not_change_result():
    src = random_sources(30, seed=5)
    x = np.random.default_rng(1).uniform(-1, 1, (50, 3))
    assert np.array_equal(evaluate_direct(src, x, 4.0).values, evaluate_direct(src, x, 4.0, chunk_pairs=7).values)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        evaluate_direct(ramp([0, 0, 0]), [[1, 0, 0]], -1.0)


def test_error_metrics_examples():
    x = np.zeros((3, 3))
    e = FieldSnapshot(1.0, x, [1.0, -4.0, 2.0])
    assert error_metrics(e, e) == (0.0, 0.0)
    a = FieldSnapshot(1.0, x, [1.5, -3.5, 2.5])
    assert error_metrics(a, e) == (0.5, 0.125)
    b = FieldSnapshot(1.0, x, [1.0, -4.0, 2.3])
    abs_max, rel = error_metrics(b, e)
    assert abs_max == pytest.approx(0.3) and rel == pytest.approx(0.075)


def test_error_metrics_zero_reference():
    x = np.zeros((2, 3))
    abs_max, rel = error_metrics(FieldSnapshot(0.0, x, [1e-3, 0.0]), FieldSnapshot(0.0, x, [0.0, 0.0]))
    assert abs_max == 1e-3 and rel is None


def test_error_metrics_mismatch():
    x = np.zeros((2, 3))
    with pytest.raises(ValueError):
        error_metrics(FieldSnapshot(0.0, x, [0, 0]), FieldSnapshot(1.0, x, [0, 0]))
    with pytest.raises(ValueError):
        FieldSnapshot(0.0, x, [0.0])
