import numpy as np
import pytest

from topobc.channel import (
    PowerConstraintViolated,
    SnrPoint,
    ZeroVector,
    check_power,
    complex_normal,
    matched_beam,
    null_beam,
    orthogonal_complement,
    receive,
    sample_realization,
    trial_stream,
)
from topobc.state_model import TOPO_1A


def test_same_stream_gives_same_realization():
    a = sample_realization(trial_stream(1, 0, 0))
    b = sample_realization(trial_stream(1, 0, 0))

    np.testing.assert_array_equal(a.h, b.h)
    np.testing.assert_array_equal(a.g, b.g)
    assert a.u == b.u and a.v == b.v


def test_streams_are_disjoint_per_trial_and_snr():
    base = sample_realization(trial_stream(1, 0, 0)).h
    assert not np.allclose(base, sample_realization(trial_stream(1, 0, 1)).h)
    assert not np.allclose(base, sample_realization(trial_stream(1, 1, 0)).h)
    assert not np.allclose(base, sample_realization(trial_stream(2, 0, 0)).h)


def test_trial_stream_rejects_negative_indices():
    with pytest.raises(ValueError):
        trial_stream(-1, 0, 0)


def test_complex_normal_has_unit_variance():
    z = complex_normal(trial_stream(3, 0, 0), 100_000)

    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.02)
    assert np.var(z.real) == pytest.approx(0.5, abs=0.01)
    assert abs(np.mean(z)) < 0.02


def test_projection_onto_fixed_beam_is_isotropic():
    rng = trial_stream(4, 0, 0)
    h = complex_normal(rng, 200_000).reshape(-1, 2)
    x = np.array([0.6, 0.8j])

    assert np.mean(np.abs(h @ x) ** 2) == pytest.approx(1.0, abs=0.02)


def test_receive_with_zero_input_returns_noise():
    ch = sample_realization(trial_stream(5, 0, 0))
    y, z = receive(np.zeros(2), ch, TOPO_1A, SnrPoint(1e4), 0.5)
    assert y == ch.u
    assert z == ch.v


def test_receive_power_follows_link_exponents():
    snr = SnrPoint(1e4)
    rng = trial_stream(6, 0, 0)
    strong, weak = [], []
    for _ in range(20_000):
        ch = sample_realization(rng)
        x = complex_normal(rng, 2)
        x /= np.linalg.norm(x)
        y, z = receive(x, ch, TOPO_1A, snr, 0.5)
        strong.append(abs(y - ch.u) ** 2)
        weak.append(abs(z - ch.v) ** 2)

    assert np.mean(strong) / snr.rho == pytest.approx(1.0, rel=0.03)
    assert np.mean(weak) == pytest.approx(1e2, rel=0.03)


def test_receive_is_linear():
    ch = sample_realization(trial_stream(7, 0, 0))
    snr = SnrPoint(1e3)
    x1, x2 = np.array([0.3, 0.1j]), np.array([-0.2, 0.4])
    y1, z1 = receive(x1, ch, TOPO_1A, snr, 0.5)
    y2, z2 = receive(x2, ch, TOPO_1A, snr, 0.5)
    y, z = receive(x1 + x2, ch, TOPO_1A, snr, 0.5)

    assert y - ch.u == pytest.approx((y1 - ch.u) + (y2 - ch.u))
    assert z - ch.v == pytest.approx((z1 - ch.v) + (z2 - ch.v))


def test_orthogonal_complement_examples():
    np.testing.assert_allclose(orthogonal_complement([1, 0]), [0, 1], atol=1e-15)
    np.testing.assert_allclose(orthogonal_complement(np.array([3, 4]) / 5), np.array([-4, 3]) / 5)


def test_orthogonal_complement_properties():
    rng = trial_stream(8, 0, 0)
    for _ in range(100):
        e = complex_normal(rng, 2)
        perp = orthogonal_complement(e)
        assert np.linalg.norm(perp) == pytest.approx(1.0)
        assert abs(np.vdot(e, perp)) < 1e-12
        # applied twice spans the line of e
        back = orthogonal_complement(perp)
        assert abs(abs(np.vdot(back, e)) - np.linalg.norm(e)) < 1e-12


def test_orthogonal_complement_of_zero_vector():
    with pytest.raises(ZeroVector):
        orthogonal_complement([0, 0])


def test_null_and_matched_beams():
    ch = sample_realization(trial_stream(9, 0, 0))

    assert abs(ch.h @ null_beam(ch.h)) < 1e-12
    assert ch.h @ matched_beam(ch.h) == pytest.approx(np.linalg.norm(ch.h))
    assert np.linalg.norm(null_beam(ch.g)) == pytest.approx(1.0)


def test_check_power():
    assert check_power(np.array([0.6, 0.8])) == pytest.approx(1.0)
    with pytest.raises(PowerConstraintViolated):
        check_power(np.array([1.0, 1.0]))


def test_snr_point():
    snr = SnrPoint.from_db(60)
    assert snr.rho == pytest.approx(1e6)
    assert snr.log2_rho == pytest.approx(19.9316, abs=1e-4)
    assert snr.amplitude(0.5) ** 2 == pytest.approx(1e3)
    with pytest.raises(ValueError):
        SnrPoint(0.5)


def test_near_singular_flag():
    ch = sample_realization(trial_stream(10, 0, 0))
    assert not ch.near_singular(threshold=0.0)
    assert ch.near_singular(threshold=np.inf)
