import numpy as np
import pytest

from mmseprox import (
    EnvelopeUnboundedError,
    MultivaluedProxError,
    ScalarFunction,
    envelope_gradient,
    lower_envelope,
    lower_envelope_many,
    prox,
    upper_envelope,
    upper_envelope_many,
)

HALF_LOG_4PI = 1.2655121234846454

QUAD = ScalarFunction(eval=lambda y: 0.5 * np.asarray(y) ** 2)
ABS = ScalarFunction(eval=lambda y: np.abs(y))


def test_lower_envelope_quadratic():
    # min 0.5 y^2 + (y - 2)^2 / 2 = 1 at y = 1
    r = lower_envelope(QUAD, 1.0, 2.0)
    assert r.value == pytest.approx(1.0, abs=1e-10)
    assert r.argopt == pytest.approx(1.0, abs=1e-6)
    assert r.converged


def test_lower_envelope_absolute():
    r = lower_envelope(ABS, 1.0, 0.4)
    assert r.value == pytest.approx(0.08, abs=1e-10)
    assert r.argopt == pytest.approx(0.0, abs=1e-6)
    r = lower_envelope(ABS, 1.0, 3.0)
    assert r.value == pytest.approx(2.5, abs=1e-10)
    assert r.argopt == pytest.approx(2.0, abs=1e-6)
    assert r.converged


def test_upper_envelope_quadratic():
    # sup 0.5 y^2 - (y - 1)^2 at gamma = 1/2: maximum 1 at y = 2
    r = upper_envelope(QUAD, 0.5, 1.0)
    assert r.value == pytest.approx(1.0, abs=1e-10)
    assert r.argopt == pytest.approx(2.0, abs=1e-6)
    assert r.converged


def test_upper_envelope_standard_normal_marginal():
    # f(y) = y^2/4 + log(4 pi)/2 (unit prior plus unit noise);
    # sup f(y) - (y-1)^2/2 = 1/2 + log(4 pi)/2 at y = 2
    f = ScalarFunction(eval=lambda y: 0.25 * np.asarray(y) ** 2 + HALF_LOG_4PI)
    r = upper_envelope(f, 1.0, 1.0)
    assert r.value == pytest.approx(0.5 + HALF_LOG_4PI, abs=1e-10)
    assert r.argopt == pytest.approx(2.0, abs=1e-6)


def test_prox_values():
    assert prox(ABS, 1.0, -0.3) == pytest.approx(0.0, abs=1e-6)  # soft threshold
    assert prox(ABS, 1.0, 3.0) == pytest.approx(2.0, abs=1e-6)
    assert prox(QUAD, 2.0, 3.0) == pytest.approx(1.0, abs=1e-6)  # 3 / (1 + gamma)


def test_envelope_gradient_absolute():
    g = envelope_gradient(ABS, 1.0, 3.0)
    assert g == pytest.approx(1.0, abs=1e-6)  # (x - prox) / gamma = (3 - 2) / 1


def test_envelope_gradient_matches_finite_difference():
    f = ScalarFunction(eval=lambda y: np.log(np.cosh(np.asarray(y))))
    for x in (-2.3, 0.4, 1.8):
        g = envelope_gradient(f, 0.7, x)
        h = 1e-5
        fd = (lower_envelope(f, 0.7, x + h).value - lower_envelope(f, 0.7, x - h).value) / (2 * h)
        assert g == pytest.approx(fd, abs=1e-6)


def test_unbounded_envelopes_raise():
    with pytest.raises(EnvelopeUnboundedError):
        upper_envelope(QUAD, 2.0, 0.0)  # quadratic beats the quadratic penalty
    neg = ScalarFunction(eval=lambda y: -np.asarray(y) ** 2)
    with pytest.raises(EnvelopeUnboundedError):
        lower_envelope(neg, 1.0, 0.0)


def test_double_well_ties_and_multivalued_prox():
    w = ScalarFunction(eval=lambda y: (np.asarray(y) ** 2 - 1.0) ** 2)
    r = lower_envelope(w, 1.0, 0.0)
    root = np.sqrt(3.0) / 2.0
    assert r.value == pytest.approx(7.0 / 16.0, abs=1e-9)
    assert len(r.candidates) == 2
    assert r.argopt == pytest.approx(-root, abs=1e-6)  # deterministic: smaller tie
    assert prox(w, 1.0, 0.0) == pytest.approx(-root, abs=1e-6)
    with pytest.raises(MultivaluedProxError):
        envelope_gradient(w, 1.0, 0.0)
    # off the symmetry point the prox is single-valued again
    assert envelope_gradient(w, 1.0, 0.2) == pytest.approx(
        (lower_envelope(w, 1.0, 0.2001).value - lower_envelope(w, 1.0, 0.1999).value) / 2e-4,
        abs=1e-5,
    )


def test_domain_boundary():
    lin = ScalarFunction(eval=lambda y: np.asarray(y, dtype=float), domain=(-1.0, 1.0))
    r = upper_envelope(lin, 1.0, 0.0)  # y - y^2/2 is increasing on (-1, 1)
    assert r.on_boundary
    assert r.converged
    assert r.argopt == pytest.approx(1.0, abs=1e-6)
    assert r.value == pytest.approx(0.5, abs=1e-8)


def test_validation_errors():
    with pytest.raises(ValueError):
        lower_envelope(QUAD, 0.0, 1.0)
    with pytest.raises(ValueError):
        lower_envelope(QUAD, -1.0, 1.0)
    with pytest.raises(ValueError):
        lower_envelope(QUAD, 1.0, np.inf)
    with pytest.raises(ValueError):
        lower_envelope(QUAD, 1.0, 1.0, grid_points=2)
    with pytest.raises(ValueError):
        ScalarFunction(eval=np.abs, domain=(2.0, -2.0))


def test_vectorized_matches_scalar():
    xs = np.linspace(-4, 4, 17)
    vals, args = lower_envelope_many(np.abs, 1.0, xs)
    for i, x in enumerate(xs):
        r = lower_envelope(ABS, 1.0, float(x))
        assert vals[i] == pytest.approx(r.value, abs=1e-9)
        assert args[i] == pytest.approx(r.argopt, abs=1e-6)
    uvals, uargs = upper_envelope_many(lambda y: 0.25 * np.asarray(y) ** 2, 1.0, xs)
    for i, x in enumerate(xs):
        r = upper_envelope(ScalarFunction(eval=lambda y: 0.25 * np.asarray(y) ** 2), 1.0, float(x))
        assert uvals[i] == pytest.approx(r.value, abs=1e-9)


def test_vectorized_window_expansion():
    # the stationary point sits 30 away from x, beyond the default window
    f = lambda y: 0.5 * (np.asarray(y) - 60.0) ** 2
    vals, args = lower_envelope_many(f, 1.0, np.array([0.0]))
    assert args[0] == pytest.approx(30.0, abs=1e-6)
    assert vals[0] == pytest.approx(900.0, abs=1e-6)


def test_vectorized_unbounded_raises():
    with pytest.raises(EnvelopeUnboundedError):
        lower_envelope_many(lambda y: -np.asarray(y) ** 2, 1.0, np.array([0.0]))


def test_seeds_are_consistent_and_filtered():
    w = ScalarFunction(eval=lambda y: (np.asarray(y) ** 2 - 1.0) ** 2)
    plain = lower_envelope(w, 1.0, 0.4)
    seeded = lower_envelope(w, 1.0, 0.4, seeds=(plain.argopt, np.nan, 50.0))
    assert seeded.value == pytest.approx(plain.value, abs=1e-12)
    assert seeded.argopt == pytest.approx(plain.argopt, abs=1e-9)
    bounded = ScalarFunction(eval=np.abs, domain=(-2.0, 2.0))
    out_of_domain = lower_envelope(bounded, 1.0, 0.4, seeds=(5.0,))
    assert out_of_domain.value == pytest.approx(0.08, abs=1e-10)


def test_sandwich_identity_quadratic():
    xs = np.linspace(-2, 2, 9)
    inner = lambda ys: lower_envelope_many(lambda y: 0.5 * np.asarray(y) ** 2, 1.0, ys)[0]
    outer, _ = upper_envelope_many(inner, 1.0, xs)
    np.testing.assert_allclose(outer, 0.5 * xs**2, atol=1e-9)
