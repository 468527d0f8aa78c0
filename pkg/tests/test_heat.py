import warnings

import numpy as np
import pytest
from scipy.special import ive, logsumexp

from heatldp.heat import (
    ResolutionWarning,
    apply_heat,
    assemble_generator,
    bakry_emery_defect,
    circle_kernel_oracle,
    heat_kernel_matrix,
    heat_operator,
    resolution_floor,
    spectral_decomposition,
    spectral_kernel,
    validate_kernel,
)
from heatldp.mmspace import SpaceError, build_space


def two_nodes():
    return build_space("graph", edges=[(0, 1, 1.0)], weights=[1, 1], k_lower=0.0)


def graph():
    edges = [(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (3, 0, 1.5), (1, 3, 1.2), (3, 4, 0.7)]
    return build_space("graph", edges=edges, weights=[1.0, 0.5, 2.0, 1.0, 0.3], k_lower=-1.0)


SPACES = [
    ("interval", lambda: build_space("interval", n=50, length=1.0), "fd"),
    ("circle", lambda: build_space("circle", n=48), "fd"),
    ("circle-spectral", lambda: build_space("circle", n=48), "spectral"),
    ("graph", graph, "fd"),
]


def test_two_node_generator_and_spectrum():
    gen = assemble_generator(two_nodes())
    assert np.allclose(gen.action, [[-1, 1], [1, -1]])
    op = spectral_decomposition(gen)
    assert np.allclose(op.eigenvalues, [0, 2])


def test_two_node_kernel_closed_form():
    op = heat_operator(two_nodes())
    for t in (1e-3, 0.3, 2.0, 15.0):
        p = heat_kernel_matrix(op, t).entries
        assert p[0, 0] == pytest.approx((1 + np.exp(-2 * t)) / 2, rel=1e-13)
        assert p[0, 1] == pytest.approx((1 - np.exp(-2 * t)) / 2, rel=1e-12)
        assert apply_heat(op, t, [0.0, 1.0])[0] == pytest.approx((1 - np.exp(-2 * t)) / 2, rel=1e-12)


@pytest.mark.parametrize("name, make, stencil", SPACES)
def test_generator_kills_constants(name, make, stencil):
    gen = assemble_generator(make(), stencil)
    assert np.abs(gen(np.full(gen.space.n, 2.5))).max() < 1e-9


def test_quadratic_second_difference():
    s = build_space("interval", n=31, length=2.0)
    lf = assemble_generator(s)(s.coords**2)
    assert np.allclose(lf[1:-1], 2.0, atol=1e-9)


def test_measure_symmetry():
    s = graph()
    gen = assemble_generator(s)
    sym = gen.action * s.weight[:, None]
    assert np.allclose(sym, sym.T)


def test_circle_first_eigenvalue():
    s = build_space("circle", n=256, circumference=2 * np.pi)
    fd = heat_operator(s)
    assert abs(fd.eigenvalues[1] - 1) < 1e-3
    h = s.mesh
    k = np.arange(1, 6)
    assert np.allclose(fd.eigenvalues[1:11:2], 2 * (1 - np.cos(2 * np.pi * k / 256)) / h**2)
    sp = heat_operator(s, "spectral")
    assert np.allclose(sp.eigenvalues[1:11], np.repeat(np.arange(1, 6), 2) ** 2)


def test_interval_spectrum_nonnegative():
    op = heat_operator(build_space("interval", n=60))
    assert op.eigenvalues[0] == 0
    assert np.all(op.eigenvalues >= -1e-10)
    assert op.residual <= 1e-8


def test_spectral_stencil_circle_only():
    with pytest.raises(SpaceError):
        assemble_generator(build_space("interval", n=8), "spectral")
    with pytest.raises(SpaceError):
        assemble_generator(build_space("interval", n=8), "fem")


@pytest.mark.parametrize("name, make, stencil", SPACES)
def test_kernel_validity(name, make, stencil):
    op = heat_operator(make(), stencil)
    for t in (0.05, 0.2, 1.0):
        rep = validate_kernel(heat_kernel_matrix(op, t), op, s=0.1)
        assert rep.mass_error <= 1e-10
        assert rep.asymmetry <= 1e-10
        assert rep.ck_defect <= 1e-8
        assert rep.min_entry >= 0
        assert rep.passed()


def test_log_kernel_against_bessel_random_walk():
    # The FD circle generator is the continuous-time random walk with rate 1/h**2
    # per direction: p_t(i, j) = sum_k exp(-2s) I_{|j - i + k n|}(2s) / h, s = t / h**2.
    n = 32
    s = build_space("circle", n=n, circumference=2 * np.pi)
    op = heat_operator(s)
    h = s.mesh
    for t in (1e-3, 4e-3, 0.05, 0.5):
        x = 2 * t / h**2
        m = np.arange(n)
        wraps = np.arange(-6, 7)[:, None]
        with np.errstate(divide="ignore"):
            logs = np.log(ive(np.abs(m[None, :] + wraps * n), x))
        exact = logsumexp(logs, axis=0) - np.log(h)
        ours = op.log_kernel(t)[0]
        ok = np.isfinite(exact)
        assert ok.sum() > n // 2
        assert np.allclose(ours[ok], exact[ok], rtol=1e-12, atol=1e-10)


def test_interval_log_kernel_far_tails():
    # The reflecting interval is the circle of 2(n-1) nodes folded in half:
    # p_I(0, j) = 2 p_C(0, j) with the Bessel random-walk kernel p_C.
    n = 200
    s = build_space("interval", n=n)
    op = heat_operator(s)
    h = s.mesh
    N = 2 * (n - 1)
    for t in (5e-4, 2e-3):
        x = 2 * t / h**2
        m = np.arange(n)
        wraps = np.arange(-3, 4)[:, None]
        with np.errstate(divide="ignore"):
            logs = np.log(ive(np.abs(m[None, :] + wraps * N), x))
        exact = np.log(2) + logsumexp(logs, axis=0) - np.log(h)
        ours = op.log_kernel(t)[0]
        assert np.all(np.isfinite(ours))
        assert np.all(np.isfinite(exact))
        # the far end is over a hundred nats below the diagonal
        assert ours[-1] < ours[0] - 100
        assert np.allclose(ours, exact, rtol=1e-12, atol=1e-10)


def test_kernel_matches_eigen_sum_in_bulk():
    op = heat_operator(build_space("interval", n=80))
    for t in (0.01, 0.1):
        p = heat_kernel_matrix(op, t).entries
        q = spectral_kernel(op, t)
        big = q > 1e-8 * q.max()
        assert np.allclose(p[big], q[big], rtol=1e-9)


def test_apply_heat_examples():
    s = graph()
    op = heat_operator(s)
    assert np.allclose(apply_heat(op, 0.7, np.full(s.n, 3.0)), 3.0)
    f = np.arange(s.n, dtype=float)
    mean = f @ s.weight / s.total_mass
    assert np.allclose(apply_heat(op, 1e3 / op.gap, f), mean)
    assert np.array_equal(apply_heat(op, 0, f), f)
    with pytest.raises(ValueError):
        apply_heat(op, -1, f)


@pytest.mark.parametrize("name, make, stencil", SPACES)
def test_maximum_principle(name, make, stencil):
    op = heat_operator(make(), stencil)
    rng = np.random.default_rng(7)
    for _ in range(5):
        f = rng.standard_normal(op.space.n)
        for t in (0.01, 0.3, 3.0):
            g = op.kernel(t).entries @ (op.space.weight * f)
            assert g.min() >= f.min() - 1e-10
            assert g.max() <= f.max() + 1e-10


def test_oracle_examples():
    C = 2 * np.pi
    assert circle_kernel_oracle(C, 10 * C**2, 0.3, 2.0) == pytest.approx(1 / C, abs=1e-6)
    t = 1e-4
    assert circle_kernel_oracle(C, t, 1.0, 1.0) == pytest.approx((4 * np.pi * t) ** -0.5, rel=1e-12)
    assert circle_kernel_oracle(C, 0.3, 0.5, 2.0) == circle_kernel_oracle(C, 0.3, 2.0, 0.5)
    with pytest.warns(ResolutionWarning):
        circle_kernel_oracle(C, 50.0, 0.0, 1.0, terms=1)
    with pytest.raises(ValueError):
        circle_kernel_oracle(C, 0.0, 0.0, 1.0)


def test_spectral_circle_matches_oracle():
    s = build_space("circle", n=256, circumference=2 * np.pi)
    op = heat_operator(s, "spectral")
    ours = np.diag(spectral_kernel(op, 0.1))
    oracle = circle_kernel_oracle(2 * np.pi, 0.1, s.coords, s.coords)
    assert np.max(np.abs(ours - oracle) / oracle) <= 1e-6
    # image-sum kernel matrix of the same operator, full rows
    full = circle_kernel_oracle(2 * np.pi, 0.1, s.coords[:, None], s.coords[None, :])
    assert np.allclose(op.kernel(0.1).entries, full, rtol=1e-12)


def test_kernel_rejects_nonpositive_time():
    op = heat_operator(two_nodes())
    with pytest.raises(ValueError):
        heat_kernel_matrix(op, 0.0)


def test_kernel_cache_returns_same_object():
    op = heat_operator(build_space("interval", n=20))
    assert op.kernel(0.1) is op.kernel(0.1)
    assert not op.kernel(0.1).entries.flags.writeable


def test_resolution_floor():
    s = build_space("interval", n=11)
    assert resolution_floor(s) == pytest.approx(0.01**2)


def test_bakry_emery_diagnostic_small():
    for n in (64, 128):
        s = build_space("circle", n=n)
        op = heat_operator(s)
        assert bakry_emery_defect(op, np.sin(s.coords), 0.1) <= 2 * s.mesh
        s = build_space("interval", n=n)
        op = heat_operator(s)
        assert bakry_emery_defect(op, np.cos(3 * s.coords), 0.01) <= 2 * s.mesh


def test_eigensolver_cap():
    with pytest.raises(ValueError):
        heat_operator(build_space("interval", n=40), cap=20)


def test_no_warnings_for_regular_use():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        op = heat_operator(build_space("circle", n=32))
        heat_kernel_matrix(op, 0.5)
