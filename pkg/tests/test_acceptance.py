"""Acceptance criteria, each checked at its stated tolerance.

A summary with one PASS/FAIL line per criterion is printed at the end of the
run (see ``conftest.py``). Criteria are numbered 1 to 10.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from oracles import brute_tube, permutation_search, vertex_enumeration
from scipy.special import logsumexp

from heatldp.brownian import Partition, PartitionPath, SlowedBM, kinetic_rate, tube_ldp_check, tube_log_probability
from heatldp.experiments.cli import main
from heatldp.heat import circle_kernel_oracle, heat_kernel_matrix, heat_operator, spectral_kernel, validate_kernel
from heatldp.hj import convergence_sweep, viscous_semigroup
from heatldp.ldp import gamma_dirac_check, ldp_set_bounds, varadhan_lemma_check, varadhan_pointwise
from heatldp.mmspace import build_space, lipschitz_constant, normalize_density
from heatldp.schrodinger import exact_w2, gamma_sweep
from heatldp.transport import transport_simplex, w2_squared_1d

CONFIGS = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.ini"))
LDP_TIMES = np.geomspace(2e-3, 2e-2, 8)


@pytest.fixture(scope="module")
def interval400():
    start = time.perf_counter()
    op = heat_operator(build_space("interval", n=400, length=1.0))
    return op, time.perf_counter() - start


# -- 1 ----------------------------------------------------------------------


@pytest.mark.criterion(1, "kernel validity, circle n=256")
def test_kernel_validity(detail):
    start = time.perf_counter()
    space = build_space("circle", n=256, circumference=2 * np.pi)
    op = heat_operator(space, "spectral")
    worst = {"mass": 0.0, "asym": 0.0, "oracle": 0.0}
    for t in (1e-3, 1e-2, 1e-1, 1.0):
        rep = validate_kernel(heat_kernel_matrix(op, t), op, s=0.1)
        worst["mass"] = max(worst["mass"], rep.mass_error)
        worst["asym"] = max(worst["asym"], rep.asymmetry)
        assert rep.min_entry >= 0
        eigen = np.diag(spectral_kernel(op, t))
        theta = circle_kernel_oracle(2 * np.pi, t, space.coords, space.coords)
        worst["oracle"] = max(worst["oracle"], float(np.max(np.abs(eigen - theta) / theta)))
    ck = validate_kernel(heat_kernel_matrix(op, 0.2), op, s=0.1).ck_defect
    elapsed = time.perf_counter() - start
    detail(f"mass {worst['mass']:.2e}, asym {worst['asym']:.2e}, CK {ck:.2e}, oracle rel {worst['oracle']:.2e}, {elapsed:.1f}s")
    assert worst["mass"] <= 1e-10
    assert worst["asym"] <= 1e-10
    assert ck <= 1e-8
    assert worst["oracle"] <= 1e-6
    assert elapsed < 10


# -- 2 ----------------------------------------------------------------------


@pytest.mark.criterion(2, "vanishing viscosity, circle n=256, phi = sin")
def test_vanishing_viscosity(detail):
    start = time.perf_counter()
    op = heat_operator(build_space("circle", n=256, circumference=2 * np.pi), "spectral")
    table = convergence_sweep(op, np.sin, 1.0, [0.4, 0.2, 0.1, 0.05, 0.025])
    errs = table.errors()
    phi = np.sin(op.space.coords)
    bound = max(2 * table.floor, 0.02 * (phi.max() - phi.min()))
    elapsed = time.perf_counter() - start
    detail(f"errors {', '.join(f'{e:.3g}' for e in errs)}; final bound {bound:.3g}; {elapsed:.1f}s")
    assert np.all(np.diff(errs) < 0)
    assert errs[-1] <= bound
    assert elapsed < 30


# -- 3 ----------------------------------------------------------------------


@pytest.mark.criterion(3, "contraction estimates, flat K = 0")
def test_contraction(detail):
    space = build_space("circle", n=256, circumference=2 * np.pi)
    op = heat_operator(space)
    L = op.generator.action
    phi = np.sin(space.coords)
    lip0 = lipschitz_constant(space, phi)
    lphi = L @ phi
    lap_floor = -np.maximum(-lphi, 0).max() - 1e-6 * np.abs(lphi).max()
    worst_lip, worst_lap, worst_sup = 0.0, np.inf, 0.0
    for t in (0.25, 1.0, 4.0):
        for eps in (0.4, 0.1, 0.025):
            v = viscous_semigroup(op, phi, t, eps).values
            worst_lip = max(worst_lip, lipschitz_constant(space, v) / lip0)
            worst_lap = min(worst_lap, float((L @ v).min()) - lap_floor)
            worst_sup = max(worst_sup, np.abs(v).max() - np.abs(phi).max())
    detail(f"max Lip ratio {worst_lip:.8f}, Laplacian margin {worst_lap:.3g}, sup excess {worst_sup:.2e}")
    assert worst_lip <= 1 + 1e-6
    assert worst_lap >= 0
    assert worst_sup <= 1e-10


# -- 4, 5 -------------------------------------------------------------------


@pytest.mark.criterion(4, "Varadhan pointwise, interval n=400")
def test_varadhan_pointwise(interval400, detail):
    op, build = interval400
    start = time.perf_counter()
    s = op.space
    fit = varadhan_pointwise(op, s.nearest(0.2), s.nearest(0.8), LDP_TIMES)
    elapsed = build + time.perf_counter() - start
    rel = abs(fit.fitted_limit - (-0.09)) / 0.09
    detail(f"fitted {fit.fitted_limit:.5f} vs -0.09, rel {rel:.3g}, {elapsed:.1f}s")
    assert rel <= 0.05
    assert elapsed < 60


@pytest.mark.criterion(5, "set LDP, interval n=400")
def test_set_ldp(interval400, detail):
    op, _ = interval400
    s = op.space
    x = s.nearest(0.2)
    far = np.flatnonzero((s.coords >= 0.7 - 1e-12) & (s.coords <= 1 + 1e-12))
    near = np.flatnonzero((s.coords >= 0.1 - 1e-12) & (s.coords <= 0.3 + 1e-12))
    assert x in near
    f_far = ldp_set_bounds(op, x, far, LDP_TIMES)
    f_near = ldp_set_bounds(op, x, near, LDP_TIMES)
    rel = abs(f_far.fitted_limit - (-0.0625)) / 0.0625
    detail(f"A=[0.7,1]: {f_far.fitted_limit:.5f} (rel {rel:.3g}); A containing x: {f_near.fitted_limit:.2e}")
    assert rel <= 0.10
    assert abs(f_near.fitted_limit) <= 0.005


# -- 6 ----------------------------------------------------------------------


@pytest.mark.criterion(6, "Varadhan lemma, circle, phi = sin")
def test_varadhan_lemma(detail):
    space = build_space("circle", n=256, circumference=2 * np.pi)
    op = heat_operator(space, "spectral")
    t = np.geomspace(0.0061, 0.05, 8)
    x = 0
    phi = np.sin(space.coords)
    target = max(phi[j] - space.dist[x, j] ** 2 / 4 for j in range(space.n))
    fit = varadhan_lemma_check(op, x, phi, t)
    rel = abs(fit.fitted_limit - target) / abs(target)
    const = varadhan_lemma_check(op, x, np.full(space.n, 0.37), t)
    const_err = abs(const.fitted_limit - 0.37)
    detail(f"fitted {fit.fitted_limit:.6f} vs grid max {target:.6f}, rel {rel:.2e}; constant phi error {const_err:.1e}")
    assert rel <= 0.05
    assert const_err <= 1e-12


# -- 7 ----------------------------------------------------------------------


@pytest.mark.criterion(7, "Gamma-limsup at a Dirac, interval n=400")
def test_gamma_dirac(interval400, detail):
    op, _ = interval400
    s = op.space
    x, z = s.nearest(0.2), s.nearest(0.8)
    fit = gamma_dirac_check(op, x, z, LDP_TIMES)
    rel = abs(fit.fitted_limit - 0.09) / 0.09
    worst = 0.0
    for t, r, nu in zip(LDP_TIMES, fit.extras["radii"], fit.extras["conditioned"]):
        mu = np.exp(op.log_kernel(t)[x])
        A = s.ball(z, r)
        log_mass = logsumexp(np.log(mu[A] * s.weight[A]))
        on = nu > 0
        entropy = float(np.sum(nu[on] * s.weight[on] * np.log(nu[on] / mu[on])))
        worst = max(worst, abs(entropy + log_mass))
    detail(f"fitted {fit.fitted_limit:.5f} vs 0.09, rel {rel:.3g}; entropy identity {worst:.1e}")
    assert rel <= 0.10
    assert worst <= 1e-12


# -- 8 ----------------------------------------------------------------------


@pytest.mark.criterion(8, "Brownian tube along a geodesic")
def test_tube(detail):
    op = heat_operator(build_space("interval", n=201, length=1.0))
    s = op.space
    pts = [s.nearest(v) for v in (0.2, 0.35, 0.5, 0.65, 0.8)]
    ref = PartitionPath(Partition.uniform(4), pts)
    r = 4 * s.mesh
    fit = tube_ldp_check(op, pts[0], ref, r, np.geomspace(4e-3, 4e-2, 6))
    ell = kinetic_rate(s, ref)
    hand = sum((s.coords[b] - s.coords[a]) ** 2 / (4 * 0.25) for a, b in zip(pts, pts[1:]))
    lo, hi = fit.window
    C = fit.extras["C"]
    assert ell == pytest.approx(hand, rel=1e-12)
    assert lo == pytest.approx(-1.15 * ell) and hi == pytest.approx(-ell + C * r + 0.15 * ell)
    detail(f"fitted {fit.fitted_limit:.5f} in [{lo:.5f}, {hi:.5f}], ell {ell:.5f}")
    assert lo <= fit.fitted_limit <= hi

    small = heat_operator(build_space("interval", n=12))
    worst = 0.0
    for path in ([1, 3, 6, 9], [2, 2, 5, 10], [0, 4, 4, 11]):
        ref = PartitionPath(Partition.uniform(3), path)
        for radius in (small.space.mesh, 2.5 * small.space.mesh):
            for t_scale in (0.05, 0.4):
                ours = np.exp(tube_log_probability(SlowedBM(small, path[0], t_scale), ref, radius))
                worst = max(worst, abs(ours - brute_tube(small, path[0], ref, radius, t_scale)))
    unit = build_space("interval", n=5)
    unit_rate = kinetic_rate(unit, PartitionPath(Partition.uniform(4), [0, 1, 2, 3, 4]))
    detail(f"brute-force gap {worst:.1e}; unit-speed rate {unit_rate!r}")
    assert worst <= 1e-10
    assert unit_rate == 0.25


# -- 9 ----------------------------------------------------------------------


def _bump(space, center, width=0.2, floor=1e-3):
    return normalize_density(space, np.exp(-((space.coords - center) ** 2) / (2 * width**2)) + floor)


@pytest.mark.criterion(9, "Schrodinger Gamma-convergence, interval n=64")
def test_schrodinger(detail):
    start = time.perf_counter()
    op = heat_operator(build_space("interval", n=64, length=1.0))
    s = op.space
    mu0, mu1 = _bump(s, 0.25), _bump(s, 0.75)
    rows = gamma_sweep(op, mu0, mu1, [0.5, 0.2, 0.1, 0.05])
    gaps = np.array([r.gap for r in rows])
    half = rows[-1].half_w2sq
    defect = max(r.marginal_defect for r in rows)
    simplex = exact_w2(s, mu0, mu1, crosscheck=False)
    quantile = w2_squared_1d(s.coords, mu0 * s.weight, s.coords, mu1 * s.weight)
    elapsed = time.perf_counter() - start
    detail(
        f"gaps {', '.join(f'{g:.4g}' for g in gaps)} vs W2^2/2 {half:.5f}; "
        f"simplex-quantile {abs(simplex - quantile):.1e}; defect {defect:.1e}; {elapsed:.1f}s"
    )
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] <= 0.1 * half
    assert abs(simplex - quantile) <= 1e-9
    assert defect <= 1e-9
    assert elapsed < 60


@pytest.mark.criterion(9, "Schrodinger Gamma-convergence, interval n=64")
def test_w2_small_brute_force(detail):
    rng = np.random.default_rng(2024)
    space = build_space("interval", n=6)
    worst = 0.0
    # supports of sizes (k0, k1) inside the six points; full 6 x 6 vertex
    # enumeration would need 36-choose-11 candidate bases
    for k0, k1 in [(2, 6), (6, 2), (3, 3), (3, 4), (4, 4), (3, 5)]:
        for _ in range(4):
            a = np.zeros(6)
            b = np.zeros(6)
            a[rng.choice(6, k0, replace=False)] = rng.random(k0) + 0.05
            b[rng.choice(6, k1, replace=False)] = rng.random(k1) + 0.05
            mu0, mu1 = normalize_density(space, a), normalize_density(space, b)
            I, J = np.flatnonzero(mu0 > 0), np.flatnonzero(mu1 > 0)
            brute = vertex_enumeration(
                mu0[I] * space.weight[I], mu1[J] * space.weight[J], space.dist[np.ix_(I, J)] ** 2
            )
            worst = max(worst, abs(exact_w2(space, mu0, mu1) - brute))
    for _ in range(10):
        x, y = rng.random(6), rng.random(6)
        cost = (x[:, None] - y[None, :]) ** 2
        _, value, _ = transport_simplex(np.full(6, 1 / 6), np.full(6, 1 / 6), cost)
        worst = max(worst, abs(value - permutation_search(cost)))
    detail(f"n<=6 brute force gap {worst:.1e}")
    assert worst <= 1e-9


# -- 10 ---------------------------------------------------------------------


@pytest.mark.criterion(10, "determinism of every shipped configuration")
def test_determinism(tmp_path, detail):
    assert len(CONFIGS) == 9
    for cfg in CONFIGS:
        name = cfg.stem
        outs = []
        for k in range(2):
            out = tmp_path / f"{name}_{k}"
            assert main([name, "--config", str(cfg), "--out", str(out), "-q"]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        assert outs[0].keys() == outs[1].keys()
        for fname in outs[0]:
            assert outs[0][fname] == outs[1][fname], f"{name}/{fname} differs between runs"
    detail(f"{len(CONFIGS)} configurations, two runs each, identical bytes")
