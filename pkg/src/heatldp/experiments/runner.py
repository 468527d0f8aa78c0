"""Run one configured experiment and collect its tables and assertions."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from heatldp.brownian import Partition, PartitionPath, SlowedBM, kinetic_rate, sample_paths, tube_ldp_check
from heatldp.experiments.config import PHI_CATALOGUE, ConfigError, ExperimentConfig
from heatldp.heat import (
    ResolutionError,
    ResolutionWarning,
    circle_kernel_oracle,
    heat_kernel_matrix,
    heat_operator,
    resolution_floor,
    spectral_kernel,
    validate_kernel,
)
from heatldp.hj import contraction_check, convergence_sweep
from heatldp.ldp import (
    check_window,
    gamma_dirac_check,
    ldp_set_bounds,
    resolution_window,
    varadhan_lemma_check,
    varadhan_pointwise,
)
from heatldp.mmspace import SpaceError, build_space, normalize_density
from heatldp.schrodinger import exact_w2, gamma_sweep
from heatldp.transport import w2_squared_1d

SCHEMA = "heatldp.result/1"
log = logging.getLogger("heatldp")

KERNEL_HEADER = ("i", "j", "t", "p", "log_p")
ORACLE_HEADER = ("t", "x", "y", "spectral", "oracle", "rel_err")
HJ_HEADER = (
    "eps",
    "t",
    "sup_err",
    "mean_err",
    "floor",
    "lip_evolved",
    "lip_bound",
    "lapneg_evolved",
    "lapneg_bound",
    "pass",
)
FIT_HEADER = ("t", "value", "fitted_limit", "target", "rel_err", "window_lo", "window_hi")
TUBE_HEADER = ("t", "log_prob", "t_log_prob", "ell", "window_lo", "window_hi", "in_window")
SCHRODINGER_HEADER = ("eps", "cost", "eps_cost", "half_w2sq", "gap", "iters", "marginal_defect")


@dataclass(frozen=True)
class Assertion:
    name: str
    invariant: str
    measured: float
    relation: str
    tolerance: float
    passed: bool


@dataclass
class Table:
    name: str
    header: tuple
    rows: list


@dataclass
class ResultBundle:
    experiment: str
    config: dict
    window_check: dict
    tables: list = field(default_factory=list)
    assertions: list = field(default_factory=list)
    schema: str = SCHEMA

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def check(self, name, invariant, measured, relation, tolerance):
        measured, tolerance = float(measured), float(tolerance)
        if relation == "<=":
            ok = measured <= tolerance
        elif relation == ">=":
            ok = measured >= tolerance
        elif relation == "==":
            ok = measured == tolerance
        else:
            raise ValueError(relation)
        self.assertions.append(Assertion(name, invariant, measured, relation, tolerance, bool(ok)))

    def summary(self) -> dict:
        return {
            "schema": self.schema,
            "experiment": self.experiment,
            "config": self.config,
            "window_check": self.window_check,
            "passed": self.passed,
            "assertions": [
                {
                    "name": a.name,
                    "invariant": a.invariant,
                    "measured": a.measured,
                    "relation": a.relation,
                    "tolerance": a.tolerance,
                    "passed": a.passed,
                }
                for a in self.assertions
            ],
            "tables": [t.name for t in self.tables],
        }


# -- inputs ---------------------------------------------------------------


def _space(cfg: ExperimentConfig):
    params = {k: v for k, v in cfg.space.items() if k != "kind"}
    try:
        space = build_space(cfg.space["kind"], **params)
    except SpaceError as exc:
        raise ConfigError("space", str(exc)) from None
    return space


def _point(space, value, name) -> int:
    if space.coords is not None:
        return space.nearest(value)
    if value != int(value) or not 0 <= value < space.n:
        raise ConfigError(name, f"{value!r} is not a node index")
    return int(value)


def _dist_from(space, value, name):
    """Distance field to coordinate ``value`` (node index on graphs), plus a
    callable of coordinates when one exists."""
    if space.kind == "interval":
        return np.abs(space.coords - value), lambda c: np.abs(c - value)
    if space.kind == "circle":
        C = space.extent

        def arc(c):
            d = np.abs(c - value) % C
            return np.minimum(d, C - d)

        return arc(space.coords), arc
    return space.dist[_point(space, value, name)].copy(), None


def _phi(space, params):
    """Catalogue field and, when available, its formula in the coordinates."""
    name = params.get("phi", "sin")
    scale = params.get("phi_scale", 1.0)
    if name not in PHI_CATALOGUE:
        raise ConfigError("params.phi", f"unknown selector {name!r}; choose from {PHI_CATALOGUE}")
    if name == "custom-table":
        table = params.get("phi_table")
        if table is None:
            raise ConfigError("params.phi_table", "missing (required by custom-table)")
        if len(table) != space.n:
            raise ConfigError("params.phi_table", f"has {len(table)} values, space has {space.n} points")
        return scale * np.asarray(table, dtype=float), None
    if name == "sin":
        if space.coords is None:
            raise ConfigError("params.phi", "sin needs a coordinate grid")
        period = space.extent

        def fn(c):
            return scale * np.sin(2 * np.pi * c / period)

        return fn(space.coords), fn
    if name == "coordinate":
        base, fn = _dist_from(space, 0.0, "params.phi")
        return scale * base, (None if fn is None else (lambda c: scale * fn(c)))
    center = params.get("phi_center")
    if center is None:
        center = 0.5 * space.extent if space.coords is not None else 0
    base, fn = _dist_from(space, center, "params.phi_center")
    return scale * base**2, (None if fn is None else (lambda c: scale * fn(c) ** 2))


def _density(space, params, which):
    table = params.get(f"{which}_table")
    kind = params[which]
    if kind == "table" or table is not None:
        if table is None:
            raise ConfigError(f"params.{which}_table", "missing")
        if len(table) != space.n:
            raise ConfigError(f"params.{which}_table", f"has {len(table)} values, space has {space.n} points")
        values = np.asarray(table, dtype=float)
    elif kind == "bump":
        d, _ = _dist_from(space, params[f"{which}_center"], f"params.{which}_center")
        values = np.exp(-(d**2) / (2 * params["width"] ** 2)) + params["floor"]
    else:
        raise ConfigError(f"params.{which}", f"must be bump or table, got {kind!r}")
    try:
        return normalize_density(space, values)
    except SpaceError as exc:
        raise ConfigError(f"params.{which}", str(exc)) from None


def _positive(values, name):
    for v in values:
        if not v > 0:
            raise ConfigError(name, f"must be positive, got {v!r}")


def _ldp_times(space, params, scale=1.0):
    t = params["t"]
    _positive(t, "params.t")
    if len(set(t)) < 3:
        raise ConfigError("params.t", "need at least three distinct times to fit a limit")
    try:
        check_window(space, t, scale=scale)
    except ResolutionError as exc:
        raise ConfigError("params.t", str(exc)) from None
    lo, hi = resolution_window(space)
    return {"quantity": "kernel time", "lo": lo, "hi": hi, "values": [s * scale for s in t], "ok": True, "skipped": []}


def _floor_check(space, values, name):
    floor = resolution_floor(space)
    bad = [v for v in values if v < floor]
    if bad:
        raise ConfigError(name, f"kernel times {bad} fall below the grid resolution {floor:.3g}")
    return {"quantity": "kernel time", "lo": floor, "hi": float("inf"), "values": list(values), "ok": True, "skipped": []}


def _fit_rows(fit):
    return [list(r) for r in fit.rows()]


# -- experiments ------------------------------------------------------------


def _kernel_validate(cfg, space, op, bundle):
    p = cfg.params
    kernel_rows, oracle_rows = [], []
    idx = np.arange(space.n)
    ii, jj = np.meshgrid(idx, idx, indexing="ij")
    for t in p["t"]:
        km = heat_kernel_matrix(op, t)
        rep = validate_kernel(km, op, s=p["s"])
        tag = f"t={t:g}"
        bundle.check(f"mass[{tag}]", "row mass defect max|sum_j p w - 1|", rep.mass_error, "<=", p["mass_tol"])
        bundle.check(f"symmetry[{tag}]", "asymmetry max|p - p^T|", rep.asymmetry, "<=", p["sym_tol"])
        bundle.check(
            f"chapman_kolmogorov[{tag},s={p['s']:g}]",
            "max|p_s w p_t - p_(s+t)|",
            rep.ck_defect,
            "<=",
            p["ck_tol"],
        )
        bundle.check(f"positivity[{tag}]", "min entry", rep.min_entry, ">=", 0.0)
        if p["export_kernel"]:
            kernel_rows.extend(
                zip(ii.ravel().tolist(), jj.ravel().tolist(), [t] * space.n**2, km.entries.ravel().tolist(), km.log_entries.ravel().tolist())
            )
        if space.kind == "circle":
            c = space.coords
            oracle = circle_kernel_oracle(space.extent, t, c, c)
            # Eigen-sum route, independent of the image sum used by the oracle.
            ours = np.diag(spectral_kernel(op, t))
            rel = np.abs(ours - oracle) / oracle
            oracle_rows.extend(zip([t] * space.n, c.tolist(), c.tolist(), ours.tolist(), oracle.tolist(), rel.tolist()))
            bundle.check(f"oracle[{tag}]", "max rel err p_t(x,x) vs theta series", rel.max(), "<=", p["oracle_rtol"])
    if p["export_kernel"]:
        bundle.tables.append(Table("kernel", KERNEL_HEADER, [list(r) for r in kernel_rows]))
    if oracle_rows:
        bundle.tables.append(Table("oracle", ORACLE_HEADER, [list(r) for r in oracle_rows]))


def _hj_row(op, values, t, eps, sweep_row, floor, rtol=1e-6, mesh_coef=0.0):
    rep = contraction_check(op, values, t, eps, rtol=rtol, mesh_coef=mesh_coef)
    row = [eps, t, sweep_row.sup_err, sweep_row.mean_err, floor, rep.lip_evolved, rep.bound_lip]
    row += [rep.lap_neg_evolved, rep.bound_lap, rep.passed]
    return row, rep


def _hj_sweep(cfg, space, op, bundle):
    p = cfg.params
    values, fn = _phi(space, p)
    table = convergence_sweep(op, fn if fn is not None else values, p["t"], p["eps"])
    rows = [_hj_row(op, values, p["t"], r.eps, r, table.floor)[0] for r in table.rows]
    bundle.tables.append(Table("hj_sweep", HJ_HEADER, rows))
    errs = table.errors()
    worst = 0.0
    for a, b in zip(errs, errs[1:]):
        # Once the error is at rounding level the ordering carries no information.
        if not (b < a or b <= p["abs_tol"]):
            worst = max(worst, b - a)
    bundle.check("decreasing", "sup error strictly decreasing in eps (largest increase)", worst, "<=", 0.0)
    osc = float(values.max() - values.min())
    floor = 0.0 if np.isnan(table.floor) else table.floor
    bound = max(p["floor_factor"] * floor, p["osc_fraction"] * osc, p["abs_tol"])
    bundle.check(
        f"final_error[eps={p['eps'][-1]:g}]",
        "sup error <= max(floor_factor*floor, osc_fraction*osc(phi), abs_tol)",
        errs[-1],
        "<=",
        bound,
    )


def _contraction(cfg, space, op, bundle):
    p = cfg.params
    values, fn = _phi(space, p)
    eps_sorted = sorted(set(p["eps"]), reverse=True)
    rows = []
    for t in p["t"]:
        table = convergence_sweep(op, fn if fn is not None else values, t, eps_sorted)
        for r in table.rows:
            row, rep = _hj_row(op, values, t, r.eps, r, table.floor, p["rtol"], p["mesh_coef"])
            rows.append(row)
            tag = f"t={t:g},eps={r.eps:g}"
            bundle.check(f"lip[{tag}]", "Lip(phi_t) <= exp(-K eps t/2) Lip(phi) (1 + tol)", rep.lip_evolved, "<=", rep.lip_limit)
            bundle.check(
                f"laplacian[{tag}]",
                "sup (L phi_t)^- <= sup (L phi)^- + K^- t exp(K^- eps t) Lip(phi)^2 + tol sup|L phi|",
                rep.lap_neg_evolved,
                "<=",
                rep.lap_limit,
            )
            bundle.check(f"sup[{tag}]", "sup|phi_t| <= sup|phi| + 1e-10", rep.sup_evolved, "<=", rep.sup_initial + 1e-10)
    bundle.tables.append(Table("contraction", HJ_HEADER, rows))


def _limit_check(bundle, name, invariant, fit, rtol, atol):
    if fit.target == 0:
        bundle.check(name, f"|fitted limit - target| ({invariant})", abs(fit.fitted_limit), "<=", atol)
    else:
        bundle.check(name, f"relative error of fitted limit ({invariant})", fit.rel_err, "<=", rtol)


def _varadhan(cfg, space, op, bundle):
    p = cfg.params
    x, y = _point(space, p["x"], "params.x"), _point(space, p["y"], "params.y")
    fit = varadhan_pointwise(op, x, y, p["t"])
    bundle.tables.append(Table("varadhan", FIT_HEADER, _fit_rows(fit)))
    _limit_check(bundle, "varadhan", "t log p_t(x,y) -> -d^2/4", fit, p["rtol"], 0.0)


def _set_ldp(cfg, space, op, bundle):
    p = cfg.params
    if p["set_kind"] not in ("open", "closed"):
        raise ConfigError("params.set_kind", "must be open or closed")
    x = _point(space, p["x"], "params.x")
    for k, (lo, hi) in enumerate(p["sets"]):
        if space.coords is not None:
            tol = 1e-9 * space.mesh
            A = np.flatnonzero((space.coords >= lo - tol) & (space.coords <= hi + tol))
        else:
            A = np.arange(int(np.ceil(lo)), int(np.floor(hi)) + 1)
            A = A[(A >= 0) & (A < space.n)]
        if A.size == 0:
            raise ConfigError("params.sets", f"range {lo}:{hi} contains no points")
        fit = ldp_set_bounds(op, x, A, p["t"], A_is=p["set_kind"])
        bundle.tables.append(Table(f"set_ldp_{k}", FIT_HEADER, _fit_rows(fit)))
        _limit_check(bundle, f"set_ldp[{lo:g}:{hi:g}]", "t log mu_t(A) -> -inf_A I", fit, p["rtol"], p["atol"])


def _varadhan_lemma(cfg, space, op, bundle):
    p = cfg.params
    values, _ = _phi(space, p)
    x = _point(space, p["x"], "params.x")
    fit = varadhan_lemma_check(op, x, values, p["t"])
    bundle.tables.append(Table("varadhan_lemma", FIT_HEADER, _fit_rows(fit)))
    if values.max() == values.min():
        bundle.check(
            "varadhan_lemma",
            "|fitted limit - max(phi - I)| for constant phi",
            abs(fit.fitted_limit - fit.target),
            "<=",
            p["atol"],
        )
    else:
        _limit_check(bundle, "varadhan_lemma", "t log E exp(phi/t) -> max(phi - I)", fit, p["rtol"], p["atol"])


def _gamma_dirac(cfg, space, op, bundle):
    p = cfg.params
    x, z = _point(space, p["x"], "params.x"), _point(space, p["z"], "params.z")
    fit = gamma_dirac_check(op, x, z, p["t"])
    bundle.tables.append(Table("gamma_dirac", FIT_HEADER, _fit_rows(fit)))
    _limit_check(bundle, "gamma_dirac", "-t log mu_t(B_r(z)) -> I(z)", fit, p["rtol"], 0.0)
    rows, worst = [], 0.0
    value_at = dict(zip(fit.t_grid.tolist(), fit.values.tolist()))
    # extras follow the input order of the times, the fit is sorted
    for t, r, h in zip(p["t"], fit.extras["radii"], fit.extras["entropy"]):
        nlm = value_at[t] / t
        rows.append([t, r, h, nlm])
        worst = max(worst, abs(h - nlm))
    bundle.tables.append(Table("gamma_dirac_entropy", ("t", "radius", "entropy", "neg_log_mass"), rows))
    bundle.check("entropy_identity", "max |H(nu_B|nu) + log nu(B)|", worst, "<=", p["entropy_tol"])


def _tube_ldp(cfg, space, op, bundle):
    p = cfg.params
    start = _point(space, p["x"], "params.x")
    pts = [_point(space, v, "params.path") for v in p["path"]]
    if pts[0] != start:
        raise ConfigError("params.path", "the reference path must start at x")
    if len(pts) < 2:
        raise ConfigError("params.path", "need at least two points")
    ref = PartitionPath(Partition.uniform(len(pts) - 1), np.array(pts))
    r = p["r_mesh"] * space.mesh
    try:
        fit = tube_ldp_check(op, start, ref, r, p["t"], slack=p["slack"])
    except SpaceError as exc:
        raise ConfigError("params.path", str(exc)) from None
    lo, hi = fit.window
    rows = []
    for t, lp in sorted(zip(p["t"], fit.extras["log_prob"])):
        rows.append([t, lp, t * lp, fit.extras["ell"], lo, hi, bool(lo <= t * lp <= hi)])
    bundle.tables.append(Table("tube", TUBE_HEADER, rows))
    bundle.check("tube_lower", "fitted limit >= -ell - slack*ell", fit.fitted_limit, ">=", lo)
    bundle.check("tube_upper", "fitted limit <= -ell + C r + slack*ell", fit.fitted_limit, "<=", hi)
    n = p["n_samples"]
    if n > 0:
        t_max = max(p["t"])
        bm = SlowedBM(op, start, t_max)
        paths = sample_paths(bm, ref.partition, n, cfg.seed)
        inside = np.all(space.dist[paths, ref.points[None, :]] <= r * (1 + 1e-9), axis=1)
        prob = float(np.exp(rows[-1][1]))
        rows_s = []
        for k, path in enumerate(paths):
            rate = kinetic_rate(space, PartitionPath(ref.partition, path), start)
            rows_s.append([k, *path.tolist(), bool(inside[k]), rate])
        header = ("index", *(f"node_{k}" for k in range(len(pts))), "in_tube", "kinetic_rate")
        bundle.tables.append(Table("tube_samples", header, rows_s))
        freq = float(inside.mean())
        bundle.check(
            f"tube_sampling[t={t_max:g},n={n}]",
            "|empirical tube frequency - exact probability| <= 5 sd + 1/n",
            abs(freq - prob),
            "<=",
            5 * np.sqrt(prob * (1 - prob) / n) + 1 / n,
        )


def _schrodinger_sweep(cfg, space, op, bundle):
    p = cfg.params
    mu0, mu1 = _density(space, p, "mu0"), _density(space, p, "mu1")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        rows = gamma_sweep(op, mu0, mu1, p["eps"], tol=p["tol"], max_iter=p["max_iter"])
    table = [[r.eps, r.cost, r.eps_cost, r.half_w2sq, r.gap, r.iters, r.marginal_defect] for r in rows]
    bundle.tables.append(Table("schrodinger_sweep", SCHRODINGER_HEADER, table))
    done = [r for r in rows if not r.skipped]
    if not done:
        bundle.check("computed", "at least one eps inside the resolution window", 0, ">=", 1)
        return
    worst = max([b.gap - a.gap for a, b in zip(done, done[1:]) if not b.gap < a.gap] + [0.0])
    bundle.check("gap_decreasing", "|eps C_eps - W2^2/2| strictly decreasing (largest increase)", worst, "<=", 0.0)
    last = done[-1]
    bundle.check(
        f"final_gap[eps={last.eps:g}]",
        "|eps C_eps - W2^2/2| <= gap_rtol * W2^2/2",
        last.gap,
        "<=",
        p["gap_rtol"] * last.half_w2sq,
    )
    bundle.check("marginal_defect", "max Sinkhorn marginal defect", max(r.marginal_defect for r in done), "<=", p["defect_tol"])
    if space.kind == "interval":
        w = space.weight
        simplex = exact_w2(space, mu0, mu1, crosscheck=False)
        quantile = w2_squared_1d(space.coords, mu0 * w, space.coords, mu1 * w)
        bundle.check("w2_crosscheck", "|W2^2 simplex - W2^2 quantile|", abs(simplex - quantile), "<=", p["w2_tol"])


RUNNERS = {
    "kernel_validate": _kernel_validate,
    "hj_sweep": _hj_sweep,
    "contraction": _contraction,
    "varadhan": _varadhan,
    "set_ldp": _set_ldp,
    "varadhan_lemma": _varadhan_lemma,
    "gamma_dirac": _gamma_dirac,
    "tube_ldp": _tube_ldp,
    "schrodinger_sweep": _schrodinger_sweep,
}


def _window_check(cfg, space) -> dict:
    """Validate every kernel time the experiment will request."""
    p = cfg.params
    name = cfg.experiment
    if name == "kernel_validate":
        _positive(p["t"], "params.t")
        _positive([p["s"]], "params.s")
        return _floor_check(space, p["t"] + [p["s"]], "params.t")
    if name in ("hj_sweep", "contraction"):
        ts = p["t"] if isinstance(p["t"], list) else [p["t"]]
        _positive(ts, "params.t")
        _positive(p["eps"], "params.eps")
        if name == "hj_sweep" and any(b >= a for a, b in zip(p["eps"], p["eps"][1:])):
            raise ConfigError("params.eps", "must be strictly decreasing")
        return _floor_check(space, [e * t / 2 for t in ts for e in p["eps"]], "params.eps")
    if name in ("varadhan", "set_ldp", "varadhan_lemma", "gamma_dirac"):
        return _ldp_times(space, p)
    if name == "tube_ldp":
        if len(p["path"]) < 2:
            raise ConfigError("params.path", "need at least two points")
        return _ldp_times(space, p, scale=1.0 / (len(p["path"]) - 1))
    # Schrödinger: out-of-window eps values become skipped rows.
    _positive(p["eps"], "params.eps")
    lo, hi = resolution_window(space)
    kt = [e / 2 for e in p["eps"]]
    skipped = [e for e, s in zip(p["eps"], kt) if not lo * (1 - 1e-12) <= s <= hi * (1 + 1e-12)]
    return {"quantity": "kernel time", "lo": lo, "hi": hi, "values": kt, "ok": not skipped, "skipped": skipped}


def run_experiment(cfg: ExperimentConfig) -> ResultBundle:
    """Validate ``cfg``, run the experiment and return its bundle.

    Raises :class:`ConfigError` for invalid inputs before any kernel is
    computed; solver failures propagate unchanged.
    """
    space = _space(cfg)
    window = _window_check(cfg, space)
    log.info(
        "%s: %s window [%.6g, %.6g], %d values checked, skipped %s",
        cfg.experiment,
        window["quantity"],
        window["lo"],
        window["hi"],
        len(window["values"]),
        window["skipped"],
    )
    op = heat_operator(space, stencil=cfg.stencil)
    bundle = ResultBundle(cfg.experiment, cfg.echo(), window)
    RUNNERS[cfg.experiment](cfg, space, op, bundle)
    return bundle
