"""Acceptance gate: exactness properties, oracle equivalences, and
desk-scale qualitative ordering reproduction.

Each criterion emits one PASS/FAIL line, echoed in the terminal summary so
the verdicts are visible even under pytest capture. The desk-scale criteria
share one trained model via a module-scoped fixture.
"""

import math
import sys
import time

import numpy as np
import pytest

import conftest

from eci import constraints as con
from eci import metrics, pde
from eci import model as mod
from eci import sampler
from eci.grid import Domain, GridFunction, RegionMask, riemann_sum
from eci.noise import NoiseSpec


def verdict(name: str, ok: bool) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    conftest.VERDICTS.append(line)
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()
    assert ok, name


def unit_square(res: int) -> Domain:
    return Domain(((0.0, 1.0, res), (0.0, 1.0, res)))


class ConstantField:
    def __init__(self, c: float):
        self.c = c

    def __call__(self, u, t):
        return GridFunction.constant(u.domain, self.c)


# --- desk-scale shared fixtures -------------------------------------------

DESK_RES = 32
DESK_TRAIN_SAMPLES = 512
DESK_EVAL_SAMPLES = 128
# Matched-scale prior: the Stokes family has pointwise std ~0.19, so a
# kernel variance of 0.0625 (std 0.25) keeps the flow's source distribution
# at the same scale as the data.
DESK_NOISE = NoiseSpec(kernel_length=0.05, kernel_variance=0.0625)
DESK_ORDERING_STEPS = 15


@pytest.fixture(scope="module")
def desk_domain():
    return unit_square(DESK_RES)


@pytest.fixture(scope="module")
def desk_model(desk_domain):
    """Stokes prior trained at desk scale; shared by the ordering criteria."""
    prange = pde.default_param_range("stokes")
    data = pde.generate_dataset(
        "stokes", DESK_TRAIN_SAMPLES, desk_domain, prange, np.random.default_rng(0)
    )
    cfg = mod.ModelConfig(
        ndim=2, layer_count=2, modes=(8, 8), width=16, projection_width=64,
        time_embed_dim=16, bounds=desk_domain.bounds,
    )
    m = mod.SpectralVectorField.initialize(cfg, np.random.default_rng(1))
    stages = ((2000, 1e-3, 1), (1500, 5e-4, 2), (1500, 2e-4, 3), (1500, 1e-4, 4))
    for iters, lr, seed in stages:
        mod.train(
            m, data, DESK_NOISE,
            mod.TrainConfig(iterations=iters, batch_size=16, seed=seed, learning_rate=lr),
            np.random.default_rng(seed),
        )
    return m


@pytest.fixture(scope="module")
def stokes_ic(desk_domain):
    x = desk_domain.axis_points(0)
    return con.make_ic(desk_domain, 2.0 * np.exp(-5.0 * x) * np.cos(5.0 * x))


def sample_set(model, c, domain, method, m_mix, r, n, seed, steps):
    cfg = sampler.SamplerConfig(
        euler_steps=steps, mixing_iterations=m_mix, resample_interval=r, method=method
    )
    samples, report = sampler.sample_batch(
        method, model, c, domain, DESK_NOISE, cfg, n, np.random.default_rng(seed)
    )
    return metrics.SampleSet(samples), report


# --- criteria ---------------------------------------------------------------


def test_exact_constraint_satisfaction():
    """20 random models x 5 constraint types x M in {1,3} x R in {1, absent}."""
    start = time.perf_counter()
    d = unit_square(12)
    noise = NoiseSpec(kind="white")
    cfgm = mod.ModelConfig(
        ndim=2, layer_count=1, modes=(2, 2), width=4, projection_width=8, time_embed_dim=4
    )
    rng = np.random.default_rng(0)
    ok = True
    for i in range(20):
        model = mod.SpectralVectorField.initialize(cfgm, rng)
        ic = con.make_ic(d, rng.normal(size=12))
        bc = con.make_bc(d, rng.normal(size=12))
        flat = rng.choice(d.size, 100, replace=False)
        scatter = con.make_scatter(
            d, np.stack(np.unravel_index(flat, d.shape), axis=1), rng.normal(size=100)
        )
        conservation = con.make_conservation(d, "heat", pde.HeatParams(alpha=2.0, phi=0.4))
        cases = [ic, bc, scatter, conservation, con.IdentityConstraint()]
        for c in cases:
            for m_mix in (1, 3):
                for r in (1, None):
                    cfg = sampler.SamplerConfig(
                        euler_steps=4, mixing_iterations=m_mix, resample_interval=r
                    )
                    out = sampler.eci_sample(
                        model, c, d, noise, cfg, np.random.default_rng(1000 * i + 10 * m_mix + (r or 0))
                    )
                    if isinstance(c, con.ValueConstraint):
                        ok &= bool(
                            np.array_equal(
                                out.values[c.mask.flags], c.targets.values[c.mask.flags]
                            )
                        )
                    elif isinstance(c, con.RegionConstraint):
                        for mask, a in c.regions:
                            got = riemann_sum(out, mask)
                            ok &= abs(got - a) <= 1e-9 * max(1.0, abs(a))
    elapsed = time.perf_counter() - start
    verdict(f"exact constraint satisfaction (20 models x 5 constraints x M x R, {elapsed:.0f}s)", ok and elapsed < 120)


def test_correction_operator_unit_suite():
    start = time.perf_counter()
    d = unit_square(10)
    rng = np.random.default_rng(1)
    u = GridFunction(d, rng.normal(size=d.size))
    ok = True

    # value constraint: exactness, idempotence, locality
    vc = con.make_ic(d, rng.normal(size=10))
    out = con.correct(u, vc)
    ok &= bool(np.array_equal(out.values[vc.mask.flags], vc.targets.values[vc.mask.flags]))
    twice = con.correct(out, vc)
    ok &= bool(np.max(np.abs(twice.values - out.values)) <= 1e-12)
    ok &= bool(np.array_equal(out.values[~vc.mask.flags], u.values[~vc.mask.flags]))

    # region constraint: exactness (1e-9 relative), idempotence, locality, linearity
    flags_a = np.zeros(d.shape, dtype=bool)
    flags_a[:, 0] = True
    flags_b = np.zeros(d.shape, dtype=bool)
    flags_b[:, 4] = True
    rc = con.RegionConstraint([(RegionMask(d, flags_a), 1.3), (RegionMask(d, flags_b), -0.4)])
    out = con.correct(u, rc)
    for mask, a in rc.regions:
        ok &= abs(riemann_sum(out, mask) - a) <= 1e-9 * max(1.0, abs(a))
    twice = con.correct(out, rc)
    ok &= bool(np.max(np.abs(twice.values - out.values)) <= 1e-12)
    untouched = ~(flags_a.ravel() | flags_b.ravel())
    ok &= bool(np.array_equal(out.values[untouched], u.values[untouched]))
    alpha = 1.7
    scaled = con.correct(
        alpha * u,
        con.RegionConstraint([(m, alpha * a) for m, a in rc.regions]),
    )
    ok &= bool(np.max(np.abs(scaled.values - alpha * out.values)) <= 1e-12)

    # identity
    ok &= bool(np.array_equal(con.correct(u, con.IdentityConstraint()).values, u.values))
    elapsed = time.perf_counter() - start
    verdict(f"correction-operator unit suite ({elapsed:.1f}s)", ok and elapsed < 10)


def test_straight_flow_oracle():
    start = time.perf_counter()
    d = unit_square(8)
    spec = NoiseSpec(kind="white")
    model = ConstantField(1.7)
    ok = True
    for n in (1, 7, 100):
        cfg = sampler.SamplerConfig(euler_steps=n, mixing_iterations=1, resample_interval=None)
        from eci.noise import sample_noise

        u0 = sample_noise(d, spec, np.random.default_rng(42))
        eci_out = sampler.eci_sample(
            model, con.IdentityConstraint(), d, spec, cfg, np.random.default_rng(42)
        )
        euler_out = sampler.euler_sample(model, u0, n)
        ok &= bool(np.max(np.abs(eci_out.values - euler_out.values)) <= 1e-12)
    elapsed = time.perf_counter() - start
    verdict(f"straight-flow oracle, N in {{1,7,100}} ({elapsed:.1f}s)", ok and elapsed < 10)


def test_gradient_correctness():
    start = time.perf_counter()
    d = unit_square(16)
    cfg = mod.ModelConfig(
        ndim=2, layer_count=2, modes=(4, 4), width=4, projection_width=16, time_embed_dim=8
    )
    m = mod.SpectralVectorField.initialize(cfg, np.random.default_rng(42))
    rng = np.random.default_rng(7)
    m.set_parameters_vector(rng.normal(0.0, 0.3, m.n_parameters))
    batch = [
        (
            GridFunction(d, rng.normal(size=d.size)),
            GridFunction(d, rng.normal(size=d.size)),
            float(rng.uniform()),
        )
        for _ in range(2)
    ]
    g = mod.gradient(m, batch)
    vec = m.parameters_vector()

    def loss():
        return float(np.mean([mod.ffm_loss(m, u0, u1, t) for u0, u1, t in batch]))

    worst = 0.0
    for i in rng.choice(m.n_parameters, 50, replace=False):
        # Step balances truncation against f64 cancellation: the loss is O(1),
        # so at 1e-5 the difference noise (~2e-11) swamps coordinates whose
        # gradient is ~1e-7.
        step = 3e-5 * max(1.0, abs(vec[i]))
        vp = vec.copy()
        vp[i] += step
        m.set_parameters_vector(vp)
        lp = loss()
        vm = vec.copy()
        vm[i] -= step
        m.set_parameters_vector(vm)
        lm = loss()
        fd = (lp - lm) / (2.0 * step)
        worst = max(worst, abs(g[i] - fd) / max(1e-12, abs(fd)))
    elapsed = time.perf_counter() - start
    verdict(
        f"gradient vs central differences, 50 coordinates, worst rel err {worst:.2e} ({elapsed:.0f}s)",
        worst < 1e-4 and elapsed < 60,
    )


def test_analytic_solution_fidelity():
    start = time.perf_counter()
    ok = True

    # heat residual at 100x100 and second-order decay
    hp = pde.HeatParams(alpha=2.0, phi=0.5)
    dom = lambda r: Domain(((0.0, 2 * math.pi, r), (0.0, 1.0, r)))
    r100 = pde.residual_check(pde.solution_field("heat", hp, dom(100)), "heat", hp)
    r200 = pde.residual_check(pde.solution_field("heat", hp, dom(200)), "heat", hp)
    ok &= r100 < 1e-2
    ok &= r200 < r100 / 4.0

    # conservation convergence: slope >= 0.9 on log-log fit over res {50,...,400}
    res_list = [50, 100, 200, 400]

    def spatial_err(family, params, t, res):
        (xlo, xhi), _ = pde.FAMILY_BOUNDS[family]
        d = Domain(((xlo, xhi, res),))
        f = GridFunction.from_callable(
            d, lambda x: pde.exact_solution(family, params, x, np.full_like(x, t))
        )
        return abs(riemann_sum(f, RegionMask.full(d)) - pde.conservation_value(family, params, t))

    # heat: trapezoid sums of a full sine period are spectrally accurate, so the
    # error sits at machine precision for every resolution; that satisfies the
    # O(res^-1) bound outright and a log-log fit of rounding noise is meaningless
    heat_errs = [spatial_err("heat", hp, 0.5, r) for r in res_list]
    ok &= max(heat_errs) < 1e-12

    pp = pde.PmeParams(m=2.0)
    pme_ts = np.linspace(0.1, 0.9, 9)
    pme_errs = [np.mean([spatial_err("pme", pp, t, r) for t in pme_ts]) for r in res_list]
    pme_slope = -np.polyfit(np.log(res_list), np.log(pme_errs), 1)[0]
    ok &= pme_slope >= 0.9

    sp = pde.StefanParams(u_star=0.6)
    # the shock cell makes single-slice errors oscillate with grid alignment;
    # averaging over many time slices recovers the clean O(res^-1) decay
    stefan_ts = np.linspace(0.005, 0.1, 100)
    stefan_errs = [np.mean([spatial_err("stefan", sp, t, r) for t in stefan_ts]) for r in res_list]
    stefan_slope = -np.polyfit(np.log(res_list), np.log(stefan_errs), 1)[0]
    ok &= stefan_slope >= 0.9

    elapsed = time.perf_counter() - start
    verdict(
        "analytic-solution fidelity "
        f"(heat residual {r100:.1e}, slopes pme {pme_slope:.2f} / stefan {stefan_slope:.2f}, {elapsed:.0f}s)",
        ok and elapsed < 60,
    )


def test_stefan_root():
    start = time.perf_counter()
    ok = True
    for u_star in (0.55, 0.60, 0.65, 0.70):
        alpha = pde.solve_stefan_alpha(u_star)
        resid = u_star * math.erf(alpha) * alpha * math.exp(alpha**2) - (
            1.0 - u_star
        ) / math.sqrt(math.pi)
        ok &= abs(resid) < 1e-10
    elapsed = time.perf_counter() - start
    verdict(f"stefan root residual < 1e-10 for four shock values ({elapsed:.2f}s)", ok and elapsed < 1)


def test_metric_closed_forms():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    n = 5000
    ok = True

    mu = np.array([1.0, -0.5, 0.25, 2.0])
    a = rng.normal(size=(n, 4))
    b = rng.normal(size=(n, 4)) + mu
    fd_mean = metrics.frechet_distance(a, b)
    ok &= abs(fd_mean - float(np.sum(mu**2))) <= 0.05 * float(np.sum(mu**2))

    a1 = rng.normal(scale=1.0, size=(n, 1))
    b1 = rng.normal(scale=2.0, size=(n, 1))
    fd_var = metrics.frechet_distance(a1, b1)
    ok &= abs(fd_var - 1.0) <= 0.05

    d = Domain(((0.0, 1.0, 10),))
    truth = GridFunction.constant(d, 0.3)
    ll = metrics.log_likelihood(truth, truth, GridFunction.constant(d, 1.0))
    ok &= abs(ll - (-0.5 * math.log(2 * math.pi))) < 1e-9

    elapsed = time.perf_counter() - start
    verdict(
        f"metric closed forms (FD mean-shift {fd_mean:.3f}, FD variance-gap {fd_var:.3f}, {elapsed:.0f}s)",
        ok and elapsed < 30,
    )


def test_desk_scale_ordering(desk_model, desk_domain, stokes_ic):
    start = time.perf_counter()
    prange = pde.default_param_range("stokes").replace(k=(5.0, 5.0))
    ref = metrics.SampleSet(
        pde.generate_dataset("stokes", DESK_EVAL_SAMPLES, desk_domain, prange, np.random.default_rng(2))
    )
    eci_set, eci_rep = sample_set(
        desk_model, stokes_ic, desk_domain, "eci", 1, None, DESK_EVAL_SAMPLES, 3,
        DESK_ORDERING_STEPS,
    )
    fp_set, _ = sample_set(
        desk_model, stokes_ic, desk_domain, "final_projection", 1, None,
        DESK_EVAL_SAMPLES, 3, DESK_ORDERING_STEPS,
    )
    euler_set, euler_rep = sample_set(
        desk_model, stokes_ic, desk_domain, "euler", 1, None, DESK_EVAL_SAMPLES, 3,
        DESK_ORDERING_STEPS,
    )
    eci_mmse, eci_smse = metrics.mmse_smse(eci_set, ref)
    _, fp_smse = metrics.mmse_smse(fp_set, ref)
    euler_mmse, _ = metrics.mmse_smse(euler_set, ref)
    eci_ce = max(eci_rep.constraint_errors)
    euler_ce = min(euler_rep.constraint_errors)
    elapsed = time.perf_counter() - start
    ok = (
        eci_ce == 0.0
        and euler_ce > 0.0
        and eci_mmse < euler_mmse / 2.0
        and eci_smse <= fp_smse
        and elapsed < 600
    )
    verdict(
        "desk-scale ordering "
        f"(CE eci {eci_ce} / euler {euler_ce:.2e}; MMSE eci {eci_mmse:.4f} vs euler {euler_mmse:.4f}; "
        f"SMSE eci {eci_smse:.4f} vs fp {fp_smse:.4f}; {elapsed:.0f}s)",
        ok,
    )


def test_stochasticity_control(desk_model, desk_domain, stokes_ic):
    start = time.perf_counter()
    set_r1, _ = sample_set(desk_model, stokes_ic, desk_domain, "eci", 5, 1, 64, 4, 50)
    set_rabs, _ = sample_set(desk_model, stokes_ic, desk_domain, "eci", 5, None, 64, 4, 50)

    def pooled_var(s):
        return float(np.mean(s.stacked().var(axis=0)))

    v1, vabs = pooled_var(set_r1), pooled_var(set_rabs)
    elapsed = time.perf_counter() - start
    verdict(
        f"stochasticity control (pooled var R=1 {v1:.3f} < R=absent {vabs:.3f}, {elapsed:.0f}s)",
        v1 < vabs and elapsed < 180,
    )


def test_regression_degeneration(desk_model, desk_domain, stokes_ic):
    start = time.perf_counter()
    t_ax = desk_domain.axis_points(1)
    ic_bc = con.merge_value_constraints(
        [stokes_ic, con.make_bc(desk_domain, 2.0 * np.cos(6.0 * t_ax))]
    )
    set_icbc, _ = sample_set(desk_model, ic_bc, desk_domain, "eci", 2, 1, 64, 5, 100)
    set_ic, _ = sample_set(desk_model, stokes_ic, desk_domain, "eci", 2, 1, 64, 5, 100)

    def mean_std(s):
        return float(np.mean(s.stacked().std(axis=0)))

    ratio = mean_std(set_icbc) / mean_std(set_ic)
    elapsed = time.perf_counter() - start
    verdict(
        f"regression degeneration (std ratio IC+BC / IC-only = {ratio:.2f}, {elapsed:.0f}s)",
        ratio < 0.25 and elapsed < 180,
    )


def test_superresolution(desk_model):
    start = time.perf_counter()
    d64 = unit_square(64)
    x = d64.axis_points(0)
    ic64 = con.make_ic(d64, 2.0 * np.exp(-5.0 * x) * np.cos(5.0 * x))
    cfg = sampler.SamplerConfig(euler_steps=20, mixing_iterations=1, resample_interval=None)
    samples, report = sampler.sample_batch(
        "eci", desk_model, ic64, d64, DESK_NOISE, cfg, 4, np.random.default_rng(6)
    )
    finite = all(np.all(np.isfinite(s.values)) for s in samples)
    ce = max(report.constraint_errors)
    elapsed = time.perf_counter() - start
    verdict(
        f"superresolution 64x64 from 32x32 model (CE {ce}, finite {finite}, {elapsed:.0f}s)",
        ce == 0.0 and finite and elapsed < 120,
    )
