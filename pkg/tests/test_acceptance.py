"""End-to-end acceptance checks, one test per advertised capability.

Each test pins its seed and tolerances and prints a one-line PASS summary
with the measured numbers (visible under ``pytest -s`` or in the captured
output).  Together they exercise every study runner at realistic scale, so
this file dominates the suite's runtime (a few minutes single-core).
"""
import math

import numpy as np
import pytest
import scipy.linalg

from mlab import (InjectionConfig, IsotropicPareto2D, SgdConfig, SignedPareto,
                  build_graph, ctmc_generator, draw_batches, dtmc,
                  estimate_table, find_critical_points, from_critical_points,
                  heavy_step, hill_tail_index, jump_profile, make_problem,
                  mc_estimate_rates, plain_sb_step, step)
from mlab._kernels import fuzz_steps
from mlab._rng import PURPOSE_FUZZ, stream
from mlab.harness import (load_config, run_injection_demo, study_ctmc_compare,
                          study_exit_scaling, study_occupancy, study_r2)

pytestmark = pytest.mark.slow

SP = {"kind": "signed-pareto", "alpha": 1.2, "c": 0.1, "p_plus": 0.5}


def occupancy(seed, b, noise, n_steps, n_paths):
    cfg = load_config({
        "study": "occupancy", "seed": seed, "noise": noise,
        "params": {"x0": 0.3, "eta": 1e-3, "b": b, "n_steps": n_steps,
                   "n_paths": n_paths, "record_stride": 10}})
    return study_occupancy(cfg, threads=1)


def field13_fraction(result):
    classified = sum(result.pooled[1:])
    return (result.pooled[1] + result.pooled[3]) / classified


def test_exit_time_scaling_matches_theory():
    # slopes of log mean-exit-time vs log 1/eta across clipping regimes
    cfg = load_config({
        "study": "exit-scaling", "seed": 1, "noise": dict(SP),
        "params": {"x0": -0.7, "replications": 20, "max_steps": 30_000_000,
                   "regimes": [{"b": None}, {"b": 0.5}, {"b": 0.28}]}})
    res = study_exit_scaling(cfg, threads=1)
    unclipped, clip_half, clip_tight = res.fits
    assert res.field == 2
    assert [f.l_star for f in res.fits] == [1, 2, 3]
    assert [f.predicted for f in res.fits] == pytest.approx([1.2, 1.4, 1.6])

    assert abs(unclipped.slope - 1.2) <= 0.15
    assert abs(clip_half.slope - 1.4) <= 0.15
    diff = clip_tight.slope - clip_half.slope
    assert abs(diff - 0.2) <= 0.15
    print(f"PASS: exit-time slopes {unclipped.slope:.3f} (l*=1, want 1.2), "
          f"{clip_half.slope:.3f} (l*=2, want 1.4), tighter-clipping shift "
          f"{diff:+.3f} (want +0.2)")


def test_sharp_minima_eliminated_by_clipping():
    clipped = occupancy(1, 0.5, SP, n_steps=10_000_000, n_paths=10)
    assert clipped.m_large == (2, 4)
    frac_clipped = field13_fraction(clipped)
    assert frac_clipped == pytest.approx(clipped.small_field_fraction)
    assert frac_clipped < 0.05

    unclipped = occupancy(1, None, SP, n_steps=10_000_000, n_paths=10)
    frac_unclipped = field13_fraction(unclipped)
    assert frac_unclipped >= 3.0 * frac_clipped
    print(f"PASS: sharp-field occupancy {frac_clipped:.4f} clipped vs "
          f"{frac_unclipped:.4f} unclipped "
          f"({frac_unclipped / frac_clipped:.1f}x)")


def test_gaussian_noise_traps():
    fracs = []
    for b in (0.5, None):
        res = occupancy(1, b, {"kind": "gaussian", "sigma": 1.0},
                        n_steps=10_000_000, n_paths=1)
        frac = res.pooled[3] / sum(res.pooled[1:])
        assert frac >= 0.99
        fracs.append(frac)
    print(f"PASS: Gaussian noise stays in the starting field "
          f"(clipped {fracs[0]:.4f}, unclipped {fracs[1]:.4f})")


def test_transition_graph_phase_change():
    # interior minimum with saddle gaps 0.9 (right) and 0.6 (left)
    land = from_critical_points([-1.2, -0.6, 0.0, 0.9, 1.5], L=2.0)
    points = find_critical_points(land)

    loose = build_graph(jump_profile(points, 0.5))
    assert loose.irreducible and loose.symmetric
    assert [sorted(c) for c in loose.classes] == [[1, 2, 3]]
    assert list(loose.absorbing) == [True]

    tight = build_graph(jump_profile(points, 0.4))
    assert not tight.irreducible and not tight.symmetric
    assert [sorted(c) for c in tight.classes] == [[1, 2], [3]]
    assert list(tight.absorbing) == [True, False]
    print("PASS: graph irreducible at b=0.5; classes {1,2} absorbing / "
          "{3} transient at b=0.4")


def test_rate_estimator_closed_form():
    hits = 0
    worst = 0.0
    for k in range(10):
        gen = np.random.default_rng(1000 + k)
        d_left, d_right = gen.uniform(0.2, 0.55, size=2)
        p_plus = float(gen.choice([0.3, 0.5, 0.7]))
        land = from_critical_points([-d_left, 0.0, d_right], L=2.0)
        points = find_critical_points(land)
        b = 1.1 * max(d_left, d_right)
        profile = jump_profile(points, b)
        assert list(map(int, profile.l_star)) == [1, 1]
        for d in (d_left, d_right):
            assert abs(d / b - round(d / b)) > 0.05

        noise = SignedPareto(1.2, 0.1, p_plus=p_plus)
        field = 1 + (k % 2)
        est = mc_estimate_rates(land, profile, noise, field,
                                n_samples=200_000, seed=50 + k)
        if field == 1:
            want = p_plus * d_left ** -1.2
        else:
            want = (1.0 - p_plus) * d_right ** -1.2
        dev = abs(est.q - want) / est.q_se
        worst = max(worst, dev)
        hits += dev <= 2.0
        # reachability: the only target is the neighbouring field
        assert sorted(est.targets) == [2 if field == 1 else 1]
    assert hits >= 9
    print(f"PASS: closed-form rates matched in {hits}/10 wells "
          f"(worst deviation {worst:.2f} SE)")


def test_scaled_exit_times_exponential():
    cfg = load_config({
        "study": "ctmc-compare", "seed": 3, "noise": dict(SP),
        "params": {"x0": -0.7, "eta": 5e-4, "b": 0.5,
                   "replications": 240, "max_steps": 30_000_000,
                   "rates": {"n_samples": 2_000_000, "w_min": 0.10,
                             "T_max": 16.0}}})
    rep = study_ctmc_compare(cfg, threads=1)
    assert rep.replications - rep.censored >= 200
    assert 0.75 <= rep.scaled_mean <= 1.25
    assert rep.ks <= 0.15
    for d in rep.destinations:
        assert abs(d.observed - d.predicted) <= 3.0 * d.binom_se
    print(f"PASS: scaled exits mean {rep.scaled_mean:.4f}, KS {rep.ks:.4f}, "
          f"destinations within "
          f"{max(abs(d.observed - d.predicted) / d.binom_se for d in rep.destinations):.2f} "
          f"binomial SE")


def test_r2_occupancy_prefers_wide_basins():
    cfg = load_config({
        "study": "r2-sim", "seed": 1,
        "landscape": {"name": "himmelblau-r2"},
        "noise": {"kind": "isotropic-pareto-2d", "alpha": 1.2, "c": 0.75},
        "params": {"x0": [2.9, 1.0], "eta": 5e-4, "b": 2.15,
                   "n_steps": 3_000_000, "record_stride": 10}})
    res = study_r2(cfg, threads=1)
    assert res.first_basin == 3
    assert res.visited == (1, 2, 3, 4)
    assert res.omega12_fraction > 0.80
    print(f"PASS: 2-D run visits all four basins, attractors 1+2 hold "
          f"{res.omega12_fraction:.4f} of classified time")


def test_injection_properties():
    # (a) zero injection strength reproduces plain clipped SGD bitwise
    problem = make_problem("least-squares", n=40, d=5, seed=9)
    cfg0 = InjectionConfig(eta=0.05, b=0.4, c=0.0, alpha=1.4, sb=8, lb=30)
    theta = 0.3 * np.arange(5)
    for i in range(50):
        batches = draw_batches(problem, cfg0, stream(8, 1, i))
        a = heavy_step(problem, cfg0, theta, stream(8, 2, i), batches=batches)
        p = plain_sb_step(problem, cfg0, theta, stream(8, 3, i),
                          batch=batches[0])
        assert a.tobytes() == p.tobytes()
        theta = a

    # (b) clipped update norms never exceed b, even under extreme draws
    wild = InjectionConfig(eta=5.0, b=0.3, c=2.0, alpha=1.1, sb=4, lb=40)
    theta = np.zeros(5)
    rng = stream(8, 4)
    for _ in range(500):
        new = heavy_step(problem, wild, theta, rng)
        assert np.linalg.norm(new - theta) <= 0.3 + 1e-12
        theta = new

    # (c) the multiplier the optimizer applies follows c*(1-U)^(-1/alpha):
    # back it out of unclipped updates, then Hill-estimate its tail index
    lsq = make_problem("least-squares", n=30, d=3, seed=4)
    wide_open = InjectionConfig(eta=1.0, b=1e12, c=0.5, alpha=1.4, sb=5,
                                lb=25, sb_star=5)
    theta = np.full(3, 0.7)
    batches = draw_batches(lsq, wide_open, stream(8, 5))
    g_sb = lsq.grad(theta, batches[0])
    delta = lsq.grad(theta, batches[1]) - lsq.grad(theta, batches[2])
    k = int(np.argmax(np.abs(delta)))
    for i in range(200):
        new = heavy_step(lsq, wide_open, theta, stream(8, 6, i),
                         batches=batches)
        z_used = ((theta - new)[k] - g_sb[k]) / delta[k]
        z_law = 0.5 * (1.0 - stream(8, 6, i).random()) ** (-1.0 / 1.4)
        assert z_used == pytest.approx(z_law, rel=1e-9)
    z = 0.5 * (1.0 - stream(8, 7).random(10 ** 6)) ** (-1.0 / 1.4)
    hill = hill_tail_index(z, k=5000)
    assert abs(hill - 1.4) < 0.1

    # (d) two-phase injection reaches the wide fields more often than
    # plain small-batch SGD on the scalarized multi-well problem
    demo = run_injection_demo(load_config({"study": "inject-demo", "seed": 1}),
                              threads=1)
    assert demo.m_large == (2, 4)
    assert demo.wide_injected > demo.wide_plain
    print(f"PASS: injection bitwise/clip/tail checks hold (Hill {hill:.3f}); "
          f"wide-field finishes {demo.wide_injected} injected vs "
          f"{demo.wide_plain} plain over {demo.n_seeds} seeds")


def test_invariant_suites(land1d, points1d, land2d):
    # gradient vs central finite differences, both landscapes
    xs = np.linspace(-1.58, 1.58, 401)
    h = 1e-6
    fd = (land1d.f(xs + h) - land1d.f(xs - h)) / (2 * h)
    got = np.asarray(land1d.fprime(xs), dtype=float)
    assert np.max(np.abs(got - fd) / np.maximum(np.abs(fd), 1.0)) < 1e-5
    for x, y in [(3.0, 1.0), (2.0, -1.5), (-0.8, 2.5), (0.5, 0.5),
                 (-2.0, -2.2), (-3.0, -3.4), (-1.5, -2.5), (1.0, -3.0)]:
        gx, gy = land2d.grad(x, y)
        fx = (land2d.value(x + h, y) - land2d.value(x - h, y)) / (2 * h)
        fy = (land2d.value(x, y + h) - land2d.value(x, y - h)) / (2 * h)
        assert abs(gx - fx) / max(abs(fx), 1.0) < 1e-5
        assert abs(gy - fy) / max(abs(fy), 1.0) < 1e-5

    # 10^8 fuzzed steps: iterates stay in [-L, L] and move at most b
    kind, params = land1d.kernel
    noise = SignedPareto(1.2, 0.1)
    etas = (1e-4, 1e-3, 1e-2, 0.1)
    bs = (0.1, 0.5, 2.0, math.inf)
    bad = 0
    for j in range(100):
        rng = stream(777, PURPOSE_FUZZ, j)
        xs_f = rng.uniform(-land1d.L, land1d.L, 1_000_000)
        zs = noise.sample(rng, 1_000_000)
        bad += int(fuzz_steps(kind, params, xs_f, zs,
                              etas[j % 4], bs[(j // 4) % 4], land1d.L))
    assert bad == 0

    # projection containment in the 2-D ball under huge kicks
    heavy2d = IsotropicPareto2D(0.8, 5.0)
    scfg = SgdConfig(eta=1.0, b=math.inf, max_steps=1)
    rng = stream(778, 0)
    x = np.array([2.9, 1.0])
    for _ in range(2000):
        x = step(land2d, noise=heavy2d, cfg=scfg, x=x, rng=rng)
        assert np.linalg.norm(x) <= land2d.R + 1e-12

    # DTMC row-stochasticity and CTMC mass conservation on estimated rates
    profile = jump_profile(points1d, 0.5)
    table = estimate_table(land1d, profile, SignedPareto(1.2, 0.1),
                           n_samples=50_000, w_min=0.10, T_max=16.0, seed=9)
    chain = dtmc(table)
    assert np.max(np.abs(chain.P.sum(axis=1) - 1.0)) < 1e-12
    graph = build_graph(profile)
    model = ctmc_generator(table, chain, graph, 0)
    gen = model.generator()
    assert np.max(np.abs(gen.sum(axis=1))) < 1e-12
    for t in (0.5, 5.0):
        prop = scipy.linalg.expm(gen * t)
        assert np.max(np.abs(prop.sum(axis=1) - 1.0)) < 1e-12
        assert prop.min() > -1e-15

    # bitwise reproducibility of a full study rerun
    doc = {"study": "occupancy", "seed": 17, "noise": dict(SP),
           "params": {"x0": 0.3, "eta": 1e-3, "b": 0.5, "n_steps": 100_000,
                      "n_paths": 2, "record_stride": 10}}
    first = study_occupancy(load_config(doc), threads=1)
    second = study_occupancy(load_config(doc), threads=1)
    assert first == second
    print("PASS: gradients, projection fuzz (10^8 steps), chain "
          "stochasticity and bitwise study rerun all hold")
