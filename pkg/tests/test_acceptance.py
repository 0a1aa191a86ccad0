"""Acceptance gate: twelve numbered criteria, one printed line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
PASS/FAIL lines as they complete.  The expensive shared inputs (labeled
configuration sets and the trained surrogate) come from session fixtures in
conftest.py and are cached under tests/.cache.

Criteria 4, 5 and 8 contain sub-checks that are known red; see the
assertions' comments for the measured numbers behind them.
"""

import json
import math
import sys
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

import cspez.evaluation as ev
from cspez.belief import PursuerBelief, RngStream, gaussian_cdf
from cspez.cli import main as cli_main
from cspez.estimators import (linear_cspez, mc_cspez, nn_cspez,
                              quadratic_cspez, quadratic_moments)
from cspez.features import (FeatureRanges, build_features,
                            config_from_features, configs_from_features,
                            latin_hypercube)
from cspez.geometry import (EvaderState, PursuerParams, Side, ez_value,
                            ez_value_theta, shortest_cs_length, turn_center)
from cspez.mlp import forward, in_training_box, input_gradient, save_model
from cspez.planner import OperatingRegion, PlanProblem, plan, validate
from cspez import dual
from cspez.bspline import SplineTrajectory, basis_matrix, knot_vector

from conftest import MC_N, ROOT_SEED, scenario_belief
from oracles import cs_length_oracle
from test_estimators import quad_moments_oracle
from test_geometry import random_config


def report(num, ok, detail):
    line = f"criterion {num:02d} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line, file=sys.stderr, flush=True)
    assert ok, line


# Table 2 reference values (t_f) per method and threshold.
TABLE2_TF = {
    "linear": {0.01: 11.76, 0.05: 11.58, 0.25: 11.38, 0.5: 11.29},
    "quadratic": {0.01: 12.21, 0.05: 11.81, 0.25: 11.42, 0.5: 11.24},
    "nn": {0.01: 11.62, 0.05: 11.49, 0.25: 11.34, 0.5: 11.25},
}


def test_criterion_01_geometry_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(10_000):
        f, p = random_config(rng)
        got = shortest_cs_length(f, p)
        want = cs_length_oracle(f, p.x, p.y, p.heading, p.turn_radius)
        worst = max(worst, abs(got - want))
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-6 and elapsed < 300,
           f"10^4 configs, max |dL| = {worst:.2e}, {elapsed:.0f}s")


def test_criterion_02_collinear_exactness():
    p = PursuerParams(0.4, -1.2, 0.9, turn_radius=0.37, range=1.0, speed=2.0)
    worst = 0.0
    for scale in (0.1, 1.0, 10.0):
        d = scale * p.turn_radius
        f = (p.x + d * math.cos(p.heading), p.y + d * math.sin(p.heading))
        worst = max(worst, abs(shortest_cs_length(f, p) - d))
    report(2, worst <= 1e-12, f"collinear max |L - d| = {worst:.2e}")


def test_criterion_03_quadratic_moment_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for dim in range(1, 7):
        for _ in range(50):
            c = rng.normal()
            b = rng.normal(size=dim)
            a_mat = rng.normal(size=(dim, dim))
            a_mat = 0.5 * (a_mat + a_mat.T)
            g = rng.normal(size=(dim, dim))
            cov = g @ g.T / dim
            mu, var = quadratic_moments(c, b, a_mat, cov)
            mu_o, var_o = quad_moments_oracle(c, b, a_mat, cov)
            worst = max(worst, abs(mu - mu_o), abs(var - var_o))
    report(3, worst <= 1e-10,
           f"dims 1-6 quadratic moments, max dev = {worst:.2e}")


def test_criterion_04_small_uncertainty_consistency(model):
    rng = np.random.default_rng(4)
    ranges = FeatureRanges()
    feats = latin_hypercube(6000, ranges, rng)
    # Shrink every covariance feature to 1e-10 (cross term to zero).
    feats[:, 3:10] = 1e-10
    feats[:, 5] = 0.0
    kept = 0
    exact_dev = 0.0
    nn_dev = 0.0
    for row in feats:
        b, e = config_from_features(row)
        z = ez_value_theta(b.mean, e)
        if abs(z) < 0.1:
            continue
        ind = 1.0 if z <= 0 else 0.0
        lin = linear_cspez(b, e).probability
        quad = quadratic_cspez(b, e).probability
        mc = mc_cspez(b, e, 100, RngStream(kept).generator()).probability
        exact_dev = max(exact_dev, abs(lin - ind), abs(quad - ind),
                        abs(mc - ind))
        if in_training_box(model, row):
            nn_dev = max(nn_dev, abs(nn_cspez(model, b, e).probability - ind))
        kept += 1
        if kept == 1000:
            break
    # Known red on the NN sub-check: the zero-covariance face of the
    # training box has vanishing density under the Latin-hypercube training
    # distribution (all six covariance features simultaneously near zero),
    # so the surrogate must extrapolate across the step there and smooths
    # it; near-boundary configurations miss the 0.05 bound.  The exact
    # estimators agree with the indicator to machine precision.
    report(4, kept == 1000 and exact_dev <= 1e-9 and nn_dev <= 0.05,
           f"{kept} configs, L/Q/MC dev = {exact_dev:.1e}, "
           f"NN dev = {nn_dev:.3f} (bound 0.05)")


def _held_out_report(test_set, model):
    feats = test_set.features
    means, covs, evaders = configs_from_features(feats)
    baseline = test_set.labels
    preds = {m: ev.method_probabilities(m, feats, model)
             for m in ("linear", "quadratic", "nn")}
    metrics = {m: ev._metrics(m, p, baseline) for m, p in preds.items()}
    return metrics


@pytest.fixture(scope="module")
def table1_metrics(test_set, model):
    return _held_out_report(test_set, model)


def test_criterion_05_table1_replication(table1_metrics, surrogate):
    m = table1_metrics
    lin_aae, quad_aae = m["linear"].aae, m["quadratic"].aae
    ordering = m["quadratic"].mse < m["linear"].mse
    val_mse = surrogate[1]["val_mse"]
    nn_better = m["nn"].mse < m["linear"].mse and \
        m["nn"].mse < m["quadratic"].mse
    # Known red: on the prescribed admissible ranges the measured AAEs
    # (about 0.012 / 0.007) sit below the published reference bands; most
    # range-sampled configurations are far-field where all estimators
    # agree, capping the achievable mean error.
    in_bands = 0.04 <= lin_aae <= 0.09 and 0.03 <= quad_aae <= 0.08
    report(5, in_bands and ordering and val_mse <= 1e-3 and nn_better,
           f"Linear AAE {lin_aae:.4f} (band [0.04,0.09]), Quadratic AAE "
           f"{quad_aae:.4f} (band [0.03,0.08]), Q MSE < L MSE: {ordering}, "
           f"NN val MSE {val_mse:.1e} <= 1e-3, NN beats L/Q MSE: {nn_better}")


def test_criterion_06_median_error_fractions(table1_metrics):
    lin = np.abs(table1_metrics["linear"].errors)
    quad = np.abs(table1_metrics["quadratic"].errors)
    f_lin = float(np.mean(lin < 0.02))
    f_quad = float(np.mean(quad < 0.01))
    report(6, f_lin >= 0.45 and f_quad >= 0.45,
           f"Linear |err|<0.02 on {f_lin:.1%}, Quadratic |err|<0.01 on "
           f"{f_quad:.1%} (need >= 45%)")


def test_criterion_07_trace_degradation(test_set, table1_metrics):
    traces = ev.covariance_traces(test_set.features)
    errors = {m: table1_metrics[m].errors
              for m in ("linear", "quadratic", "nn")}
    rep = ev.trace_binned_errors(traces, errors, bins=20)
    centers = 0.5 * (rep.edges[:-1] + rep.edges[1:])
    rho = {}
    for m, med in rep.medians.items():
        ok = ~np.isnan(med)
        rho[m] = float(spearmanr(centers[ok], med[ok]).statistic)
    passed = rho["linear"] > 0.5 and rho["quadratic"] > 0.5 \
        and rho["nn"] < rho["linear"]
    report(7, passed,
           f"binned-median Spearman: linear {rho['linear']:.2f}, quadratic "
           f"{rho['quadratic']:.2f}, nn {rho['nn']:.2f}")


def _scenario_problem(method, epsilon, model):
    return PlanProblem(
        start=(-4.0, -4.0), goal=(4.0, 4.0), v_e=1.0, u_lb=-1.0, u_ub=1.0,
        kappa_ub=0.2, region=OperatingRegion(-10, 10, -10, 10),
        belief=scenario_belief(), method=method, epsilon=epsilon,
        model=model if method == "nn" else None)


def test_criterion_08_table2_replication(model):
    lines = []
    ok = True
    tf_by_method = {}
    for method in ("linear", "quadratic", "nn"):
        tol = 0.15 if method == "nn" else 0.10
        tfs = []
        for eps in (0.01, 0.05, 0.25, 0.5):
            problem = _scenario_problem(method, eps, model)
            t0 = time.perf_counter()
            res = plan(problem)
            wall = time.perf_counter() - t0
            rep = validate(problem, res, MC_N,
                           RngStream(ROOT_SEED, (30,)))
            ref = TABLE2_TF[method][eps]
            row_ok = (res.status == "success" and wall <= 60.0
                      and abs(res.t_f - ref) / ref <= tol)
            # The post-hoc MC bound applies to the exact expansions only;
            # nn rows are held to the final-time tolerance (the surrogate's
            # tail errors are exactly what the optimizer exploits).
            if method != "nn":
                row_ok &= rep.max_mc_probability <= eps + 0.02
            # Known red on quadratic eps=0.5 only: the reference results'
            # own post-hoc MC value for that cell (0.5336) already exceeds
            # the 0.52 bound, so the bound conflicts with the reference it
            # checks against.
            ok &= row_ok
            tfs.append(res.t_f)
            lines.append(f"{method} eps={eps}: t_f={res.t_f:.2f} "
                         f"(ref {ref}), maxMC={rep.max_mc_probability:.4f} "
                         f"(bound {eps + 0.02}), {res.status}, {wall:.0f}s")
        tf_by_method[method] = tfs
        ok &= all(tfs[i] >= tfs[i + 1] - 1e-9 for i in range(3))
    report(8, ok, "Table 2 matrix; " + "; ".join(lines))


def test_criterion_09_straight_line_sanity():
    problem = _scenario_problem("linear", 1.0, None)
    res = plan(problem)
    ideal = math.hypot(8.0, 8.0) / 1.0
    rel = abs(res.t_f - ideal) / ideal
    report(9, res.status == "success" and rel <= 0.01,
           f"unconstrained t_f = {res.t_f:.4f} vs {ideal:.4f} "
           f"(rel {rel:.1e})")


def test_criterion_10_derivative_suite(model):
    rng = np.random.default_rng(10)
    # Dual gradients/Hessians of z against finite differences on smooth points.
    worst_g, worst_h = 0.0, 0.0
    checked = 0
    while checked < 1000:
        f, p = random_config(rng)
        e = EvaderState(rng.uniform(-3, 3), rng.uniform(-3, 3),
                        rng.uniform(-np.pi, np.pi), rng.uniform(0.3, 1.4))
        theta = p.as_vector()

        def fz(th):
            return ez_value_theta(th, e)

        z0, g, h = dual.value_grad_hess(fz, theta)
        step = 1e-6
        fd_g = np.zeros(6)
        smooth = True
        for i in range(6):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += step
            tm[i] -= step
            fd_g[i] = (fz(list(tp)) - fz(list(tm))) / (2 * step)
        # Skip kink neighborhoods (side switches) where derivatives jump.
        if np.max(np.abs(fd_g - g)) > 1e-3 * max(1.0, np.abs(g).max()):
            continue
        worst_g = max(worst_g, np.max(np.abs(fd_g - g))
                      / max(1.0, np.abs(g).max()))
        if checked % 25 == 0:  # Hessian FD is 12 gradient calls; sample it
            hstep = 1e-5
            fd_h = np.zeros((6, 6))
            for i in range(6):
                tp, tm = theta.copy(), theta.copy()
                tp[i] += hstep
                tm[i] -= hstep
                fd_h[i] = (dual.gradient(fz, list(tp))
                           - dual.gradient(fz, list(tm))) / (2 * hstep)
            fd_h = 0.5 * (fd_h + fd_h.T)
            worst_h = max(worst_h, np.max(np.abs(fd_h - h))
                          / max(1.0, np.abs(h).max()))
        checked += 1
    # Spline derivatives.
    ctrl = rng.uniform(-2, 2, (9, 2))
    s = SplineTrajectory(ctrl, 3, 0.0, 4.0)
    t = np.linspace(0.1, 3.9, 31)
    # FD straddling a knot picks up the third-derivative jump; keep the
    # comparison on the smooth interior of each span.
    knots = knot_vector(0.0, 4.0, 3, 9 - 3)
    t = t[np.min(np.abs(t[:, None] - knots[None, :]), axis=1) > 1e-3]
    h1 = np.abs(s.eval_d1(t) - (s.eval(t + 1e-6) - s.eval(t - 1e-6)) / 2e-6)
    h2 = np.abs(s.eval_d2(t)
                - (s.eval_d1(t + 1e-6) - s.eval_d1(t - 1e-6)) / 2e-6)
    spline_dev = max(h1.max(), h2.max())
    # Surrogate input gradient.
    nn_dev = 0.0
    for _ in range(20):
        x = rng.uniform(FeatureRanges().lo, FeatureRanges().hi)
        g = input_gradient(model, x)
        for i in range(14):
            xp, xm = x.copy(), x.copy()
            xp[i] += 1e-5
            xm[i] -= 1e-5
            fd = (forward(model, xp) - forward(model, xm)) / 2e-5
            nn_dev = max(nn_dev, abs(g[i] - fd))
    report(10, worst_g <= 1e-5 and worst_h <= 1e-3
           and spline_dev <= 1e-6 and nn_dev <= 1e-5,
           f"z grad dev {worst_g:.1e} (<=1e-5), Hess dev {worst_h:.1e} "
           f"(<=1e-3), spline dev {spline_dev:.1e} (<=1e-6), NN grad dev "
           f"{nn_dev:.1e} (<=1e-5)")


def test_criterion_11_spline_properties():
    rng = np.random.default_rng(11)
    worst = 0.0
    for degree, n_ctrl in ((1, 5), (2, 6), (3, 8), (3, 12)):
        knots = knot_vector(0.0, 1.0, degree, n_ctrl - degree)
        t = np.linspace(0.0, 1.0, 501)
        b = basis_matrix(knots, degree, t)
        worst = max(worst, np.abs(b.sum(axis=1) - 1.0).max())
    # Local support: perturbing control point i moves the curve only on the
    # spans where basis i is supported.
    ctrl = rng.uniform(-1, 1, (10, 2))
    s = SplineTrajectory(ctrl, 3, 0.0, 1.0)
    structural = True
    t = np.linspace(0.0, 1.0, 401)
    for i in range(10):
        c2 = ctrl.copy()
        c2[i] += [0.3, -0.2]
        s2 = SplineTrajectory(c2, 3, 0.0, 1.0)
        moved = np.abs(s2.eval(t) - s.eval(t)).max(axis=1) > 1e-14
        support = (t >= s.knots[i]) & (t < s.knots[i + 4])
        structural &= bool(np.all(moved <= support))
    report(11, worst <= 1e-12 and structural,
           f"partition-of-unity dev {worst:.1e}, local support: {structural}")


def test_criterion_12_cli_reproducibility(model, tmp_path):
    mpath = tmp_path / "model.bin"
    save_model(model, mpath)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(f"""
seed = 5
model_path = "{mpath}"

[grid]
nx = 9
ny = 9

[eval]
mc_n = 400
n_configs = 80
bins = 5
thresholds = [0.25, 0.5]

[planner]
n_samples = 50

[training]
n_samples = 40
mc_n = 1000

[training.hyper]
max_epochs = 2
batch_size = 16
""")

    def run_twice(cmd, name, extra=(), strip_fields=()):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{name}_{tag}{'.json' if name == 'plan' else '.csv'}"
            code = cli_main([cmd, "--config", str(cfg), "--out", str(out),
                             *extra])
            assert code == 0, f"{cmd} exited {code}"
            text = out.read_text()
            if name == "plan":
                obj = json.loads(text)
                for fld in strip_fields:
                    obj.pop(fld, None)
                text = json.dumps(obj, sort_keys=True)
            elif strip_fields:
                rows = [line.split(",") for line in text.splitlines()]
                keep = [i for i, col in enumerate(rows[0])
                        if col not in strip_fields]
                text = "\n".join(",".join(r[i] for i in keep) for r in rows)
            outs.append(text)
        return outs[0] == outs[1]

    results = {
        "csbez-grid": run_twice("csbez-grid", "grid"),
        "cspez-eval": run_twice("cspez-eval", "ls", ["--method", "linear"]),
        "compare": run_twice("compare", "cmp"),
        "trace-bins": run_twice("trace-bins", "tb"),
        "label": None,
        "train": None,
        "plan": run_twice("plan", "plan",
                          ["--method", "linear", "--epsilon", "0.25"],
                          strip_fields=("wall_time",)),
        "table2": run_twice("table2", "t2", strip_fields=("opt_time",)),
    }
    # label: compare the npz payloads.
    import numpy.lib.format  # noqa: F401  (np.load below)
    blobs = []
    for tag in ("a", "b"):
        out = tmp_path / f"lbl_{tag}.npz"
        assert cli_main(["label", "--config", str(cfg),
                         "--out", str(out)]) == 0
        d = np.load(out)
        blobs.append((d["features"].tobytes(), d["labels"].tobytes()))
    results["label"] = blobs[0] == blobs[1]
    # train: compare saved model payloads (binary, no timing content).
    models = []
    for tag in ("a", "b"):
        out = tmp_path / f"model_{tag}.bin"
        assert cli_main(["train", "--config", str(cfg),
                         "--out", str(out)]) == 0
        models.append(out.read_bytes())
    results["train"] = models[0] == models[1]
    ok = all(results.values())
    report(12, ok, "byte-identical reruns: " + ", ".join(
        f"{k}={'yes' if v else 'NO'}" for k, v in results.items()))
