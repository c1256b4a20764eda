import numpy as np
import pytest

from blpp_lab import (GridSpec, PathBundle, SampledPath, TruncationError,
                      TruncationPolicy, busemann_chain_step, d_iterated, d_map,
                      exchange_identity_check, intertwining_check, multiline_step,
                      q_map, r_map, sample_brownian, script_d)
from blpp_lab.env import ROLE_DRIVER, ROLE_SEED, RngPolicy
from blpp_lab.queues import (algebraic_relations_check, closed_form_check,
                             increment_ordering_margin)


def path_on(grid, vals, drift=None):
    return SampledPath(grid, np.asarray(vals, dtype=float), drift_label=drift)


def brute_q(W):
    return np.array([max(W[s] - W[t] for s in range(t, len(W))) for t in range(len(W))])


class TestHandExample:
    """Four-point window: B = (0, 2, 0, -5), Z = (0, 1, 2, 3) at t = -1..2.

    Values confirmed against the brute-force supremum oracle: with
    W = B - Z = (0, 1, -2, -8) and suffix maxima (1, 1, -2, -8) from t = 0,
    Q = (1, 0, 0, 0), D = (0, 2, 3, 4), R = (0, 1, -1, -6) on t = 0..2
    (windows measured from each t onward).
    """

    grid = GridSpec(-1.0, 2.0, 1.0)
    # index 1 corresponds to t = 0; pad t = -1 with pinned-consistent values
    B = [-1.0, 0.0, 2.0, 0.0, ]
    Z = [-2.0, 0.0, 1.0, 2.0, ]

    def setup_method(self):
        g = GridSpec(-1.0, 3.0, 1.0)
        self.g = g
        self.B = path_on(g, [-1.0, 0.0, 2.0, 0.0, -5.0], drift=None)
        self.Z = path_on(g, [-2.0, 0.0, 1.0, 2.0, 3.0], drift=None)
        self.tr = TruncationPolicy(safety_margin=0.0, interior_fraction=0.0,
                                   tail_fraction=1e-9)

    def test_q_matches_brute_force(self):
        q = q_map(self.Z, self.B, self.tr)
        W = self.B.values - self.Z.values
        assert np.array_equal(q.values, brute_q(W))
        assert list(q.values[1:]) == [1.0, 0.0, 0.0, 0.0]

    def test_d_and_r_hand_values(self):
        d = d_map(self.Z, self.B, self.tr)
        r = r_map(self.Z, self.B, self.tr)
        assert list(d.values[1:]) == [0.0, 2.0, 3.0, 4.0]
        assert list(r.values[1:]) == [0.0, 1.0, -1.0, -6.0]

    def test_shared_supremum_algebra(self):
        q = q_map(self.Z, self.B, self.tr)
        d = d_map(self.Z, self.B, self.tr)
        r = r_map(self.Z, self.B, self.tr)
        i0 = self.g.zero_index
        scale = np.abs(d.values).max()
        assert np.abs(d.values - (self.Z.values + (q.values[i0] - q.values))).max() <= 4e-16 * scale
        assert np.abs(r.values - (self.B.values + (q.values - q.values[i0]))).max() <= 4e-16 * scale


def test_linear_paths_trivial(trunc):
    """Drift-dominated linear pair: the queue never fills, so departures
    reproduce the arrivals and the used services reproduce the driver
    (D = Z + Q(0) - Q = Z and R = B + Q - Q(0) = B when Q == 0)."""
    g = GridSpec(-1.0, 20.0, 1e-2)
    ts = g.times()
    Z = path_on(g, 2.0 * ts, drift=2.0)
    B = path_on(g, 1.0 * ts, drift=1.0)
    q = q_map(Z, B, trunc)
    assert np.all(q.values == 0.0)
    d = d_map(Z, B, trunc)
    r = r_map(Z, B, trunc)
    assert np.array_equal(d.values, Z.values[: len(d.values)])
    assert np.array_equal(r.values, B.values[: len(r.values)])


def test_q_nonneg_and_pins(small_grid, policy, trunc):
    Z = sample_brownian(small_grid, 1.2, 1.0, policy, 1)
    B = sample_brownian(small_grid, 0.0, 1.0, policy, 2)
    q = q_map(Z, B, trunc)
    d = d_map(Z, B, trunc)
    r = r_map(Z, B, trunc)
    assert q.values.min() >= 0.0
    assert d.values[small_grid.zero_index] == 0.0
    assert r.values[small_grid.zero_index] == 0.0
    rep = algebraic_relations_check(Z, B, trunc)
    assert rep.max_rel_discrepancy <= 1e-14


def test_oconnell_yor_output_moments(policy):
    """Departures of a drifted arrival against an independent driver stay
    Brownian with the arrival drift: unit-interval increments have mean lam
    and variance 1 (within 4 SE over 10^4 trials)."""
    g = GridSpec(-1.0, 40.0, 1e-2)
    tr = TruncationPolicy()
    lam = 1.0
    trials = 10_000
    i0, i1 = g.index_of(0.0), g.index_of(1.0)
    inc = np.empty(trials)
    for k in range(trials):
        Z = sample_brownian(g, lam, 1.0, policy, policy.stream_id(k, ROLE_SEED, 0))
        B = sample_brownian(g, 0.0, 1.0, policy, policy.stream_id(k, ROLE_SEED, 1))
        d = d_map(Z, B, tr)
        inc[k] = d.values[i1] - d.values[i0]
    se_mean = inc.std(ddof=1) / np.sqrt(trials)
    assert abs(inc.mean() - lam) < 4 * se_mean
    v = inc.var(ddof=1)
    se_var = v * np.sqrt(2.0 / (trials - 1))
    assert abs(v - 1.0) < 4 * se_var


def test_iterated_recursive_equals_closed_form(small_grid, policy, trunc):
    drifts = (0.7, 1.4, 2.1, 2.8)
    paths = tuple(
        sample_brownian(small_grid, d, 1.0, policy, policy.stream_id(0, ROLE_SEED, j))
        for j, d in enumerate(drifts)
    )
    bundle = PathBundle(paths, "Y")
    rep = closed_form_check(bundle, trunc)
    assert rep.max_rel_discrepancy <= 1e-12


def test_d_iterated_identity_low_orders(small_grid, policy, trunc):
    Z = sample_brownian(small_grid, 1.0, 1.0, policy, 3)
    one = d_iterated(PathBundle((Z,), "Y"), trunc)
    assert np.array_equal(one.values, Z.values[: len(one.values)])
    B = sample_brownian(small_grid, 0.3, 1.0, policy, 4)
    two_rec = d_iterated(PathBundle((B, Z), "Y"), trunc, "recursive")
    two_closed = d_iterated(PathBundle((B, Z), "Y"), trunc, "closed_form")
    direct = d_map(Z, B, trunc)
    assert np.allclose(two_rec.values, direct.values, rtol=0, atol=0)
    assert np.allclose(two_closed.values, direct.values, rtol=0, atol=1e-12)


def test_script_d_ordering_and_labels(small_grid, policy, trunc):
    drifts = (0.8, 1.5, 2.4)
    paths = tuple(
        sample_brownian(small_grid, d, 1.0, policy, policy.stream_id(1, ROLE_SEED, j))
        for j, d in enumerate(drifts)
    )
    out = script_d(PathBundle(paths, "Y"), trunc)
    assert out.space_tag == "X"
    assert out.drifts == drifts
    assert np.array_equal(out.paths[0].values, paths[0].values[: len(out.paths[0].values)])
    for lo, hi in zip(out.paths, out.paths[1:]):
        assert increment_ordering_margin(lo, hi) >= -1e-12


def test_script_d_common_drift_shift_equivariance(policy):
    """Adding a common linear drift to every input shifts every output by the
    same linear function (checked pathwise on a small grid)."""
    g = GridSpec(-1.0, 25.0, 1e-2)
    tr = TruncationPolicy()
    nu = 0.5
    ts = g.times()
    drifts = (0.8, 1.6)
    paths = [
        sample_brownian(g, d, 1.0, policy, policy.stream_id(2, ROLE_SEED, j))
        for j, d in enumerate(drifts)
    ]
    shifted = [
        SampledPath(g, p.values + nu * ts, drift_label=p.drift_label + nu) for p in paths
    ]
    out = script_d(PathBundle(tuple(paths), "Y"), tr)
    out_s = script_d(PathBundle(tuple(shifted), "Y"), tr)
    n = len(out.paths[0].values)
    for a, b in zip(out.paths, out_s.paths):
        assert np.abs(b.values - (a.values + nu * ts[:n])).max() < 1e-9


def test_exchange_identity_exact(small_grid, policy, trunc):
    B1 = sample_brownian(small_grid, 0.0, 1.0, policy, policy.stream_id(3, ROLE_SEED, 0))
    Z1 = sample_brownian(small_grid, 0.8, 1.0, policy, policy.stream_id(3, ROLE_SEED, 1))
    Z2 = sample_brownian(small_grid, 1.7, 1.0, policy, policy.stream_id(3, ROLE_SEED, 2))
    rep = exchange_identity_check(Z1, Z2, B1, trunc)
    assert rep.max_rel_discrepancy <= 1e-12


def test_exchange_identity_linear_paths_exact(trunc):
    g = GridSpec(-1.0, 20.0, 1e-2)
    ts = g.times()
    B1 = path_on(g, 0.0 * ts, 0.0)
    Z1 = path_on(g, 1.0 * ts, 1.0)
    Z2 = path_on(g, 2.0 * ts, 2.0)
    rep = exchange_identity_check(Z1, Z2, B1, trunc)
    assert rep.max_rel_discrepancy == 0.0


def test_intertwining_exact(small_grid, policy, trunc):
    B1 = sample_brownian(small_grid, 0.0, 1.0, policy, policy.stream_id(4, ROLE_SEED, 0))
    Zs = [
        sample_brownian(small_grid, d, 1.0, policy, policy.stream_id(4, ROLE_SEED, j + 1))
        for j, d in enumerate((0.8, 1.6, 2.5))
    ]
    rep = intertwining_check(B1, Zs, trunc)
    assert rep.max_rel_discrepancy <= 1e-12


def test_grid_engine_defect_is_measurable(small_grid, policy):
    """The grid-vertex engine misses off-grid crossing points, so composing
    its transforms violates the exchange identity at a level far above
    roundoff; the exact engine is what the identity checks must use."""
    tr = TruncationPolicy()
    B1 = sample_brownian(small_grid, 0.0, 1.0, policy, policy.stream_id(5, ROLE_SEED, 0))
    Z1 = sample_brownian(small_grid, 0.8, 1.0, policy, policy.stream_id(5, ROLE_SEED, 1))
    Z2 = sample_brownian(small_grid, 1.7, 1.0, policy, policy.stream_id(5, ROLE_SEED, 2))
    B2 = r_map(Z1, B1, tr)
    lhs = d_map(d_map(Z2, B2, tr), d_map(Z1, B1, tr), tr)
    rhs = d_map(d_map(Z2, Z1, tr), B1, tr)
    defect = np.abs(lhs.values - rhs.values).max()
    assert defect > 1e-8  # genuinely beyond roundoff at dt = 1e-3


def test_multiline_step_moments(policy):
    g = GridSpec(-1.0, 40.0, 1e-2)
    tr = TruncationPolicy()
    drifts = (0.7, 1.5)
    trials = 4000
    i0, i1 = g.index_of(0.0), g.index_of(1.0)
    incs = np.empty((trials, 2))
    for k in range(trials):
        paths = tuple(
            sample_brownian(g, d, 1.0, policy, policy.stream_id(k, ROLE_SEED, j))
            for j, d in enumerate(drifts)
        )
        driver = sample_brownian(g, 0.0, 1.0, policy, policy.stream_id(k, ROLE_DRIVER, 0))
        out = multiline_step(PathBundle(paths, "Y"), driver, tr)
        assert out.space_tag == "Y"
        incs[k] = [p.values[i1] - p.values[i0] for p in out.paths]
    for j, lam in enumerate(drifts):
        se = incs[:, j].std(ddof=1) / np.sqrt(trials)
        assert abs(incs[:, j].mean() - lam) < 4 * se
        v = incs[:, j].var(ddof=1)
        assert abs(v - 1.0) < 4 * v * np.sqrt(2.0 / trials)
    # independence probe between component increments
    corr = np.corrcoef(incs[:, 0], incs[:, 1])[0, 1]
    assert abs(corr) < 4.0 / np.sqrt(trials)


def test_busemann_chain_step_preserves_ordering(small_grid, policy, trunc):
    drifts = (0.8, 1.5, 2.4)
    paths = tuple(
        sample_brownian(small_grid, d, 1.0, policy, policy.stream_id(6, ROLE_SEED, j))
        for j, d in enumerate(drifts)
    )
    state = script_d(PathBundle(paths, "Y"), trunc)
    driver = sample_brownian(small_grid, 0.0, 1.0, policy, policy.stream_id(6, ROLE_DRIVER, 0))
    out = busemann_chain_step(state, driver, trunc)
    assert out.space_tag == "X"
    for lo, hi in zip(out.paths, out.paths[1:]):
        assert increment_ordering_margin(lo, hi) >= -1e-12
    # driver is dominated by every component: B <=inc D(Z, B)
    drv = driver.values[: len(out.paths[0].values)]
    assert (np.diff(out.paths[0].values) - np.diff(drv)).min() >= -1e-12


def test_translation_equivariance(policy):
    """Shifting inputs in time by a grid multiple shifts outputs identically
    on overlapping grid points (away from the horizon)."""
    g = GridSpec(-5.0, 30.0, 1e-2)
    tr = TruncationPolicy()
    Z = sample_brownian(g, 1.0, 1.0, policy, 77)
    B = sample_brownian(g, 0.0, 1.0, policy, 78)
    shift = 200  # grid steps
    d = d_map(Z, B, tr).values
    # shifted inputs: repin so value(0) = 0 for the shifted paths
    zs = Z.values[shift:] - Z.values[shift]
    bs = B.values[shift:] - B.values[shift]
    g2 = GridSpec(-5.0, 30.0 - shift * g.step, g.step)
    d2 = d_map(SampledPath(g2, zs, 1.0), SampledPath(g2, bs, 0.0), tr).values
    n2 = len(d2)
    interior = n2 - int(0.2 * n2)
    lhs = np.diff(d[shift: shift + interior])
    rhs = np.diff(d2[:interior])
    assert np.abs(lhs - rhs).max() < 1e-9


def test_drift_preservation_slopes(policy):
    g = GridSpec(-1.0, 200.0, 1e-2)
    tr = TruncationPolicy()
    Z = sample_brownian(g, 1.0, 1.0, policy, 81)
    B = sample_brownian(g, 0.0, 1.0, policy, 82)
    d = d_map(Z, B, tr)
    r = r_map(Z, B, tr)
    t_hi = 180.0
    i = g.index_of(t_hi)
    assert abs(d.values[i] / t_hi - 1.0) < 0.1
    assert abs(r.values[i] / t_hi - 0.0) < 0.1


def test_truncation_guards(policy):
    g = GridSpec(-1.0, 50.0, 1e-2)
    # declared gap too small for the horizon at the default margin
    Z = sample_brownian(g, 0.05, 1.0, policy, 90)
    B = sample_brownian(g, 0.0, 1.0, policy, 91)
    with pytest.raises(TruncationError):
        d_map(Z, B, TruncationPolicy())
    # an adversarial pair without labels trips the argmax guard
    ts = g.times()
    up = SampledPath(g, ts * 0.0, None)
    ramp = SampledPath(g, -ts, None)  # B - Z = +ts grows to the boundary
    with pytest.raises(TruncationError):
        q_map(ramp, up, TruncationPolicy())
