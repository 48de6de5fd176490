"""Independent reference computations used by the tests.

Nothing here imports the model builders; values are derived by enumeration
or closed form so they can check the MILP formulations from outside.
"""
from __future__ import annotations

import numpy as np

from vppsched.battery import dcr_of, degradation_cost

STEP = 0.25


def _hour_table(inp, t, soc_grid):
    """Best single-hour value for every (start SOC, end SOC) pair on the grid."""
    b, pr, act = inp.battery, inp.prices, inp.activation
    pbar, pw_cap, eta = b.p_max, inp.wind_capacity, b.eta
    r = inp.scenarios.trajectories[:, t]
    w = inp.scenarios.weights
    pbs = np.arange(-pbar, pbar + 1e-9, STEP)
    Gs = np.arange(0.0, 2 * pbar + 1e-9, STEP)
    sp, sn, pb, G = np.meshgrid(soc_grid, soc_grid, pbs, Gs, indexing="ij")
    rho, mu_up, mu_dw = act.rho[t], act.mu_up[t], act.mu_dw[t]
    g_up, g_dw = rho * G, (1 - rho) * G
    e_dd, e_dc = np.maximum(pb, 0), np.maximum(-pb, 0)
    net = mu_up * g_up - mu_dw * g_dw
    e_sup, e_sdw = np.maximum(net, 0), np.maximum(-net, 0)
    R = (sn - sp) - (eta * (e_dc + e_sdw) - (e_dd + e_sup))
    gr_dw = np.where(R > 0, R / eta, 0.0)
    gr_up = np.where(R < 0, -R, 0.0)
    ok = (e_sup <= pbar + 1e-9) & (e_sdw <= pbar + 1e-9)
    ok &= (g_up + gr_up + pb <= pbar + 1e-9) & (g_dw + gr_dw - pb <= pbar + 1e-9)
    ok &= (gr_up <= 2 * pbar + 1e-9) & (gr_dw <= 2 * pbar + 1e-9)

    x = r[:, None, None, None, None] + gr_up - gr_dw  # wind net of set-aside, per scenario
    lo = np.maximum(0.0, (x - pw_cap).max(axis=0))
    hi = np.minimum(pw_cap, (x + pw_cap).min(axis=0))
    lo = np.where(gr_up > 0, np.maximum(lo, x.max(axis=0)), lo)
    hi = np.where(gr_dw > 0, np.minimum(hi, x.min(axis=0)), hi)
    ok &= lo <= hi + 1e-9

    def wind_value(p_w):
        dev = x - p_w
        imb = pr.imb_up[t] * np.maximum(dev, 0) - pr.imb_dw[t] * np.maximum(-dev, 0)
        return pr.da[t] * p_w + np.tensordot(w, imb, axes=1)

    cands = [lo, hi] + [np.clip(x[s], lo, hi) for s in range(len(w))]
    best_w = np.max([wind_value(c) for c in cands], axis=0)

    val = (pr.da[t] * pb + pr.srr[t] * G + pr.sre_up[t] * e_sup - pr.sre_dw[t] * e_sdw + best_w)
    if inp.curves is not None:
        n = len(soc_grid)
        deg = np.array([[degradation_cost(a, dcr_of(a, c, b.soc_max), inp.curves) for c in soc_grid]
                        for a in soc_grid])
        val = val - deg.reshape(n, n, 1, 1)
    val = np.where(ok, val, -np.inf)
    return val.max(axis=(2, 3))


def brute_force_grm(inp) -> float:
    """Optimum over SOC paths on a 0.25 MWh grid through the initial SOC (all hours first stage)."""
    b = inp.battery
    assert inp.first_stage == inp.T, "brute force covers single-stage horizons only"
    below = int(np.floor((inp.soc_initial - b.soc_min) / STEP + 1e-9))
    above = int(np.floor((b.soc_max - inp.soc_initial) / STEP + 1e-9))
    grid = inp.soc_initial + STEP * np.arange(-below, above + 1)
    V = np.full(len(grid), -np.inf)
    V[below] = 0.0
    for t in range(inp.T):
        H = _hour_table(inp, t, grid)
        V = np.max(V[:, None] + H, axis=0)
    return float(V.max())


def grid_step_bound(inp) -> float:
    """Generous objective change from moving every hourly action by one grid step."""
    pr = inp.prices
    per_hour = (4 * np.abs(pr.da) + 4 * (np.abs(pr.imb_up) + np.abs(pr.imb_dw)) + 4 * np.abs(pr.srr)
                + 4 * (np.abs(pr.sre_up) + np.abs(pr.sre_dw)))
    bound = STEP * per_hour.sum()
    if inp.curves is not None:
        c = inp.curves
        bound += inp.T * (c.c_min.max() + c.slope.max() + (c.c_min + c.slope).max())
    return float(bound)


def kmeans_1d_two_clusters(values):
    """Hand k-means for separable 1-D data: split at the largest gap."""
    v = np.sort(np.asarray(values, float))
    k = int(np.argmax(np.diff(v))) + 1
    return v[:k].mean(), v[k:].mean(), k / len(v)


class PinnedCostOracle:
    """Cost the degradation rows allow, found by enumerating every (u, delta) assignment.

    The rows are read off a built model, so this checks the formulation as
    written rather than re-deriving it. The smallest admissible cost is
    returned, which is what a profit-maximizing solve would pick.
    """

    def __init__(self, model, blk, soc_prev_var, soc_var):
        import itertools
        self.names = {"soc_prev": soc_prev_var.index, "soc": soc_var.index, "dcr": blk["dcr"].index,
                      "u": blk["u"].index, "cost": blk["cost"].index}
        self.delta_idx = [d.index for d in blk["delta"]]
        n = model.num_vars
        rows = model.constraints
        self.A = np.zeros((len(rows), n))
        for i, c in enumerate(rows):
            for j, a in c.expr.terms.items():
                self.A[i, j] = a
        self.sense = np.array([c.sense for c in rows])
        self.rhs = np.array([c.rhs for c in rows])
        J = len(self.delta_idx)
        self.assign = np.array(list(itertools.product((0.0, 1.0), repeat=J + 1)))  # u, delta...

    def __call__(self, soc_prev, dcr, soc_max, tol=1e-9):
        soc = soc_prev - dcr * soc_max
        k = len(self.assign)
        X = np.zeros((k, self.A.shape[1]))
        X[:, self.names["soc_prev"]] = soc_prev
        X[:, self.names["soc"]] = soc
        X[:, self.names["dcr"]] = dcr
        X[:, self.names["u"]] = self.assign[:, 0]
        X[:, self.delta_idx] = self.assign[:, 1:]
        ci = self.names["cost"]
        a_cost = self.A[:, ci]
        lhs = X @ self.A.T  # cost column is zero in X
        slack = self.rhs[None, :] - lhs  # a_cost * cost (sense) slack
        lo = np.zeros(k)
        hi = np.full(k, np.inf)
        ok = np.ones(k, bool)
        for i in range(len(self.rhs)):
            a, s = a_cost[i], self.sense[i]
            if a == 0:
                if s == "<=":
                    ok &= lhs[:, i] <= self.rhs[i] + tol
                elif s == ">=":
                    ok &= lhs[:, i] >= self.rhs[i] - tol
                else:
                    ok &= np.abs(lhs[:, i] - self.rhs[i]) <= tol
                continue
            bound = slack[:, i] / a
            upper = (s == "<=") == (a > 0)
            if s == "=":
                lo, hi = np.maximum(lo, bound), np.minimum(hi, bound)
            elif upper:
                hi = np.minimum(hi, bound)
            else:
                lo = np.maximum(lo, bound)
        ok &= lo <= hi + tol
        if not ok.any():
            return None
        return float(lo[ok].min())


def brute_force_edm_energy(inp, step=0.001):
    """Best single-hour redispatch with no reserves, scanning battery output on a fine grid.

    Returns (objective, battery output, downward day-ahead imbalance) at the
    best grid point. Degradation is left out, so use inputs without curves.
    """
    assert inp.curves is None and inp.commitment.g_up == 0 and inp.commitment.g_dw == 0
    b, c = inp.battery, inp.commitment
    sched = c.p_w + c.p_b
    best = (-np.inf, None, None)
    for pb in np.arange(-b.p_max, b.p_max + step / 2, step):
        soc = inp.soc_prev - pb if pb >= 0 else inp.soc_prev - b.eta * pb
        if soc < b.soc_min - 1e-12 or soc > b.soc_max + 1e-12:
            continue
        pw = min(inp.wind, inp.wind_capacity)  # more wind never hurts when the up price is non-negative
        dev = pw + pb - sched
        obj = (inp.da_price * sched + inp.imb_up_price * max(dev, 0) - inp.imb_dw_price * max(-dev, 0)
               + inp.soc_value * (soc - c.soc))
        if obj > best[0]:
            best = (obj, pb, max(-dev, 0.0))
    return best
