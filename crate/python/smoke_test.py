"""Smoke test for the hjb_exec extension module.

Build the module first (see python/run_smoke.sh):

    cargo build --release -p hjb-exec-py
    cp target/release/libhjb_exec.so python/hjb_exec.so
    python3 python/smoke_test.py
"""

import math
import sys

import hjb_exec


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    print(f"hjb_exec {hjb_exec.__version__}")

    # Hamiltonian closed forms.
    approx(hjb_exec.hamiltonian_h(-2.0, 1.0), 4.0, 1e-12)
    approx(hjb_exec.hamiltonian_h(-4.0, 0.5), 32.0, 1e-10)
    approx(hjb_exec.hamiltonian_htilde(3.0, 0.5), 4.0, 1e-10)
    approx(hjb_exec.feedback_rate(-4.0, 1.0, 1.0, 0.5), -16.0, 1e-10)
    try:
        hjb_exec.feedback_rate(0.5, 1.0, 1.0, 1.0)
        raise AssertionError("positive z must be rejected")
    except ValueError:
        pass

    # Default configuration validates; the reference penalty is below the
    # declared-cap threshold (reported, not fatal).
    cfg = hjb_exec.Config()
    bounds_ok, penalty_ok, threshold, _messages = hjb_exec.validate(cfg)
    assert bounds_ok
    assert not penalty_ok and threshold > 1000.0

    # Constant-coefficient solve reproduces the closed form
    # z(t) = -coth((T - t) + arccoth 2).
    cfg = hjb_exec.Config.from_toml(
        """
[model]
horizon = 1.0
impact_exponent = 1.0
risk_aversion = 1.0
penalty = 2.0
initial_inventory = 1.0
initial_price = 1.0

[coefficients]
kappa = { kind = "constant", value = 1.0 }
sigma = { kind = "constant", value = 1.0 }
alpha = { kind = "constant", value = 0.0 }
beta = { kind = "constant", value = 1.0 }
kappa_lo = 1.0
kappa_hi = 1.0
sigma_lo = 1.0
sigma_hi = 1.0

[grid]
ny = 41
nt = 400
"""
    )
    sol = hjb_exec.solve(cfg)
    assert sol.converged, sol
    arccoth2 = 0.5 * math.log(3.0)
    exact = -1.0 / math.tanh(1.0 + arccoth2)
    approx(sol.z_at(0.0, 0.0), exact, 1e-4)
    rows = sol.z_grid()
    assert len(rows) == 401 and len(rows[0]) == 41
    assert all(v == -2.0 for v in rows[-1])

    # Bounding curves bracket the solution seedwise.
    times, lower, upper = hjb_exec.bounding_curves(cfg)
    assert len(times) == len(lower) == len(upper)
    assert lower[-1] == -2.0 and upper[-1] == -2.0
    assert all(lo <= up + 1e-12 for lo, up in zip(lower, upper))

    # A small experiment on the factor-driven preset: the adaptive strategy
    # beats the constant-rate benchmark, and reruns are bit-identical.
    cfg = hjb_exec.Config()
    cfg.set_grid(101, 300)
    cfg.set_paths(400, 42)
    exp = hjb_exec.simulate(cfg)
    assert exp.mean_criterion > exp.twap_mean_criterion, exp
    assert abs(exp.wealth_mean - (exp.cash_mean + exp.inventory_mean * 40.0)) < 1.0
    exp2 = hjb_exec.simulate(cfg)
    assert exp.mean_criterion == exp2.mean_criterion
    assert exp.cash_mean == exp2.cash_mean

    # One illustrative trajectory: liquidation signs hold samplewise.
    times, _y, _s, nu, q, x, w = hjb_exec.sample_trajectory(cfg, 0)
    assert len(times) == len(q) == len(nu)
    assert all(v <= 0.0 for v in nu)
    assert all(v >= 0.0 for v in q)
    assert all(abs(w[i] - (x[i] + q[i] * _s[i])) < 1e-9 for i in range(len(q)))

    # Penalty ladder: z at the origin strictly decreasing.
    cfg.set_paths(200, 42)
    rows = hjb_exec.sweep_penalties(cfg, [3.0, 10.0, 30.0])
    z_vals = [r[1] for r in rows]
    assert z_vals[0] > z_vals[1] > z_vals[2], z_vals

    print("smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
