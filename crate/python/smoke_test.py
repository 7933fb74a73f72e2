"""Smoke test for the twinsim extension module.

Build and install first:  pip install ./crates/py  (or maturin develop -m crates/py/Cargo.toml)
"""

import math

import twinsim


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    g = twinsim.Generator([[-1.0, 1.0], [2.0, -2.0]])
    pi = g.stationary()
    assert close(pi[0], 2 / 3, 1e-12) and close(pi[1], 1 / 3, 1e-12), pi

    p = g.transition_matrix(1.0)
    assert close(p[0][0], 2 / 3 + math.exp(-3) / 3, 1e-10), p

    sc = twinsim.Scenario.reference(delta=0.0)
    assert close(sc.total_event_rate(), 16 / 3, 1e-12)
    assert close(sc.pptp_probability(1.0), 3 / 16, 1e-12)

    c1 = sc.expected_cost("c1", 60.0, form="paper_diagonal")
    assert close(c1, 56 / 81, 1e-10), c1

    res = sc.simulate("prtp", 5.0, costs=["c1", "c2"], horizon=200.0, reps=20, seed=3)
    mean, se = res["rate"]
    assert abs(mean - 5.0) <= 4 * se + 1e-9, res
    assert set(res["costs"]) == {"c1", "c2"}

    sol = sc.solve_constrained(1.0, cost="c1")
    assert sol["achieved_rate"] <= 1.0 + 1e-9, sol
    assert sol["n_states"] == 20, sol
    assert sol["residual"] <= 1e-8, sol

    try:
        twinsim.Generator([[-1.0, 2.0], [1.0, -1.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("invalid generator accepted")

    print("twinsim smoke test passed")


if __name__ == "__main__":
    main()
