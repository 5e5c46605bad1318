"""Exercises the Python bindings end to end. Run after installing crates/python."""

import json
import math

import geoflow


def main():
    ids = [e["id"] for e in geoflow.examples()]
    assert "ex2-explicit" in ids and "ex8-implicit" in ids, ids

    e = geoflow.Expr("sin(x)*y^2")
    assert str(e.differentiate("y")) and abs(e.differentiate("x").evaluate({"x": 0.0, "y": 3.0}) - 9.0) < 1e-15
    assert e.variables() == ["x", "y"]

    ex2 = geoflow.Example.get("ex2-explicit")
    for name, rep in ex2.verify_brackets(samples=1000).items():
        assert rep["max_relative"] <= 1e-9, (name, rep)
    assert ex2.criterion()["verdict"] == "obstructed"

    traj = ex2.geodesic([1.0, 1.0, 0.7, -0.3])
    assert traj["termination"] == "completed"
    assert max(d["max_rel"] for d in traj["drift"]) <= 1e-8
    assert traj["reversal_error"] <= 1e-6

    ex0 = geoflow.Example.get("ex0-family", {"n": 3})
    assert all(r["max_relative"] <= 1e-9 for r in ex0.verify_brackets().values())

    conformal = geoflow.Metric2D.conformal("exp(x)")
    pts = geoflow.sample_points(50, (-1.0, 1.0), (-1.0, 1.0), seed=3)
    assert conformal.criterion(pts)["verdict"] == "consistent_with_linear_integral"
    assert conformal.bracket_residual(["0", "1"], pts)["max_relative"] == 0.0

    sol = geoflow.Example.get("ex1-implicit").solve()
    assert all(s == "converged" for s in sol["status"]), sol["status"]
    assert max(sol["residuals"]) <= 1e-11
    study = geoflow.Example.get("ex6-implicit").convergence_study()
    assert min(study["orders"]) >= 1.9, study

    sym = geoflow.Example.get("ex5-implicit").symmetry_residual()
    assert sym["evaluated"] == 500 and sym["max_relative"] <= 1e-10

    assert geoflow.commutator(3, ["P", "R", "S"], [0.3, -1.2, 2.0], {"P": 0.7, "R": -2.5, "S": 1.1}) <= 1e-12
    v = geoflow.quasi_linear_matrix(4)
    assert str(v[3][3]) in ("4 - 2*a2", "-2*a2 + 4"), str(v[3][3])
    r1, r2 = geoflow.riemann_invariants_n2(1.0, 1.0)
    assert math.isclose(r1, -0.5) and math.isclose(r2, 0.5)

    spec = json.loads(ex2.to_json())
    spec["integrals"] = [{"name": "F", "coefficients": ["1", "0"]}]
    bad = geoflow.Example.from_json(json.dumps(spec))
    assert bad.verify_brackets()["F"]["max_relative"] > 1e-6

    try:
        geoflow.Example.get("nope")
    except ValueError as err:
        assert "available" in str(err)
    else:
        raise AssertionError("unknown id accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
