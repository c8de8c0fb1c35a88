"""Smoke test for the enertree Python extension.

Build and install first:  pip install --no-build-isolation -e crates/python
"""

import math
import os
import sys
import tempfile

import enertree


def check(cond, what):
    if not cond:
        print(f"FAIL {what}")
        sys.exit(1)
    print(f"ok   {what}")


def main():
    check(len(enertree.FEATURE_NAMES) == 12, "twelve features")
    check(math.isclose(enertree.alpha(0.0), 1.0), "alpha at zero logit")
    check(math.isclose(enertree.alpha(math.atanh(0.5)), 1.05), "alpha at atanh(0.5)")
    check(math.isclose(enertree.error_pct(110.0, 100.0), 10.0), "error_pct")
    kwh, usd = enertree.cost_of_queries(161 * 3.6e6, 1)
    check(math.isclose(kwh, 161.0) and abs(usd - 21.24) <= 0.01, "query cost")
    samples = [(0.17 * i, 120.0, 0.5) for i in range(10)]
    check(math.isclose(enertree.integrate_power(samples), 102.0), "power integration")

    trees = enertree.synthesize("biased", seed=3, layers=1)
    check(len(trees) == 6 * 32, "synthetic grid size")
    t = trees[0]
    check(t.validate() == [], "synthetic tree validates")
    again = enertree.ModelTree.from_json(t.to_json())
    check(again.to_json() == t.to_json(), "json round trip")

    leaves = {n: 1.0 for n in t.nodes_at_level("ml")}
    sums = enertree.predict_sum(t, leaves)
    check(math.isclose(sums[t.nodes_at_level("model")[0]], len(leaves)), "predict_sum")

    model = enertree.Model.train(trees, regressor="end2end", epochs=30)
    preds = model.predict(t)
    check(set(preds) == set(t.ground_truth()), "prediction covers every node")
    leaf_json, tree_json = model.to_json()
    reloaded = enertree.Model.from_json(leaf_json, tree_json)
    check(reloaded.predict(t) == preds, "model reload reproduces predictions")
    check(len(t.render(preds).splitlines()) == t.node_count(), "render lists every node")

    report = enertree.evaluate(trees, regressor="predicted_sum")
    check(report["average"]["model"] is not None, "loo evaluation")

    with tempfile.TemporaryDirectory() as d:
        code = enertree.run_cli(["-o", os.path.join(d, "cost"), "cost", "--energy-per-query", "1", "--queries", "10"])
        check(code == 0, "cli cost")
        code = enertree.run_cli(["no-such-command"])
        check(code == 1, "cli usage error")
    print("smoke test passed")


if __name__ == "__main__":
    main()
