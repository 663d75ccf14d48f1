"""Smoke test for the fosdnn_py extension module.

Run after `pip install --no-build-isolation crates/python`:

    python crates/python/python/smoke_test.py
"""

import os
import tempfile

import fosdnn_py as f


def main():
    assert f.count_params(10, 32, 7) == 4641
    assert f.count_params(25, 32, 7) == 5121
    assert abs(f.true_function("s1", 1, [0.0, 0.0, 0.0], 0.0) - (2.718281828459045 ** -2 + 1.0)) < 1e-12

    train, test, c = f.generate_dataset("s1", model=1, xtype=1, n_train=60, n_test=20, grid_size=25, seed=7)
    print(f"generated {train!r} and {test!r}, c = {c:.4f}")

    cfg = f.TrainConfig(width=16, depth=4, epochs=40, learning_rate=3e-3, seed=1)
    net = f.train(train, cfg)
    net_err = f.mispe(net.predict_dataset(test), test)
    lin = f.fit_linear(train, k=8)
    lin_err = f.mispe(lin.predict_dataset(test), test)
    print(f"{net!r}: MISPE {net_err:.4f}; {lin!r}: MISPE {lin_err:.4f}")
    assert net.loss_trace[-1] < net.loss_trace[0]

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        net.save(path)
        again = f.Model.load(path)
        assert again.predict_dataset(test) == net.predict_dataset(test)
        cov, resp = os.path.join(tmp, "c.csv"), os.path.join(tmp, "r.csv")
        test.save(cov, resp)
        assert f.Dataset.load(cov, resp).y() == test.y()

    report = f.replicate_experiment("s1", model=2, method="linear", reps=2, n_train=50, n_test=20, seed=3)
    print("linear S1/M2/X1 report:", report)
    assert report["spec"] == "S1/M2/X1" and len(report["per_replicate"]) == 2

    try:
        f.Dataset([[0.0]], [0.5, 0.2], [[1.0, 2.0]])
    except ValueError as e:
        print("rejected non-increasing grid:", e)
    else:
        raise AssertionError("non-increasing grid accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
