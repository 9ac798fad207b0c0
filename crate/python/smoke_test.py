"""Smoke test for the rgp extension module.

Build the module and put it on the path, for example:

    cargo build --release -p rgp-python
    cp target/release/librgp.so python/rgp.so
    python3 python/smoke_test.py
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import rgp  # noqa: E402


def main():
    assert "motion" in rgp.corruption_kinds()

    adj = rgp.normalized_adjacency([(0, 1)], 2)
    assert all(abs(v - 0.5) < 1e-12 for row in adj for v in row)
    assert rgp.knn_graph([(0, 0), (1, 0), (5, 5)], 1) == [(0, 1), (1, 2)]
    assert rgp.quadratic_kappa([[3, 0], [0, 2]]) == 1.0

    res = rgp.fit_denoise([[1.0], [0.5], [0.0]], rgp.normalized_adjacency([(0, 1), (1, 2)], 3),
                          hidden_width=8, max_iters=20)
    assert res["iterations_run"] == len(res["loss_history"])
    assert res["loss_history"][-1] <= res["loss_history"][0]

    data = rgp.SynthDataset(n_per_class=3, width=256, height=256, seed=1)
    assert len(data) == 15
    pixels, w, h = data.image(0)
    assert len(pixels) == w * h * 3
    hued = rgp.corrupt(pixels, w, h, "hue", 3, seed=2)
    assert len(hued) == len(pixels) and hued != pixels

    graphs = [data.graph(i, patch_side=64, k=4) for i in range(len(data))]
    assert graphs[0].n_nodes == 16 and len(graphs[0].features[0]) == rgp.FEATURE_DIM

    model, report = rgp.train(graphs, epochs=15, learning_rate=1e-2, seed=3,
                              gcn_dims=[rgp.FEATURE_DIM, 16], n_heads=2, n_keep=8)
    assert len(report["loss_history"]) == 15
    assert report["accuracy"] >= 0.8, report

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.rgp")
        model.save(path)
        again = rgp.Model.load(path, n_heads=2, n_keep=8)
        assert again.logits(graphs[4]) == model.logits(graphs[4])
        graphs[4].save(os.path.join(tmp, "g.pgr"))
        assert rgp.PatchGraph.load(os.path.join(tmp, "g.pgr")).edges == graphs[4].edges

    ev = model.evaluate(graphs, denoiser=True)
    assert sum(map(sum, ev["confusion"])) == len(graphs)
    print("smoke test passed: train accuracy %.3f, denoised accuracy %.3f" % (report["accuracy"], ev["accuracy"]))


if __name__ == "__main__":
    main()
