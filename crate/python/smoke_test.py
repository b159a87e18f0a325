"""Smoke test for the wpal_py extension module.

Run after `pip install --no-build-isolation -e crates/python` (or
`maturin develop -m crates/python/Cargo.toml`).
"""

import math
import tempfile
from pathlib import Path

import wpal_py as w


def main() -> None:
    # Metrics and losses on hand-checkable inputs.
    assert w.mean_accuracy([[1], [0], [0], [0]], [[1], [1], [0], [0]]) == 0.75
    acc, prec, rec, f1 = w.example_based([[0, 1, 1]], [[1, 1, 0]])
    assert (round(acc, 12), prec, rec, f1) == (round(1 / 3, 12), 0.5, 0.5, 0.5)
    loss = w.weighted_cross_entropy([1.0], [0.5], [0.1])
    assert abs(loss - math.log(2) / 0.2) < 1e-9
    assert abs(w.cross_entropy([1.0, 0.0], [0.5, 0.5]) - 2 * math.log(2)) < 1e-12
    pave, nave, rs = w.estimate_relationship([[0.8], [0.2]], [1.0, 0.0])
    assert (pave, nave) == ([0.8], [0.2]) and abs(rs[0] - 4.0) < 1e-12

    # A tiny end-to-end pass: data, a short training run, evaluation,
    # statistics and localization.
    data = w.Dataset.generate(48, seed=3)
    assert len(data) == 48 and len(data.attribute_names()) == 8
    config = w.ModelConfig(num_attributes=8, input_size=32, seed=2)
    assert config.bin_count == 896
    model = w.Model(config)
    log = model.train(data, epochs=1, learning_rate=0.003)
    assert len(log) == 1 and math.isfinite(log[0][1])
    report = dict(model.evaluate(data))
    assert 0.0 <= report["mA"] <= 1.0

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "model.ckpt"
        model.save(str(path))
        again = w.Model.load(str(path))
        pixels, shape = data.image(0)
        # Full-size images work too; FSPP makes the output length size-free.
        assert again.predict(pixels, shape) == model.predict(pixels, shape)

    stats = w.StatsTable.estimate(model, data)
    assert stats.to_csv().startswith("attribute,bin,branch,PAve,NAve,RS")
    ranked = stats.rank_bins(0, 5)
    assert len(ranked) == 5 and all(a[4] >= b[4] for a, b in zip(ranked, ranked[1:]))
    prob, dmap, (h, wd), centroids = w.localize(model, stats, pixels, shape, 0, k=1)
    assert len(dmap) == h * wd == shape[1] * shape[2]
    assert len(centroids) == 1 and 0 <= prob <= 1
    print("wpal_py smoke test passed")


if __name__ == "__main__":
    main()
