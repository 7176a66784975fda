"""End-to-end smoke test for the _metasgd extension module."""

import json
import os
import shutil
import tempfile

import _metasgd as m


def test_canonical_config():
    text = m.canonical_config('{"experiment": "sine", "seed": 4}')
    cfg = json.loads(text)
    assert cfg["experiment"] == "sine"
    assert cfg["seed"] == 4
    assert cfg["train.iterations"] == 60000
    assert cfg["model.layers"] == [1, 40, 40, 1]
    assert m.canonical_config(text) == text
    assert m.config_hash(text) == m.config_hash('{"experiment": "sine", "seed": 4}')

    try:
        m.canonical_config('{"bogus_key": 1}')
    except ValueError as e:
        assert "bogus_key" in str(e)
    else:
        raise AssertionError("unknown key was accepted")


def test_gradcheck():
    results = m.gradcheck()
    assert [r["suite"] for r in results] == ["ops", "losses", "meta", "rl-meta", "quadratic"]
    assert all(r["pass"] for r in results)

    injected = m.gradcheck(inject="mul")
    ops = next(r for r in injected if r["suite"] == "ops")
    assert not ops["pass"]
    assert ops["worst"] == "mul"


def test_train_eval_roundtrip():
    out = tempfile.mkdtemp(prefix="metasgd_smoke_")
    try:
        config = json.dumps({
            "experiment": "sine",
            "meta_learner": "metasgd",
            "seed": 3,
            "output_dir": os.path.join(out, "run"),
            "train.iterations": 20,
            "train.meta_batch": 2,
            "eval.curves": 3,
            "eval.repeats": 2,
            "eval.grid": 10,
        })
        first = m.run_train(config)
        with open(first["eval_summary"]) as f:
            summary = f.read()
        assert summary.startswith("setting,mean,ci95_half\n")

        second = m.run_train(config)
        with open(second["eval_summary"]) as f:
            assert f.read() == summary
        with open(first["checkpoint"], "rb") as f:
            ck = f.read()
        with open(second["checkpoint"], "rb") as f:
            assert f.read() == ck

        rows = m.evaluate_checkpoint(config, first["checkpoint"])
        assert [r["setting"] for r in rows] == ["5-shot", "10-shot", "20-shot"]
        for row in rows:
            assert row["mean"] > 0.0

        curve = m.export_curve(first["checkpoint"], task_seed=5)
        lines = curve.strip().split("\n")
        assert lines[0] == "x,y_true,y_pre,y_post"
        assert len(lines) == 1 + 10
        assert lines[1].split(",")[0] == "-5"

        arrays = m.checkpoint_arrays(first["checkpoint"])
        dims, values = arrays["param.theta.w0"]
        assert dims == [1, 40]
        assert len(values) == 40
        assert "meta.config" in arrays
    finally:
        shutil.rmtree(out, ignore_errors=True)


def main():
    test_canonical_config()
    test_gradcheck()
    test_train_eval_roundtrip()
    print("python smoke: all checks passed")


if __name__ == "__main__":
    main()
