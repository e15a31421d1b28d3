"""Acceptance suite: one test per required criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
timing lines.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import pytest

from drivemon.classify import probe_predict
from drivemon.cli import main
from drivemon.embedstore import (
    build_dataset_view,
    filter_view,
    load_manifest,
    read_embedding_bank,
    write_embedding_bank,
    write_manifest,
)
from drivemon.evalharness import (
    ExperimentConfig,
    leave_drivers_out,
    reduce_training_by_drivers,
    run_experiment,
    split_drivers_kfold,
)
from drivemon.fixtures import build_fixture
from drivemon.metrics import (
    FoldMetrics,
    aggregate_folds,
    confusion_matrix,
    per_class_f1,
    top1_accuracy,
)
from drivemon.sampling import assemble_clip
from drivemon.temporal import majority_vote
from drivemon.train import Objective, TrainConfig, fit_probe, lbfgs_minimize, objective_from_arrays

from conftest import make_event, make_row
from test_temporal import pred as make_pred


def report_pass(name: str, elapsed: float, budget: float) -> None:
    print(f"PASS {name}: {elapsed:.2f}s (budget {budget:.0f}s)")
    assert elapsed < budget, f"{name} exceeded its {budget}s budget: {elapsed:.2f}s"


def test_format_round_trip_1000_banks(tmp_path):
    rng = np.random.default_rng(100)
    path = tmp_path / "bank.bank"
    start = time.perf_counter()
    for trial in range(1000):
        dim = int(rng.integers(1, 1025))
        count = int(rng.integers(0, 501))
        ids = [f"t{trial}_{i}" for i in range(count)]
        vectors = rng.standard_normal((count, dim), dtype=np.float32)
        write_embedding_bank(ids, vectors, dim, path)
        bank = read_embedding_bank(path)
        assert bank.dim == dim
        assert bank.ids == tuple(ids)
        assert bank.vectors.tobytes() == vectors.tobytes()
    report_pass("format round-trip (1000 banks, bit-exact)", time.perf_counter() - start, 10.0)


def test_clip_assembly_first_window_and_property():
    start = time.perf_counter()
    # first-sample rule: 16 copies of frame 1, then frames 2..15
    for n in (15, 16, 30, 100, 300):
        window = assemble_clip(make_event(n), 1)
        positions = [f.frame_index for f in window.members]
        assert positions == [0] * 16 + list(range(1, 15))

    rng = np.random.default_rng(101)
    for n in range(1, 401):
        event = make_event(n)
        for t in {1, n, int(rng.integers(1, n + 1))}:
            window = assemble_clip(event, t)
            assert len(window.members) == 30
            positions = [f.frame_index for f in window.members]
            assert all(a <= b for a, b in zip(positions, positions[1:]))
            expected = [min(max(p, 1), n) - 1 for p in range(t - 15, t + 15)]
            assert positions == expected
    report_pass("clip assembly (first window + property N in [1,400])", time.perf_counter() - start, 5.0)


def test_gradient_correctness_100_instances():
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        c = int(rng.integers(2, 5))
        d = int(rng.integers(2, 7))
        n = int(rng.integers(1, 11))
        x = rng.normal(size=(n, d))
        y = rng.integers(0, c, size=n)
        obj = objective_from_arrays(x, y, c, l2_lambda=float(rng.uniform(0, 0.1)))
        theta = rng.normal(size=c * d + c)
        _, analytic = obj.eval(theta)
        numeric = np.zeros_like(theta)
        h = 1e-5
        for i in range(theta.size):
            plus, minus = theta.copy(), theta.copy()
            plus[i] += h
            minus[i] -= h
            numeric[i] = (obj.eval(plus)[0] - obj.eval(minus)[0]) / (2 * h)
        scale = np.maximum(np.abs(analytic), np.maximum(np.abs(numeric), 1e-8))
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / scale)))
    assert worst < 1e-4, f"max relative gradient error {worst:.2e}"
    report_pass(f"gradient correctness (100 instances, worst {worst:.1e})", time.perf_counter() - start, 30.0)


def test_optimizer_quadratic_rosenbrock_monotone():
    start = time.perf_counter()
    quad = Objective(eval=lambda x: (float(x @ x), 2 * x))
    x_opt, _ = lbfgs_minimize(quad, np.array([3.0, -4.0]), TrainConfig(grad_tol=1e-10))
    assert np.linalg.norm(x_opt) < 1e-8

    def rosen(x):
        f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
        g = np.array(
            [
                -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1 - x[0]),
                200.0 * (x[1] - x[0] ** 2),
            ]
        )
        return float(f), g

    x_opt, _ = lbfgs_minimize(
        Objective(eval=rosen), np.array([-1.2, 1.0]), TrainConfig(grad_tol=1e-10, max_iters=2000)
    )
    assert np.abs(x_opt - 1.0).max() < 1e-6

    rng = np.random.default_rng(103)
    for _ in range(50):
        c = int(rng.integers(2, 5))
        d = int(rng.integers(2, 6))
        n = int(rng.integers(5, 40))
        x = rng.normal(size=(n, d))
        y = rng.integers(0, c, size=n)
        obj = objective_from_arrays(x, y, c, l2_lambda=1e-3)
        _, trace = lbfgs_minimize(obj, np.zeros(c * d + c), TrainConfig())
        assert (np.diff(trace) <= 0).all(), "loss trace increased"
    report_pass("optimizer (quadratic, Rosenbrock, 50 monotone traces)", time.perf_counter() - start, 60.0)


def _write_dataset(tmp_path: Path, rows, ids, vectors, dim):
    manifest = write_manifest(rows, tmp_path / "manifest.csv")
    bank = write_embedding_bank(ids, np.stack(vectors), dim, tmp_path / "frames.bank")
    return manifest, bank


def test_end_to_end_synthetic_separation_and_leakage(tmp_path):
    start = time.perf_counter()
    rng = np.random.default_rng(104)

    # driver-independent separable clusters: 10 classes, 14 drivers, 7 folds
    n_classes, n_drivers, frames = 10, 14, 8
    dim = 16
    class_dirs = rng.normal(size=(n_classes, dim))
    class_dirs = 6.0 * class_dirs / np.linalg.norm(class_dirs, axis=1, keepdims=True)
    offsets = 0.4 * rng.normal(size=(n_drivers, dim))
    rows, ids, vecs = [], [], []
    for d in range(n_drivers):
        for c in range(n_classes):
            video = f"d{d:02d}_v{c}"
            for i in range(frames):
                rid = f"{video}_f{i}"
                ids.append(rid)
                vecs.append((class_dirs[c] + offsets[d] + 0.25 * rng.normal(size=dim)).astype(np.float32))
                rows.append(
                    make_row(rid, driver=f"d{d:02d}", video=video, event=f"{video}_e", idx=i, label=f"cls{c}")
                )
    sep_dir = tmp_path / "separable"
    sep_dir.mkdir()
    manifest, bank = _write_dataset(sep_dir, rows, ids, vecs, dim)
    cfg = ExperimentConfig(
        model="single_frame",
        seed=17,
        manifest_path=manifest,
        bank_path=bank,
        split_mode="kfold",
        k=7,
        train=TrainConfig(max_iters=300),
    )
    report = run_experiment(cfg)
    assert len(report.folds) == 7
    assert report.mean_top1 >= 0.99, f"separable mean top1 {report.mean_top1:.3f}"

    # driver-confounded construction: each driver's class directions are a
    # cyclic shift of the other's, so cross-driver transfer must fail while
    # held-in accuracy stays high
    n_classes = 4
    rows, ids, vecs = [], [], []
    for d in range(2):
        for c in range(n_classes):
            video = f"cd{d}_v{c}"
            for i in range(frames):
                rid = f"{video}_f{i}"
                center = np.zeros(n_classes)
                center[(c + d) % n_classes] = 6.0
                ids.append(rid)
                vecs.append((center + 0.1 * rng.normal(size=n_classes)).astype(np.float32))
                rows.append(
                    make_row(rid, driver=f"cd{d}", video=video, event=f"{video}_e", idx=i, label=f"cls{c}")
                )
    conf_dir = tmp_path / "confounded"
    conf_dir.mkdir()
    manifest, bank = _write_dataset(conf_dir, rows, ids, vecs, n_classes)
    cfg = ExperimentConfig(
        model="single_frame",
        seed=18,
        manifest_path=manifest,
        bank_path=bank,
        split_mode="kfold",
        k=2,
        train=TrainConfig(max_iters=300),
    )
    cross = run_experiment(cfg)
    assert cross.mean_top1 <= 0.25, f"cross-driver top1 {cross.mean_top1:.3f}"

    view = build_dataset_view(load_manifest(manifest), read_embedding_bank(bank))
    own = filter_view(view, driver_id="cd0")
    params = fit_probe(own, TrainConfig(max_iters=300))
    preds = [probe_predict(v, params).class_index for v in own.embedding_matrix()]
    held_in = float((np.array(preds) == own.label_indices()).mean())
    assert held_in >= 0.95, f"held-in top1 {held_in:.3f}"
    report_pass(
        f"end-to-end synthetic (separable {report.mean_top1:.3f}, "
        f"cross-driver {cross.mean_top1:.3f}, held-in {held_in:.3f})",
        time.perf_counter() - start,
        120.0,
    )


def test_split_invariants_1000_manifests():
    rng = np.random.default_rng(105)
    start = time.perf_counter()
    from conftest import make_bank

    for _ in range(1000):
        n_drivers = int(rng.integers(2, 25))
        rows, ids = [], []
        for d in range(n_drivers):
            for i in range(2):
                rid = f"d{d}_r{i}"
                ids.append(rid)
                rows.append(make_row(rid, driver=f"d{d}", video=f"v{d}", idx=i))
        view = build_dataset_view(rows, make_bank(ids, dim=2))
        drivers = view.drivers()

        k = int(rng.integers(1, n_drivers + 1))
        plan = split_drivers_kfold(drivers, k, seed=int(rng.integers(0, 2**32)))
        sizes = [len(f) for f in plan.folds]
        assert max(sizes) - min(sizes) <= 1
        seen = [d for fold in plan.folds for d in fold]
        assert sorted(seen) == sorted(drivers)  # covers every driver exactly once
        for fold in plan.folds:
            train, test = leave_drivers_out(view, set(fold))
            assert not set(train.drivers()) & set(test.drivers())

        frac = float(rng.uniform(0.05, 1.0))
        reduced = reduce_training_by_drivers(view, frac, seed=int(rng.integers(0, 2**32)))
        per_driver: dict[str, int] = {}
        for r in reduced.rows:
            per_driver[r.driver_id] = per_driver.get(r.driver_id, 0) + 1
        assert all(v == 2 for v in per_driver.values()), "driver partially included"
    report_pass("split invariants (1000 manifests)", time.perf_counter() - start, 20.0)


def test_vote_and_metric_oracles_1000_instances():
    rng = np.random.default_rng(106)
    start = time.perf_counter()

    for _ in range(1000):
        n, c = int(rng.integers(1, 20)), int(rng.integers(2, 6))
        raw = rng.dirichlet(np.ones(c), size=n)
        preds = [make_pred(int(np.argmax(p)), p) for p in raw]
        got = majority_vote(preds)
        # brute-force oracle: counts, then summed probability, then index
        counts = [0] * c
        sums = [0.0] * c
        for p in preds:
            counts[p.class_index] += 1
            for j in range(c):
                sums[j] += float(p.probs[j])
        best = max(counts)
        tied = [j for j in range(c) if counts[j] == best]
        best_sum = max(sums[j] for j in tied)
        expected = min(j for j in tied if sums[j] == best_sum)
        assert got.class_index == expected
        assert got.vote_counts.sum() == n

    for _ in range(1000):
        n, c = int(rng.integers(1, 50)), int(rng.integers(2, 6))
        labels = rng.integers(0, c, size=n)
        preds = rng.integers(0, c, size=n)
        table = tuple(f"c{i}" for i in range(c))
        cm = confusion_matrix(preds, labels, table)
        cells: dict[tuple[int, int], int] = {}
        for y, p in zip(labels, preds):
            cells[(y, p)] = cells.get((y, p), 0) + 1
        for (y, p), count in cells.items():
            assert cm.counts[y, p] == count
        assert cm.total == n
        assert top1_accuracy(preds, labels) == pytest.approx(np.trace(cm.counts) / cm.total)

        f1, macro = per_class_f1(cm)
        supported = []
        for j in range(c):
            col = int(cm.counts[:, j].sum())
            row = int(cm.counts[j, :].sum())
            tp = int(cm.counts[j, j])
            p_j = tp / col if col else 0.0
            r_j = tp / row if row else 0.0
            expected_f1 = 2 * p_j * r_j / (p_j + r_j) if p_j + r_j else 0.0
            assert f1[j] == pytest.approx(expected_f1, abs=1e-12)
            if row:
                supported.append(expected_f1)
        assert macro == pytest.approx(sum(supported) / len(supported))

    for _ in range(1000):
        n = int(rng.integers(1, 9))
        values = rng.uniform(size=n)
        macros = rng.uniform(size=n)
        folds = [
            FoldMetrics(
                top1=float(v),
                per_class_f1=np.array([m]),
                macro_f1=float(m),
                confusion=confusion_matrix([0], [0], ("a",)),
            )
            for v, m in zip(values, macros)
        ]
        mean, var, macro_mean = aggregate_folds(folds)
        m = sum(values) / n
        assert mean == pytest.approx(m, abs=1e-12)
        assert var == pytest.approx(sum((x - m) ** 2 for x in values) / n, abs=1e-12)
        assert macro_mean == pytest.approx(sum(macros) / n, abs=1e-12)
    report_pass("vote/metric oracles (1000 instances each)", time.perf_counter() - start, 20.0)


def test_cmd_run_determinism_on_bundled_fixture(tmp_path):
    start = time.perf_counter()
    fixture = build_fixture(tmp_path / "fixture")
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert main(["run", "--config", str(fixture / "single_frame.ini"), "--out", str(out1)]) == 0
    assert main(["run", "--config", str(fixture / "single_frame.ini"), "--out", str(out2)]) == 0

    kept1 = [l for l in (out1 / "report.json").read_text().splitlines() if "wall_clock_sec" not in l]
    kept2 = [l for l in (out2 / "report.json").read_text().splitlines() if "wall_clock_sec" not in l]
    assert kept1 == kept2

    for rel in sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file()):
        if rel.name == "report.json":
            continue
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes(), f"{rel} differs"

    doc = json.loads((out1 / "report.json").read_text())
    assert "wall_clock_sec" in doc
    report_pass("cmd_run determinism (byte-identical modulo timing)", time.perf_counter() - start, 60.0)
