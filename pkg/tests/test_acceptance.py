"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines appear in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest
import torch

from oceanforge import ais, bpe, corpus, dsp, evalkit, synth
from oceanforge.checkpoint import frozen_checksum
from oceanforge.model import DualEncoder, LoraDense, ModelConfig
from oceanforge.train import PairDataset, Trainer, TrainConfig, contrastive_loss, finite_diff_check

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def random_report(rng) -> ais.PositionReport:
    return ais.PositionReport(
        msg_type=int(rng.integers(1, 4)), repeat=int(rng.integers(0, 4)), mmsi=int(rng.integers(0, 10**9)),
        nav_status=int(rng.integers(0, 16)), rot=int(rng.integers(-128, 128)), sog_raw=int(rng.integers(0, 1024)),
        accuracy=int(rng.integers(0, 2)), lon_raw=int(rng.integers(-108_000_000, 108_000_001)),
        lat_raw=int(rng.integers(-54_000_000, 54_000_001)), cog_raw=int(rng.integers(0, 3600)),
        true_heading=int(rng.choice([*range(360), 511])), second=int(rng.integers(0, 64)),
        maneuver=int(rng.integers(0, 4)), spare=int(rng.integers(0, 8)), raim=int(rng.integers(0, 2)),
        radio=int(rng.integers(0, 1 << 19)),
    )


def test_criterion_1_ais_round_trip():
    rng = np.random.default_rng(1)
    reports = [random_report(rng) for _ in range(10_000)]
    with Timer() as t:
        mismatches = 0
        for rep in reports:
            payload, fill = ais.encode_position_report(rep).to_payload()
            mismatches += ais.decode_position_report(ais.decode_sixbit(payload, fill)) != rep
        fixture = ais.decode_position_report(ais.encode_position_report(
            ais.PositionReport(msg_type=3, lon_raw=-74070840, lat_raw=29261820, sog_raw=0, cog_raw=186,
                               true_heading=285)))
    fixture_ok = (abs(fixture.x - -123.4514) <= 1e-4 and abs(fixture.y - 48.7697) <= 1e-4
                  and fixture.sog == 0.0 and abs(fixture.cog - 18.6) < 1e-9 and fixture.true_heading == 285)
    record(1, mismatches == 0 and fixture_ok and t.elapsed < 5.0,
           f"{10_000 - mismatches}/10000 exact round trips, fixture x={fixture.x:.4f} y={fixture.y:.4f} "
           f"sog={fixture.sog} cog={fixture.cog} hdg={fixture.true_heading}, {t.elapsed:.2f}s (<5s)")


def test_criterion_2_dsp():
    with Timer() as t:
        cfg = dsp.DspConfig()
        tt = np.arange(5 * cfg.sample_rate) / cfg.sample_rate
        samples = np.sin(2 * np.pi * 1000.0 * tt)
        spec = dsp.log_mel(samples, cfg)
        mag = dsp.stft_magnitude(samples, cfg)
        interior = mag[1:-1]  # edge frames see the reflect-padding seam
        peak_bins = set(np.argmax(interior, axis=1).tolist())
        summed_peak = int(np.argmax(mag.sum(axis=0)))
        n505 = dsp.extract_patches(spec.values, 16, 10).count
        n256 = dsp.extract_patches(spec.values, 16, 16).count
    ok = (spec.values.shape == (1024, 64) and peak_bins == {64} and summed_peak == 64
          and n505 == 505 and n256 == 256 == 1024 * 64 // 16 ** 2 and t.elapsed < 10.0)
    record(2, ok, f"shape {spec.values.shape}, 1 kHz peak bins {sorted(peak_bins)} (summed {summed_peak}), "
                  f"patches S=10: {n505}, S=16: {n256}, {t.elapsed:.2f}s (<10s)")


SMALL = ModelConfig(spec_frames=64, spec_mels=32, patch_size=16, patch_stride=16, vocab_size=300, seed=3)


def test_criterion_3_lora_contracts():
    torch.set_num_threads(1)
    rng = np.random.default_rng(3)
    model = DualEncoder(ModelConfig(seed=0))
    vocab = bpe.bpe_train(corpus.query_list(), 512)
    tokens = torch.as_tensor(vocab.encode_batch(["Cargo", "Tug boat", "Tanker at anchor"]))
    specs = [rng.standard_normal((1024, 64)).astype(np.float32) for _ in range(2)]
    from oceanforge.model import audio_inputs

    patches, valid = audio_inputs(specs, [334, 1024], model.cfg)
    with torch.no_grad():
        adapted = (model.encode_text(tokens), model.encode_audio(patches, valid))
        model.set_lora_enabled(False)
        frozen = (model.encode_text(tokens), model.encode_audio(patches, valid))
        model.set_lora_enabled(True)
    identical = all(torch.equal(a, b) for a, b in zip(adapted, frozen))

    worst = 0.0
    g = torch.Generator().manual_seed(0)
    for _ in range(100):
        d, k = (int(v) for v in rng.integers(4, 64, size=2))
        r = int(rng.integers(1, min(d, k) // 2 + 1))
        base = torch.nn.Linear(k, d).double()
        layer = LoraDense(base, r, float(rng.uniform(0.5, 16)), g).double()
        with torch.no_grad():
            layer.B.normal_(generator=g)
            x = torch.randn(8, k, generator=g, dtype=torch.float64)
            y = layer(x)
            y_merged = x @ layer.merged_weight().T + base.bias
        worst = max(worst, ((y - y_merged).norm() / y.norm()).item())

    small = DualEncoder(SMALL)
    before = frozen_checksum(small)
    cats = ["Cargo", "Tug", "Tanker"] * 3
    data = PairDataset([rng.standard_normal((64, 32)) for _ in cats], [64] * len(cats), cats, cats)
    result = Trainer(small, bpe.bpe_train(cats, 300), TrainConfig(base_lr=1e-3, max_steps=500, epochs=10_000)).fit(data)
    after = frozen_checksum(small)
    record(3, identical and worst <= 1e-6 and before == after and result.steps == 500,
           f"zero-B forward bit-exact: {identical}; merged vs adapted max rel {worst:.1e} (<=1e-6) over 100; "
           f"W0 checksum unchanged after {result.steps} steps: {before == after}")


def test_criterion_4_loss_correctness():
    from test_train import loop_loss

    rng = np.random.default_rng(4)
    with Timer() as t:
        worst_oracle = 0.0
        for _ in range(100):
            n, d = int(rng.integers(2, 17)), int(rng.integers(1, 33))
            a, b = (torch.from_numpy(rng.standard_normal((n, d))) for _ in range(2))
            tau = float(rng.uniform(0.05, 2.0))
            worst_oracle = max(worst_oracle, abs(contrastive_loss(a, b, tau).item() - loop_loss(a, b, tau)))
        e = torch.ones(4, 16, dtype=torch.float64)
        uniform = contrastive_loss(e, e, 0.07).item()

        model = DualEncoder(SMALL).double()
        with torch.no_grad():
            for m in model.lora_modules():
                m.B.normal_(0.0, 0.1, generator=torch.Generator().manual_seed(1))
        cats = ["Cargo", "Tug", "Tanker", "Fishing"]
        tr = Trainer(model, bpe.bpe_train(cats, 300), TrainConfig())
        data = PairDataset([rng.standard_normal((64, 32)) for _ in cats], [64, 50, 40, 20], cats, cats)
        batch = tr.batch_tensors(data, range(4))
        params = [p for _, p in model.trainable_parameters()]
        fd = finite_diff_check(lambda: tr.loss(*batch), params, eps=1e-6, max_coords=16, seed=0)
    ok = worst_oracle <= 1e-10 and uniform == math.log(4) and fd <= 1e-4 and t.elapsed < 30.0
    record(4, ok, f"max |loss - double loop| {worst_oracle:.1e} (<=1e-10); uniform N=4 {uniform!r} vs ln4 "
                  f"{math.log(4)!r}; finite-diff max rel {fd:.1e} (<=1e-4) over {len(params)} tensors; "
                  f"{t.elapsed:.1f}s (<30s)")


def test_criterion_5_toy_end_to_end():
    torch.set_num_threads(1)
    with Timer() as t:
        train = synth.toy_dataset(20, seed=1)
        held_out = synth.toy_dataset(10, seed=2)
        prompts = corpus.query_list()
        vocab = bpe.bpe_train(train.captions + prompts, 512)
        model = DualEncoder(synth.toy_model_config(seed=0))
        result = Trainer(model, vocab, synth.toy_train_config(seed=0)).fit(train)
        audio = evalkit.embed_audio(model, held_out.specs, held_out.n_frames)
        prompt_emb = evalkit.embed_text(model, vocab, prompts)
        report = evalkit.evaluate_embeddings(audio, held_out.categories, prompt_emb, prompts, prompts, prompt_emb,
                                             mode="retrieval", query_ids=held_out.segment_ids)
    ok = (len(train) == 60 and len(held_out) == 30 and result.steps <= 500 and report.recall["R@1"] == 100.0
          and report.top1 == 100.0 and t.elapsed < 120.0)
    record(5, ok, f"{len(train)} train / {len(held_out)} eval pairs, {result.steps} steps, loss "
                  f"{result.initial_loss:.3f} -> {result.final_loss:.3f}, R@1 {report.recall['R@1']:.1f}, "
                  f"zero-shot top-1 {report.top1:.1f}, {t.elapsed:.1f}s (<120s, 1 thread)")


def test_criterion_6_metric_oracle():
    from test_evalkit import oracle_recall, random_matrix

    rng = np.random.default_rng(6)
    agree = monotone = 0
    for i in range(1000):
        sim = random_matrix(rng, tie_rich=i % 2 == 0)
        r = evalkit.recall_at_k(sim)
        agree += all(r[f"R@{k}"] == oracle_recall(sim.scores, sim.correct, k) for k in (1, 3, 5))
        monotone += r["R@1"] <= r["R@3"] <= r["R@5"]
    record(6, agree == monotone == 1000, f"{agree}/1000 match the sort oracle (half tie-rich), "
                                         f"{monotone}/1000 monotone")


def test_criterion_7_corpus_conservation():
    rng = np.random.default_rng(7)
    conserved = 0
    for _ in range(300):
        n = int(rng.integers(0, 60))
        stamps = np.sort(rng.integers(0, 200_000, n))
        records = [ais.DecodedAisRecord(x=0.0, y=0.0, sog=None, cog=None, true_heading=511,
                                        ais_timestamp=int(s), id=int(rng.integers(1, 5)), msg_type=1,
                                        ship_type_code=int(rng.choice([0, 30, 52, 70, 99])))
                   for s in stamps]
        slots = rng.choice(40, size=int(rng.integers(0, 20)), replace=False)
        segments = [corpus.AudioSegmentRef(f"{s}.wav", int(s) * 5000, hydrophone_id=str(rng.choice(["H0", "H1"])))
                    for s in slots]
        pairs, skips = corpus.pair_audio_with_ais(records, segments, int(rng.integers(0, 6000)),
                                                  bool(rng.integers(0, 2)))
        conserved += len(pairs) + skips.total == len(records)

    exact = 0
    codes = [c for c in range(256) if corpus.map_shiptype(c) != corpus.INDETERMINATE]
    for _ in range(1000):
        rep = random_report(rng)
        r = ais.to_record(rep, 1, 0, int(rng.choice(codes)))
        parsed = corpus.parse_caption(corpus.render_caption(r, "fine"))
        exact += parsed == {"category": corpus.map_shiptype(r.ship_type_code), "x": round(r.x, 4),
                            "y": round(r.y, 4), "true_heading": r.true_heading,
                            "sog": None if r.sog is None else round(r.sog, 1)}

    rows, want = [], {}
    for i in range(120):
        cat = ["Cargo", "Tug", "Tanker", "Fishing"][i % 4]
        dur = int(rng.integers(1, 20_000))
        segment = corpus.AudioSegmentRef(f"{i}.wav", i * 20_000, dur)
        rows.append(corpus.AudioTextPair(segment, cat, cat, "coarse"))
        rows.append(corpus.AudioTextPair(segment, f"A {cat} vessel", cat, "fine"))
        count, total = want.get(cat, (0, 0))
        want[cat] = (count + 1, total + dur)
    stats = corpus.corpus_stats(rows)
    got = {c: (s.count, s.duration_ms) for c, s in stats.categories.items()}
    ok = conserved == 300 and exact == 1000 and got == want
    record(7, ok, f"conservation {conserved}/300 fixtures; fine captions exact {exact}/1000; "
                  f"stats totals match hand sums: {got == want}")


def test_criterion_8_determinism(tmp_path):
    from oceanforge.cli import main

    synth.write_toy_corpus(tmp_path / "a", 4, seed=1)
    synth.write_toy_corpus(tmp_path / "b", 2, seed=2, hydrophone="H1", mmsi_base=317_000_000)
    cfg = tmp_path / "toy.toml"
    cfg.write_text('seed = 0\n[corpus]\ngranularity = "both"\neval_fraction = 0.25\n'
                   '[model]\ntau_init = 1.0\ntrainable_heads = ["audio"]\n'
                   '[train]\nbase_lr = 3e-3\nmax_steps = 40\nepochs = 1000\n')

    def sh(*argv):
        assert main([str(a) for a in argv]) == 0, argv

    for d, cid in (("a", "toyA"), ("b", "toyB")):
        sh("decode", "--in", tmp_path / d / "ais.txt", "--out", tmp_path / f"{cid}.rec.jsonl")
        sh("build", "--ais", tmp_path / f"{cid}.rec.jsonl", "--audio", tmp_path / d / "audio_index.jsonl",
           "--config", cfg, "--corpus-id", cid, "--out", tmp_path / f"{cid}.jsonl")

    def pipeline(run):
        out = tmp_path / run
        out.mkdir()
        for cid in ("toyA", "toyB"):
            sh("featurize", "--manifest", tmp_path / f"{cid}.jsonl", "--config", cfg, "--out", out / f"{cid}.bin")
        sh("train", "--manifest", tmp_path / "toyA.jsonl", "--features", out / "toyA.bin", "--config", cfg,
           "--out", out / "ckpt.bin")
        sh("eval", "--mode", "retrieval", "--ckpt", out / "ckpt.bin", "--manifest", tmp_path / "toyA.jsonl",
           "--features", out / "toyA.bin", "--out", out / "retrieval.json")
        sh("eval", "--mode", "zeroshot", "--ckpt", out / "ckpt.bin", "--manifest", tmp_path / "toyB.jsonl",
           "--features", out / "toyB.bin", "--out", out / "zeroshot.json")
        return out

    first, second = pipeline("run1"), pipeline("run2")
    names = ["toyA.bin", "toyB.bin", "ckpt.bin", "ckpt.bin.epochs.csv", "retrieval.json", "zeroshot.json"]
    same = {n: (first / n).read_bytes() == (second / n).read_bytes() for n in names}
    record(8, all(same.values()), "byte-identical across two seeded runs: "
                                  + ", ".join(f"{n}={'yes' if v else 'NO'}" for n, v in same.items()))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
