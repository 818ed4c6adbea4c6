"""Fast built-in property checks behind ``oceanforge selftest``."""

from __future__ import annotations

import math
import sys
import traceback

import numpy as np


def _check_ais(rng):
    from . import ais

    for _ in range(300):
        rep = ais.PositionReport(
            msg_type=int(rng.integers(1, 4)), mmsi=int(rng.integers(0, 10**9)),
            sog_raw=int(rng.integers(0, 1024)), lon_raw=int(rng.integers(-108_000_000, 108_000_001)),
            lat_raw=int(rng.integers(-54_000_000, 54_000_001)), cog_raw=int(rng.integers(0, 3600)),
            true_heading=int(rng.choice([*range(360), 511])),
        )
        bits = ais.encode_position_report(rep)
        payload, fill = bits.to_payload()
        assert ais.decode_position_report(ais.decode_sixbit(payload, fill)) == rep
    rep = ais.decode_position_report(ais.encode_position_report(
        ais.PositionReport(msg_type=3, lon_raw=-74070840, lat_raw=29261820, cog_raw=186, true_heading=285)))
    assert abs(rep.x + 123.4514) < 1e-4 and abs(rep.y - 48.7697) < 1e-4
    assert (rep.sog, rep.cog, rep.true_heading) == (0.0, 18.6, 285)
    assert ais.format_ais_timestamp(ais.parse_ais_timestamp("20200715T123456.789Z")) == "20200715T123456.789Z"


def _check_kernels(rng):
    from . import kernels

    backends = kernels.available_backends()
    payload = "".join(rng.choice(list("0123456789:;<=>?@ABCDEFGHIJKLMNOPQRSTUVW`abcdefghijklmnopqrstuvw"), 40))
    unpacked = {name: m.sixbit_unpack(payload.encode()) for name, m in backends.items()}
    assert len(set(unpacked.values())) == 1
    scores = np.round(rng.standard_normal((12, 9)), 1)
    correct = (rng.random((12, 9)) < 0.3).astype(np.uint8)
    correct[:, 0] = 1
    ranks = [np.asarray(m.pessimistic_ranks(scores, correct)) for m in backends.values()]
    assert all(np.array_equal(ranks[0], r) for r in ranks)


def _check_dsp(rng):
    from .dsp import DspConfig, extract_patches, log_mel, patch_grid

    cfg = DspConfig()
    t = np.arange(5 * cfg.sample_rate) / cfg.sample_rate
    spec = log_mel(np.sin(2 * np.pi * 1000 * t), cfg)
    assert spec.values.shape == (1024, 64)
    assert patch_grid(1024, 64, 16, 10) == (101, 5)
    assert extract_patches(spec.values, 16, 16).count == 256


def _check_model(rng):
    import torch

    from .model import LoraDense, lora_dense

    g = torch.Generator().manual_seed(0)
    base = torch.nn.Linear(16, 8)
    layer = LoraDense(base, 2, 4.0, g)
    x = torch.randn(5, 16, generator=g)
    with torch.no_grad():
        assert torch.equal(layer(x), base(x))
        layer.B.normal_(generator=g)
        want = lora_dense(x, base.weight, layer.A, layer.B, 4.0) + base.bias
        assert torch.allclose(layer(x), want, rtol=1e-5, atol=1e-6)


def _check_loss(rng):
    import torch

    from .train import contrastive_loss

    e = torch.ones(4, 8, dtype=torch.float64)
    assert abs(contrastive_loss(e, e, 0.07).item() - math.log(4)) < 1e-12
    a = torch.randn(6, 8, dtype=torch.float64)
    assert contrastive_loss(a, a, 0.01).item() < contrastive_loss(a, a.roll(1, 0), 0.01).item()


def _check_metrics(rng):
    from .evalkit import SimilarityMatrix, recall_at_k

    for _ in range(50):
        m, n = rng.integers(1, 10), rng.integers(1, 10)
        scores = np.round(rng.standard_normal((m, n)), 0)
        labels = rng.integers(0, n, m)
        sim = SimilarityMatrix.from_labels(scores, list(labels), list(range(n)))
        r = recall_at_k(sim)
        assert r["R@1"] <= r["R@3"] <= r["R@5"] <= 100
        for i in range(m):
            own = scores[i, labels[i]]
            rank = 1 + int(np.sum(np.delete(scores[i], labels[i]) >= own))
            assert (rank == 1) == (sim.ranks()[i] == 1)
    eye = SimilarityMatrix.from_labels(np.eye(5), list(range(5)), list(range(5)))
    assert recall_at_k(eye) == {"R@1": 100.0, "R@3": 100.0, "R@5": 100.0}


CHECKS = [
    ("ais round trip and fixture", _check_ais),
    ("kernel backend parity", _check_kernels),
    ("dsp shapes and patch counts", _check_dsp),
    ("lora identity and merge", _check_model),
    ("contrastive loss anchors", _check_loss),
    ("recall monotonicity and ranks", _check_metrics),
]


def run_selftest(verbose: bool = True, seed: int = 0) -> list[str]:
    failures = []
    for name, fn in CHECKS:
        try:
            fn(np.random.default_rng(seed))
            status = "ok"
        except Exception:  # noqa: BLE001 - report every failing check
            failures.append(name)
            status = "FAIL"
            if verbose:
                traceback.print_exc(file=sys.stderr)
        if verbose:
            print(f"{status:4} {name}")
    return failures
