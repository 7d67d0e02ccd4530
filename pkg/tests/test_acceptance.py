"""Primary acceptance criteria, one test each. A summary line per criterion
is printed at the end of the pytest run (see conftest.py)."""

import itertools
import time
from fractions import Fraction

import numpy as np
import pytest

from relprune.fnn import (
    ModelParams,
    compact_model,
    forward,
    init_model,
    loss_and_grads,
    masked_forward,
)
from relprune.harness import ExperimentConfig, equalize_and_ber, run_pipeline, simulate_frame
from relprune.lrp import conservation_check, explain, lrp_backward
from relprune.phy import ChannelProfile, FrameConfig, build_frame, realize_channel, transmit
from relprune.prune import flops, flops_from_widths, reduction

criterion = pytest.mark.criterion


def note(request, text):
    request.node.user_properties.append(("detail", text))


@criterion("C1 FLOPs exactness: 7289 / 4409 / 2740")
def test_flops_exactness(request):
    got = [flops_from_widths(w) for w in ([104, 15, 15, 15, 104], [8, 15, 15, 15, 104], [8, 14, 11, 9, 104])]
    note(request, f"got {got}")
    assert got == [7289, 4409, 2740]


@criterion("C2 reduction exactness (+-0.005)")
def test_reduction_exactness(request):
    cases = {2740: 62.41, 4409: 39.51, 3539: 51.45, 4726: 35.16, 4112: 43.59}
    got = {c: reduction(c, 7289) for c in cases}
    note(request, f"got {list(got.values())}")
    for c, want in cases.items():
        assert abs(got[c] - want) <= 0.005, c


@criterion("C3 inverse reference widths: 44 inputs -> 5489, 24 inputs -> 4889")
def test_reference_widths(request):
    got = [flops_from_widths([n, 15, 15, 15, 104]) for n in (44, 24)]
    # and the inverse: the only input counts hitting those totals
    inverse = [[n for n in range(1, 105) if flops_from_widths([n, 15, 15, 15, 104]) == c] for c in (5489, 4889)]
    note(request, f"got {got}, inverse {inverse}")
    assert got == [5489, 4889]
    assert inverse == [[44], [24]]


@criterion("C4 LRP conservation on bias-free 8-6-4 (<1e-6 at eps=1e-9, monotone leakage, <1 s)")
def test_lrp_conservation(request):
    t0 = time.perf_counter()
    model = init_model([8, 6, 4], 0)
    for b in model.biases:
        b[:] = 0.0
    x = np.random.default_rng(2).standard_normal((20, 8))
    leak = {e: conservation_check(explain(model, x, epsilon=e)) for e in (1e-9, 1e-6, 1e-3)}
    elapsed = time.perf_counter() - t0
    note(request, f"max leakage {leak[1e-9].max():.2e} at 1e-9, "
                  f"{leak[1e-6][0]:.2e} at 1e-6, {leak[1e-3][0]:.2e} at 1e-3, {elapsed * 1e3:.1f} ms")
    assert leak[1e-9].max() < 1e-6
    assert leak[1e-3][0] > leak[1e-6][0]
    assert elapsed < 1.0


@criterion("C5 LRP brute force: single layer, weights {-2,-1,1,2}^2, unit inputs, eps=1e-9")
def test_lrp_brute_force(request):
    eps = 1e-9
    worst = 0.0
    for w1, w2 in itertools.product([-2, -1, 1, 2], repeat=2):
        model = ModelParams([2, 1], [np.array([[w1], [w2]], float)], [np.zeros(1)])
        x = np.ones(2)
        got = lrp_backward(model, [x, x @ model.weights[0]], np.array([1.0]), eps).R[0]
        # hand evaluation in exact rationals: z_ij / (sum z + eps sign(sum z))
        s = w1 + w2
        denom = Fraction(s) + Fraction(1, 10**9) * (1 if s >= 0 else -1)
        want = np.array([float(Fraction(w1) / denom), float(Fraction(w2) / denom)])
        worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want)))))
    note(request, f"worst scaled error {worst:.1e} over 16 layers")
    assert worst < 1e-9


@criterion("C6 gradient check on seeded 8-4-8 (relative 1e-4)")
def test_gradient_check(request):
    rng = np.random.default_rng(0)
    model = init_model([8, 4, 8], 7)
    for b in model.biases:
        b[:] = rng.standard_normal(b.shape) * 0.3
    X, Y = rng.standard_normal((16, 8)), rng.standard_normal((16, 8))
    _, gW, gb = loss_and_grads(model, X, Y)
    h, worst = 1e-5, 0.0
    for analytic, params in ((gW, model.weights), (gb, model.biases)):
        for g, p in zip(analytic, params):
            num = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss_and_grads(model, X, Y)[0]
                p[idx] = old - h
                down = loss_and_grads(model, X, Y)[0]
                p[idx] = old
                num[idx] = (up - down) / (2 * h)
            worst = max(worst, np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-12))
    note(request, f"worst relative error {worst:.1e}")
    assert worst < 1e-4


@criterion("C7 mask/compaction equivalence over 100 seeded triples (1e-12)")
def test_mask_compaction(request):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(100):
        sizes = [int(rng.integers(4, 40)), *map(int, rng.integers(2, 16, size=rng.integers(1, 4))),
                 int(rng.integers(2, 20))]
        model = init_model(sizes, trial)
        for b in model.biases:
            b[:] = rng.standard_normal(b.shape) * 0.3
        model.in_mean = rng.standard_normal(sizes[0])
        model.in_std = rng.uniform(0.5, 2.0, sizes[0])
        masks = []
        for n in sizes[:-1]:
            m = (rng.random(n) < 0.7).astype(int)
            m[rng.integers(n)] = 1
            masks.append(m)
        x = rng.standard_normal(sizes[0])
        ref = masked_forward(model, x, masks[0], masks[1:])
        got = forward(compact_model(model, masks[0], masks[1:]), x[masks[0].astype(bool)])
        worst = max(worst, float(np.max(np.abs(got - ref))))
    note(request, f"worst abs difference {worst:.1e}")
    assert worst < 1e-12


DESK = {
    "channel": {"name": "LF"},
    "frame": {"modulation": "QPSK", "I": 50},
    "dataset_size": 5000,
    "train": {"epochs": 100},
    "snr_grid_db": [10, 20, 30],
    "search": {"percentiles": [15, 20, 25, 30]},
}


@criterion("C8 end-to-end desk-scale LF-QPSK: (a) pilots reliable, (b) BER gate, (c) reduction > 39.51%, <10 min")
def test_end_to_end(request, tmp_path):
    cfg = ExperimentConfig.from_dict(DESK)
    t0 = time.perf_counter()
    out = run_pipeline(cfg, tmp_path)
    elapsed = time.perf_counter() - t0

    pilots = list(cfg.frame.pilot_indices)
    r_sub = out["explain"].r_sub
    res = out["prune"]
    a = bool(np.all(r_sub[pilots] >= 0.9))
    accepted = [r for r in res.trace if r["accepted"]]
    b = (not res.no_improvement) and res.ber <= res.ber_target and all(r["ber"] <= res.ber_target for r in accepted)
    c = res.reduction_pct > 39.51
    note(request, f"(a) pilot r_sub {np.round(r_sub[pilots], 2).tolist()} -> {'ok' if a else 'FAIL'}; "
                  f"(b) ber {res.ber:.4f} vs target {res.ber_target:.4f}, no_improvement={res.no_improvement} "
                  f"-> {'ok' if b else 'FAIL'}; (c) reduction {res.reduction_pct:.2f}% widths "
                  f"{res.best_masks.widths} -> {'ok' if c else 'FAIL'}; {elapsed:.1f} s")
    assert elapsed < 600
    assert a, "pilots not all in the reliable band"
    assert b, "no pruned model passed the BER gate"
    assert c, "reduction does not beat input filtering alone"


@criterion("C9 degenerate inputs: static channel ICI, perfect-CSI BER, all-ones masks")
def test_degenerate_suite(request):
    cfg = FrameConfig()
    frame = build_frame(cfg, 1)
    chan = realize_channel(ChannelProfile.preset("HF", f_d=0.0), cfg.n_samples, 2)
    rx = transmit(frame, chan, np.inf)
    ici = float(np.max(np.abs(rx.r - rx.h_true * frame.x)))

    static = ExperimentConfig.from_dict({"channel": {"name": "LF", "f_d": 0.0}})
    rec = simulate_frame(static, np.inf, np.random.SeedSequence(3))
    ber, _ = equalize_and_ber([rec.r], [rec.h_true], [rec.tx_bits], static.frame)

    sizes = [104, 15, 15, 15, 104]
    model = init_model(sizes, 0)
    rng = np.random.default_rng(0)
    for b in model.biases:
        b[:] = rng.standard_normal(b.shape) * 0.3
    X = rng.standard_normal((32, 104))
    ones = [np.ones(15)] * 3
    c = flops(np.ones(104), ones, sizes)
    same = np.array_equal(masked_forward(model, X, np.ones(104), ones), forward(model, X))
    note(request, f"ICI {ici:.1e}, BER {ber}, flops {c}, masked==forward {same}")
    assert ici < 1e-9
    assert ber == 0.0
    assert c == flops_from_widths(sizes) == 7289
    assert same
