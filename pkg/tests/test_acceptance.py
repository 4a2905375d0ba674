"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from semvid.channel import ChannelConfig
from semvid.codec import CodecConfig, decode_stream, encode_stream
from semvid.cve import LAMBDAS, estimate_code_length, packaged_params
from semvid.entropy import MAX_SYMBOL, NUM_BINS, TOTAL, build_table, rans_decode, rans_encode
from semvid.link import loopback
from semvid.metrics import PSNR_CAP, cbr, ms_ssim, mse, psnr
from semvid.moe import laplacian_loss, moe_loss
from semvid.motion import MotionConfig, estimate_flow
from semvid.optim import AdamState, adam_step
from semvid.simulate import simulate
from semvid.synthetic import moving_object_clip, smooth_texture, synthetic_suite

from oracles import interior_blocks, ref_lap_loss, ref_moe_loss, shifted_pair
from test_metrics import TF_MS_SSIM, fixture_pairs


def strictly_increasing(v) -> bool:
    return all(b > a for a, b in zip(v, v[1:]))


def test_1_entropy_lossless(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    streams = 100_000
    lengths = rng.integers(1, 9, streams)
    bins = rng.integers(0, NUM_BINS, lengths.sum())
    # Symbols drawn mostly near zero with occasional alphabet-edge values.
    syms = np.clip(np.rint(rng.laplace(0, 4, lengths.sum())), -MAX_SYMBOL, MAX_SYMBOL).astype(int)
    edge = rng.random(syms.size) < 0.01
    syms[edge] = rng.choice([-MAX_SYMBOL, MAX_SYMBOL], edge.sum())
    assert set(bins.tolist()) == set(range(NUM_BINS))
    failures, pos = 0, 0
    for n in lengths:
        s, b = syms[pos:pos + n].tolist(), bins[pos:pos + n].tolist()
        pos += n
        if rans_decode(rans_encode(s, b), b, n) != s:
            failures += 1
    worst = 0.0
    for j in range(0, NUM_BINS, 3):
        t = build_table(j)
        p = np.asarray(t.freq) / TOTAL
        s = rng.choice(np.arange(-MAX_SYMBOL, MAX_SYMBOL + 1), size=10_000, p=p)
        b = np.full(s.size, j)
        cw = rans_encode(s, b)
        bound = estimate_code_length(s, b) / 8 * 1.02 + 32
        worst = max(worst, len(cw.data) / bound)
        if rans_decode(cw, b, s.size) != s.tolist():
            failures += 1
    elapsed = time.perf_counter() - t0
    criterion(1, failures == 0 and worst <= 1.0 and elapsed < 60,
              f"{streams} streams round-trip, {failures} failures; worst length/bound {worst:.4f}; "
              f"{elapsed:.1f}s")


def test_2_closed_loop_drift(criterion):
    t0 = time.perf_counter()
    clip = moving_object_clip(30)
    enc = encode_stream(clip.frames, CodecConfig(background=clip.background), clip.masks)
    dec = decode_stream(enc.bitstream)
    same_x = all(np.array_equal(a, b) for a, b in zip(enc.foreground_recon, dec.foreground))
    same_v = all(np.array_equal(a, b) for a, b in zip(enc.recon, dec.frames))
    elapsed = time.perf_counter() - t0
    criterion(2, same_x and same_v and not any(dec.concealed) and elapsed < 30,
              f"30 frames bit-identical (foreground {same_x}, output {same_v}); {elapsed:.1f}s")


def test_3_motion_oracle(criterion):
    t0 = time.perf_counter()
    cfg = MotionConfig()
    reach = cfg.reach
    n = 256
    shifts = [(reach, 0), (0, -reach), (reach, reach), (-reach, -reach), (-reach, reach),
              (13, -7), (1, 1), (-37, 52)]
    rng = np.random.default_rng(3)
    shifts += [tuple(int(v) for v in rng.integers(-reach, reach + 1, 2)) for _ in range(6)]
    bad = []
    for dx, dy in shifts:
        prev, cur = shifted_pair(n, dx, dy)
        flow = estimate_flow(cur, prev, cfg)
        blocks = interior_blocks(n, dx, dy)
        ok = bool(blocks) and all(np.all(flow[y:y + 64, x:x + 64, 0] == dx)
                                  and np.all(flow[y:y + 64, x:x + 64, 1] == dy) for y, x in blocks)
        if not ok:
            bad.append((dx, dy))
    f = smooth_texture(n, n, 3, sigma=2.0, seed=9)
    still = not estimate_flow(f, f, cfg).any()
    elapsed = time.perf_counter() - t0
    criterion(3, not bad and still and elapsed < 30,
              f"{len(shifts)} translations up to reach {reach} exact at interior blocks "
              f"(misses {bad}); flow(f, f) == 0: {still}; {elapsed:.1f}s")


def test_4_moe_savings(criterion):
    t0 = time.perf_counter()
    # Foreground disk covers about 13% of the frame; the background is a
    # detailed static texture.  Shipped lambda = 2048 operating point.
    clip = moving_object_clip(30, background_sigma=2.0)
    coverage = max(m.mean() for m in clip.masks)
    params = packaged_params(2048)
    on = encode_stream(clip.frames, CodecConfig(params=params, background=clip.background), clip.masks)
    off = encode_stream(clip.frames, CodecConfig(params=params, moe=False))
    ratio = sum(on.bits) / sum(off.bits)
    elapsed = time.perf_counter() - t0
    criterion(4, coverage <= 0.40 and ratio <= 0.80 and elapsed < 120,
              f"MOE-on / MOE-off total bits {ratio:.3f} (bound 0.80) at q_step {params.q_step:.4f}, "
              f"coverage {coverage:.2f}; {elapsed:.1f}s")


def test_5_rd_monotone(criterion):
    t0 = time.perf_counter()
    ok, lines = True, []
    agg = {lam: [] for lam in LAMBDAS}
    for i, clip in enumerate(synthetic_suite(10)):
        reps = simulate(clip.frames, masks=clip.masks, lambdas=LAMBDAS, modes=("ideal",),
                        schemes=("moe-cve",), base=CodecConfig(background=clip.background),
                        diagnostics=False)
        reps.sort(key=lambda r: r.lambda_id)
        c = [r.cbr for r in reps]
        p = [r.mean_psnr for r in reps]
        s = [r.mean_ms_ssim for r in reps]
        for r in reps:
            agg[r.lambda_id].append((r.cbr, r.mean_psnr, r.mean_ms_ssim))
        order = np.argsort(c)
        clip_ok = (strictly_increasing([c[k] for k in order]) and strictly_increasing([p[k] for k in order])
                   and strictly_increasing([s[k] for k in order]))
        ok &= clip_ok
        lines.append(f"clip {i}: cbr {np.round(c, 4).tolist()} psnr {np.round(p, 2).tolist()}")
    mean = [np.mean(agg[lam], axis=0) for lam in LAMBDAS]
    ok &= all(strictly_increasing([m[k] for m in mean]) for k in range(3))
    elapsed = time.perf_counter() - t0
    criterion(5, ok and elapsed < 180, "; ".join(lines) + f"; {elapsed:.1f}s")


def test_6_snr_sweep(criterion):
    t0 = time.perf_counter()
    snrs = (0, 5, 10, 15, 20)
    per_clip = []
    for clip in synthetic_suite(10):
        reps = simulate(clip.frames, masks=clip.masks, lambdas=(1024,), snrs=snrs, modes=("feature",),
                        schemes=("moe-cve",), base=CodecConfig(background=clip.background),
                        diagnostics=False)
        per_clip.append([r.mean_psnr for r in sorted(reps, key=lambda r: r.snr_db)])
    mean = np.mean(per_clip, axis=0)
    monotone = all(b >= a for a, b in zip(mean, mean[1:]))
    gap = mean[-1] - mean[-2]
    elapsed = time.perf_counter() - t0
    criterion(6, monotone and gap < 0.5 and elapsed < 180,
              f"mean PSNR over SNR {list(snrs)}: {np.round(mean, 2).tolist()}; "
              f"15->20 dB gap {gap:.3f} dB; {elapsed:.1f}s")


def test_7_metrics(criterion):
    a = smooth_texture(176, 176, 3, seed=1)
    z = np.zeros((8, 8, 3))
    checks = [
        psnr(a, a) == PSNR_CAP,
        mse(z, z) == 0.0,
        mse(z, np.ones_like(z)) == 1.0,
        math.isclose(mse(z, np.full_like(z, 0.1)), 0.01, rel_tol=1e-12),
        math.isclose(psnr(z, np.full_like(z, 0.1)), 20.0, rel_tol=1e-12),
    ]
    errs = [abs(ms_ssim(x, y) - ref) for (x, y), ref in zip(fixture_pairs(), TF_MS_SSIM)]
    rng = np.random.default_rng(7)
    bits = rng.integers(0, 100_000, 17).tolist()
    direct = sum(k / (176 * 144 * 3) for k in bits) / len(bits)
    cbr_err = abs(cbr(bits, 176, 144, 3) - direct)
    criterion(7, all(checks) and max(errs) < 1e-4 and cbr_err < 1e-12,
              f"psnr cap and mse examples exact: {all(checks)}; MS-SSIM max |err| vs reference "
              f"{max(errs):.2e}; CBR recomputation err {cbr_err:.1e}")


def test_8_adam(criterion):
    # Hand ledger for constant gradient 1, in exact arithmetic.
    b1, b2, lr, eps = Fraction(9, 10), Fraction(999, 1000), 1e-4, 1e-8
    e1, s1 = 1 - b1, 1 - b2                       # 0.1, 0.001
    e2, s2 = b1 * e1 + (1 - b1), b2 * s1 + (1 - b2)  # 0.19, 0.001999
    eh2, sh2 = e2 / (1 - b1 ** 2), s2 / (1 - b2 ** 2)  # both exactly 1
    assert eh2 == 1 and sh2 == 1
    theta1 = 0.0 - lr * 1.0 / (1.0 + eps)
    theta2 = theta1 - lr * float(eh2) / (math.sqrt(float(sh2)) + eps)
    th, st = np.zeros(1), AdamState.fresh(1)
    th, st = adam_step(th, np.ones(1), st)
    ok1 = (abs(th[0] - theta1) < 1e-12 and abs(st.e[0] - float(e1)) < 1e-12
           and abs(st.s[0] - float(s1)) < 1e-12)
    th, st = adam_step(th, np.ones(1), st)
    ok2 = (abs(th[0] - theta2) < 1e-12 and abs(st.e[0] - float(e2)) < 1e-12
           and abs(st.s[0] - float(s2)) < 1e-12 and st.step == 2)
    th, st = np.ones(1), AdamState.fresh(1)
    steps = 0
    while abs(th[0]) >= 1e-2 and steps < 50_000:
        th, st = adam_step(th, 2 * th, st)
        steps += 1
    conv = abs(th[0]) < 1e-2
    criterion(8, ok1 and ok2 and conv and st.learning_rate == 1e-4 and st.epsilon == 1e-8,
              f"two-step ledger match: {ok1 and ok2}; theta^2 from 1 reaches |theta|<1e-2 in "
              f"{steps} steps (limit 50000)")


def test_9_losses(criterion):
    rng = np.random.default_rng(9)
    errs = []
    for _ in range(3):
        q = [rng.random((32, 32)) for _ in range(4)]
        errs.append(abs(laplacian_loss(q[0], q[1]) - ref_lap_loss(q[0], q[1])))
        errs.append(abs(moe_loss(*q) - ref_moe_loss(*q)))
    a, b = rng.random((32, 32)), rng.random((32, 32))
    vanish = laplacian_loss(a, a) == 0 and moe_loss(a, a, b, b) == 0
    criterion(9, max(errs) < 1e-9 and vanish,
              f"max |err| vs brute-force oracle {max(errs):.1e}; identical inputs give 0: {vanish}")


def test_10_wire(criterion):
    t0 = time.perf_counter()
    clip = moving_object_clip(20)
    cfg = CodecConfig(intra_period=1, background=clip.background)
    enc = encode_stream(clip.frames, cfg, clip.masks)
    rx, lost = loopback(enc.bitstream, loss=0.0, mtu=600)
    exact = rx.serialize() == enc.bitstream.serialize() and not lost
    ref = decode_stream(enc.bitstream)
    rx, lost = loopback(enc.bitstream, loss=0.05, seed=11, mtu=600)
    dec = decode_stream(rx)
    concealed = [t for t, c in enumerate(dec.concealed) if c]
    intact = all(np.array_equal(dec.frames[t], ref.frames[t])
                 for t in range(len(ref.frames)) if t not in lost)
    elapsed = time.perf_counter() - t0
    criterion(10, exact and concealed == lost and bool(lost) and intact and elapsed < 60,
              f"lossless byte-exact: {exact}; 5% loss: lost {lost}, concealed {concealed}, "
              f"others identical: {intact}; {elapsed:.1f}s")
