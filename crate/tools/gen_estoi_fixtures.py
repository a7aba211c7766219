#!/usr/bin/env python3
"""Regenerate the eSTOI fixture battery.

Creates (estimate, reference) WAV pairs covering clean, noisy, reverberant,
filtered, and uncorrelated conditions at 16 kHz and 10 kHz, and freezes the
scores of the `pystoi` reference implementation next to them.

Requires: numpy, scipy, pystoi.

Usage: python3 tools/gen_estoi_fixtures.py [out_dir]
"""

import os
import sys

import numpy as np
from scipy.io import wavfile
from pystoi import stoi

OUT = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
    os.path.dirname(__file__), "..", "crates", "core", "tests", "fixtures", "estoi"
)


def quasi_speech(rng, dur_s, fs):
    """Harmonic bursts with drifting pitch, noise bursts, and silences."""
    n = int(dur_s * fs)
    out = np.zeros(n)
    pos = 0
    while pos < n:
        vlen = min(rng.integers(int(0.15 * fs), int(0.4 * fs)), n - pos)
        f0 = rng.uniform(90, 280)
        t = np.arange(vlen) / fs
        drift = rng.uniform(-30, 30)
        phase = 2 * np.pi * np.cumsum(f0 + drift * t / max(dur_s, 1e-9)) / fs
        seg = np.zeros(vlen)
        for k in range(1, 11):
            if f0 * k > min(4000, fs / 2 - 500):
                break
            seg += np.sin(k * phase) / k
        env = np.minimum(1.0, np.minimum(np.arange(vlen), vlen - np.arange(vlen)) / (0.01 * fs))
        seg *= env * rng.uniform(0.4, 0.9) / max(1e-9, np.max(np.abs(seg)))
        out[pos:pos + vlen] = seg
        pos += vlen
        if pos >= n:
            break
        if rng.random() < 0.5:
            ulen = min(rng.integers(int(0.05 * fs), int(0.15 * fs)), n - pos)
            burst = rng.normal(size=ulen) * 0.1
            out[pos:pos + ulen] = burst
            pos += ulen
        pos += min(rng.integers(int(0.1 * fs), int(0.3 * fs)), n - pos)
    return 0.5 * out / max(1e-9, np.max(np.abs(out)))


def add_noise(rng, x, snr_db):
    v = rng.normal(size=len(x))
    v *= np.sqrt(np.sum(x ** 2) / (np.sum(v ** 2) * 10 ** (snr_db / 10)))
    return x + v


def reverberate(rng, x, fs, t60):
    taps = int(t60 * fs)
    lam = 3 * np.log(10) / (t60 * fs)
    h = np.zeros(taps + 1)
    h[0] = 1.0
    h[1:] = rng.normal(size=taps) * np.exp(-lam * np.arange(1, taps + 1)) * 0.4
    return np.convolve(x, h)[: len(x)]


def lowpass(x, fs, cutoff):
    from scipy.signal import butter, lfilter
    b, a = butter(4, cutoff / (fs / 2))
    return lfilter(b, a, x)


def save(path, x, fs):
    wavfile.write(path, fs, x.astype(np.float32))


def main():
    os.makedirs(OUT, exist_ok=True)
    rng = np.random.default_rng(20260808)
    pairs = []

    # 16 kHz pairs exercise the resampling path.
    fs = 16000
    for i, degrade in enumerate([
        lambda r, x: x.copy(),
        lambda r, x: add_noise(r, x, 10),
        lambda r, x: add_noise(r, x, 0),
        lambda r, x: reverberate(r, x, fs, 0.6),
        lambda r, x: add_noise(r, reverberate(r, x, fs, 0.4), 5),
        lambda r, x: lowpass(x, fs, 1200),
    ]):
        ref = quasi_speech(rng, 3.0, fs)
        est = degrade(rng, ref)
        pairs.append((f"pair{i:02d}", ref, est, fs))

    # 10 kHz pairs hit the core path with no resampling.
    fs = 10000
    for j, degrade in enumerate([
        lambda r, x: add_noise(r, x, 15),
        lambda r, x: add_noise(r, x, -5),
        lambda r, x: x * (1 + 0.8 * np.sin(2 * np.pi * 4 * np.arange(len(x)) / fs)),
        lambda r, x: r.normal(size=len(x)) * 0.3,
    ]):
        ref = quasi_speech(rng, 3.0, fs)
        est = degrade(rng, ref)
        pairs.append((f"pair{j + 6:02d}", ref, est, fs))

    lines = []
    for name, ref, est, fs in pairs:
        ref_path = os.path.join(OUT, f"{name}_ref.wav")
        est_path = os.path.join(OUT, f"{name}_est.wav")
        save(ref_path, ref, fs)
        save(est_path, est, fs)
        # Score the float32 files exactly as stored.
        _, ref32 = wavfile.read(ref_path)
        _, est32 = wavfile.read(est_path)
        score = stoi(ref32.astype(np.float64), est32.astype(np.float64), fs, extended=True)
        lines.append(f"{name}\t{fs}\t{score:.10f}")
        print(lines[-1])

    with open(os.path.join(OUT, "expected.tsv"), "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
