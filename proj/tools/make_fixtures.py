#!/usr/bin/env python3
"""Regenerates tests/data.

Writes small WFDB records with the reference `wfdb` package and freezes what
the reference tooling reports about them (checksums, physical samples,
annotation times) plus PyWavelets outputs used as wavelet oracles.

    python3 tools/make_fixtures.py [outdir]
"""

import json
import os
import sys

import numpy as np
import pywt
import wfdb

FS = 360


def ecg_trace(rng, seconds, rr_mean=0.8):
    """Sum-of-Gaussians beats with jittered R-R and amplitudes, in mV."""
    n = int(seconds * FS)
    t = np.arange(n) / FS
    x = np.zeros(n)
    peaks = []
    beat = 0.35
    waves = [(-0.2, 0.12, 0.025), (-0.03, -0.15, 0.01), (0.0, 1.1, 0.012), (0.03, -0.25, 0.01), (0.25, 0.3, 0.045)]
    while beat < seconds - 0.4:
        scale = 1.0 + 0.05 * rng.standard_normal()
        for mu, a, w in waves:
            x += scale * a * np.exp(-((t - beat - mu) ** 2) / (2 * w * w))
        peaks.append(int(round(beat * FS)))
        beat += rr_mean + 0.04 * rng.standard_normal()
    x += 0.05 * np.sin(2 * np.pi * 0.3 * t)
    return x, peaks


def em_noise(rng, seconds):
    """Electrode-motion-like surrogate: drifting baseline plus step artefacts."""
    n = int(seconds * FS)
    walk = np.cumsum(rng.standard_normal(n)) * 0.01
    walk -= np.convolve(walk, np.ones(361) / 361, mode="same")
    steps = np.zeros(n)
    for _ in range(int(seconds / 4)):
        i = rng.integers(0, n - 200)
        steps[i : i + rng.integers(40, 200)] += rng.normal(0, 0.4)
    smooth = np.convolve(steps, np.hanning(31) / np.hanning(31).sum(), mode="same")
    return walk + smooth + 0.02 * rng.standard_normal(n)


def write_record(name, channels, outdir, units="mV", adc_gain=200.0, baseline=1024):
    sig = np.column_stack(channels)
    digital = np.clip(np.round(sig * adc_gain) + baseline, -2048, 2047).astype(int)
    wfdb.wrsamp(
        name,
        fs=FS,
        units=[units] * sig.shape[1],
        sig_name=[f"ch{i}" for i in range(sig.shape[1])],
        d_signal=digital,
        fmt=["212"] * sig.shape[1],
        adc_gain=[adc_gain] * sig.shape[1],
        baseline=[baseline] * sig.shape[1],
        write_dir=outdir,
    )


def freeze_record(name, outdir, n_samples=400):
    rec = wfdb.rdrecord(os.path.join(outdir, name), physical=False)
    phys = wfdb.rdrecord(os.path.join(outdir, name), sampto=n_samples)
    return {
        "record": name,
        "n_signals": rec.n_sig,
        "n_samples": rec.sig_len,
        "fs": rec.fs,
        "checksums": [int(c) for c in rec.checksum],
        "computed_checksums": [int(c) for c in rec.calc_checksum()],
        "first_samples_mv": [[float(v) for v in phys.p_signal[:, c]] for c in range(rec.n_sig)],
        "first_samples_adc": [[int(v) for v in rec.d_signal[:n_samples, c]] for c in range(rec.n_sig)],
    }


def freeze_annotations(name, outdir):
    ann = wfdb.rdann(os.path.join(outdir, name), "atr")
    return {
        "samples": [int(s) for s in ann.sample],
        "symbols": list(ann.symbol),
        "aux": list(ann.aux_note),
    }


def wavelet_oracles(rng):
    out = []
    for n, levels in [(64, 3), (100, 4), (257, 4), (1000, 5)]:
        x = rng.standard_normal(n).cumsum()
        coeffs = pywt.wavedec(x, "db4", mode="symmetric", level=levels)
        noisy = np.sin(np.linspace(0, 6 * np.pi, n)) + 0.3 * rng.standard_normal(n)
        c2 = pywt.wavedec(noisy, "db4", mode="symmetric", level=levels)
        sigma = np.median(np.abs(c2[-1])) / 0.6745
        thr = sigma * np.sqrt(2 * np.log(n))
        c2 = [c2[0]] + [pywt.threshold(c, thr, mode="soft") for c in c2[1:]]
        den = pywt.waverec(c2, "db4", mode="symmetric")[:n]
        out.append(
            {
                "levels": levels,
                "x": x.tolist(),
                "approx": coeffs[0].tolist(),
                "details_finest_first": [c.tolist() for c in reversed(coeffs[1:])],
                "noisy": noisy.tolist(),
                "universal_threshold": float(thr),
                "denoised": den.tolist(),
            }
        )
    return out


def main():
    outdir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "tests", "data")
    os.makedirs(outdir, exist_ok=True)
    rng = np.random.default_rng(20240118)

    ecg0, peaks = ecg_trace(rng, 60)
    ecg1 = 0.6 * np.roll(ecg0, 3) - 0.1
    write_record("ecg60", [ecg0, ecg1], outdir)
    symbols = ["N"] * len(peaks)
    symbols[7] = "V"
    samples = list(peaks)
    aux = [""] * len(peaks)
    # rhythm and noise annotations are not beats and must be skipped by readers
    samples.insert(0, 0)
    symbols.insert(0, "+")
    aux.insert(0, "(N")
    samples.insert(20, peaks[18] + 40)
    symbols.insert(20, "~")
    aux.insert(20, "")
    wfdb.wrann("ecg60", "atr", np.array(samples), symbol=symbols, aux_note=aux, fs=FS, write_dir=outdir)

    noise = em_noise(rng, 30)
    write_record("emsyn", [noise, 0.8 * noise[::-1]], outdir)

    # sparse annotations force SKIP entries (intervals beyond 1023 samples)
    gap_sig = 0.01 * rng.standard_normal(80001)
    write_record("gap", [gap_sig], outdir)
    wfdb.wrann(
        "gap",
        "atr",
        np.array([5, 3000, 70000, 70500, 79999]),
        symbol=["N", "N", "+", "N", "N"],
        aux_note=["", "", "(AFIB", "", ""],
        fs=FS,
        write_dir=outdir,
    )

    expected = {
        "records": [freeze_record(r, outdir) for r in ("ecg60", "emsyn", "gap")],
        "annotations": {r: freeze_annotations(r, outdir) for r in ("ecg60", "gap")},
    }
    with open(os.path.join(outdir, "wfdb_expected.json"), "w") as f:
        json.dump(expected, f)
    with open(os.path.join(outdir, "wavelet_expected.json"), "w") as f:
        json.dump(wavelet_oracles(rng), f)


if __name__ == "__main__":
    main()
