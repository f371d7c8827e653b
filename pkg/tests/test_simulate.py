import itertools
import math

import numpy as np
import pytest

from rfauth.simulate import (FRAME_LENGTH, ImpairmentRanges, TransmitterProfile, apply_fingerprint,
                             generate_corpus, make_reference_waveform, sample_profile, spread_profiles)


@pytest.mark.parametrize("kind", ["qpsk-preamble", "constant-envelope-chirp"])
def test_reference_has_unit_power(kind):
    s = make_reference_waveform(kind, 256).samples
    assert s.shape == (256,)
    assert np.mean(np.abs(s) ** 2) == pytest.approx(1.0, abs=1e-6)


def test_chirp_is_constant_envelope():
    s = make_reference_waveform("constant-envelope-chirp", 256).samples
    np.testing.assert_allclose(np.abs(s), 1.0, atol=1e-12)


def test_reference_rejects_wrong_length():
    with pytest.raises(ValueError):
        make_reference_waveform("qpsk-preamble", 128)
    with pytest.raises(ValueError):
        make_reference_waveform("ofdm", 256)


def test_reference_is_deterministic():
    a = make_reference_waveform().samples
    b = make_reference_waveform().samples
    assert np.array_equal(a, b)


def test_zero_ranges_give_identity_profile():
    p = sample_profile(3, 5, ImpairmentRanges.zero())
    assert p == TransmitterProfile(tx_id=5)


def test_profile_determinism():
    assert sample_profile(11, 4) == sample_profile(11, 4)
    assert sample_profile(11, 4) != sample_profile(12, 4)


def test_71_profiles_pairwise_distinct():
    profiles = [sample_profile(7, t) for t in range(71)]
    for a, b in itertools.combinations(profiles, 2):
        fa, fb = a.to_dict(), b.to_dict()
        fa.pop("tx_id"), fb.pop("tx_id")
        assert fa != fb


def test_profile_fields_within_ranges():
    r = ImpairmentRanges()
    for t in range(30):
        p = sample_profile(1, t, r)
        assert r.cfo_normalized[0] <= p.cfo_normalized <= r.cfo_normalized[1]
        assert r.dc_offset_real[0] <= p.dc_offset.real <= r.dc_offset_real[1]
        assert p.phase_noise_std_rad >= 0 and p.nonlinearity_coeff >= 0


@pytest.mark.parametrize("bad", [
    {"cfo_normalized": (0.002, -0.002)},
    {"iq_gain_imbalance_db": (math.nan, 1.0)},
    {"cfo_normalized": (-0.02, 0.02)},
    {"phase_noise_std_rad": (-0.1, 0.1)},
])
def test_invalid_ranges_rejected(bad):
    with pytest.raises(ValueError):
        ImpairmentRanges(**bad)


def test_profile_validation():
    with pytest.raises(ValueError):
        TransmitterProfile(tx_id=0, cfo_normalized=0.05)
    with pytest.raises(ValueError):
        TransmitterProfile(tx_id=0, phase_noise_std_rad=-1.0)
    with pytest.raises(ValueError):
        TransmitterProfile(tx_id=-1)


def test_identity_profile_is_identity_map():
    x = make_reference_waveform()
    y = apply_fingerprint(x, TransmitterProfile(tx_id=0), math.inf, 0, channel_phase=0.0)
    np.testing.assert_allclose(y.samples, x.samples, atol=1e-12)


def test_dc_offset_only():
    x = make_reference_waveform()
    y = apply_fingerprint(x, TransmitterProfile(tx_id=0, dc_offset=0.1 + 0j), math.inf, 0, channel_phase=0.0)
    np.testing.assert_allclose(y.samples, x.samples + 0.1, atol=1e-12)


def test_cfo_only():
    x = make_reference_waveform()
    f = 0.003
    y = apply_fingerprint(x, TransmitterProfile(tx_id=0, cfo_normalized=f), math.inf, 0, channel_phase=0.0)
    n = np.arange(FRAME_LENGTH)
    np.testing.assert_allclose(y.samples, x.samples * np.exp(2j * np.pi * f * n), atol=1e-12)


def test_iq_imbalance_matches_branch_model():
    # gain g and skew phi on the Q branch: I' = I, Q' = g (Q cos phi - I sin phi)
    x = make_reference_waveform()
    g_db, phi = 1.5, 0.1
    y = apply_fingerprint(x, TransmitterProfile(tx_id=0, iq_gain_imbalance_db=g_db, iq_phase_imbalance_rad=phi),
                          math.inf, 0, channel_phase=0.0).samples
    g = 10 ** (g_db / 20)
    i, q = x.samples.real, x.samples.imag
    expected = i + 1j * g * (q * np.cos(phi) - i * np.sin(phi))
    np.testing.assert_allclose(y, expected, atol=1e-12)


def test_nonlinearity_compresses_amplitude():
    x = make_reference_waveform("constant-envelope-chirp")
    y = apply_fingerprint(x, TransmitterProfile(tx_id=0, nonlinearity_coeff=0.1), math.inf, 0, channel_phase=0.0)
    np.testing.assert_allclose(np.abs(y.samples), 0.9, atol=1e-12)


def test_channel_phase_rotates_whole_frame():
    x = make_reference_waveform()
    y = apply_fingerprint(x, TransmitterProfile(tx_id=0), math.inf, 5).samples
    ratio = y / x.samples
    np.testing.assert_allclose(np.abs(ratio), 1.0, atol=1e-12)
    np.testing.assert_allclose(ratio, ratio[0], atol=1e-12)


def test_phase_noise_preserves_magnitude_but_walks():
    x = make_reference_waveform()
    y = apply_fingerprint(x, TransmitterProfile(tx_id=0, phase_noise_std_rad=0.05), math.inf, 2,
                          channel_phase=0.0).samples
    np.testing.assert_allclose(np.abs(y), np.abs(x.samples), atol=1e-12)
    walk = np.unwrap(np.angle(y / x.samples))
    assert walk[0] == pytest.approx(0.0, abs=1e-12)
    assert np.std(np.diff(walk)) == pytest.approx(0.05, rel=0.2)


def test_apply_fingerprint_deterministic():
    x = make_reference_waveform()
    p = sample_profile(0, 1)
    a = apply_fingerprint(x, p, 15.0, 9).samples
    b = apply_fingerprint(x, p, 15.0, 9).samples
    c = apply_fingerprint(x, p, 15.0, 10).samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("snr_db", [0.0, 10.0, 20.0])
def test_snr_calibration(snr_db):
    x = make_reference_waveform()
    p = TransmitterProfile(tx_id=0)
    noise_power = []
    for seed in range(400):  # 400 * 256 > 1e5 samples
        y = apply_fingerprint(x, p, snr_db, seed, channel_phase=0.0).samples
        noise_power.append(np.mean(np.abs(y - x.samples) ** 2))
    measured = 10 * np.log10(1.0 / np.mean(noise_power))
    assert measured == pytest.approx(snr_db, abs=0.2)


def test_apply_fingerprint_rejects_nan_snr():
    with pytest.raises(ValueError):
        apply_fingerprint(make_reference_waveform(), TransmitterProfile(tx_id=0), math.nan, 0)


def test_generate_corpus_full_pool_shape():
    c = generate_corpus(71, (200, 1500), 20.0, seed=1)
    assert len(c.tx_ids) == 71
    counts = c.frame_counts()
    assert all(200 <= n <= 1500 for n in counts.values())
    assert len(set(counts.values())) > 1
    for tx in c.tx_ids[:3]:
        assert all(f.tx_id == tx for f in c.frames(tx))


def test_generate_corpus_degenerate_interval():
    c = generate_corpus(2, (10, 10), 20.0, seed=0)
    assert c.frame_counts() == {0: 10, 1: 10}


def test_generate_corpus_deterministic():
    a = generate_corpus(3, (20, 40), 10.0, seed=4)
    b = generate_corpus(3, (20, 40), 10.0, seed=4)
    for tx in a.tx_ids:
        assert a.samples[tx].tobytes() == b.samples[tx].tobytes()
    assert a.profiles == b.profiles


@pytest.mark.parametrize("kwargs", [dict(n_tx=0), dict(n_tx=72), dict(n_tx=2, frames_per_tx=(30, 10)),
                                    dict(n_tx=2, frames_per_tx=(0, 10))])
def test_generate_corpus_errors(kwargs):
    kwargs.setdefault("frames_per_tx", (10, 10))
    with pytest.raises(ValueError):
        generate_corpus(**kwargs)


def _mean_frame_spread(ranges, seed, n_tx=8):
    x = make_reference_waveform()
    means = []
    for t in range(n_tx):
        p = sample_profile(seed, t, ranges)
        frames = [apply_fingerprint(x, p, math.inf, k, channel_phase=0.0).samples for k in range(10)]
        means.append(np.mean(frames, axis=0))
    return np.mean([np.linalg.norm(a - b) for a, b in itertools.combinations(means, 2)])


@pytest.mark.parametrize("seed", range(5))
def test_wider_ranges_spread_transmitters_apart(seed):
    # above ~0.4x the defaults the CFO rotation decorrelates mean frames and the distance saturates
    base = ImpairmentRanges()
    spreads = [_mean_frame_spread(base.scaled(s), seed) for s in (0.05, 0.1, 0.2, 0.4)]
    assert all(a < b for a, b in zip(spreads, spreads[1:]))


def test_spread_profiles_fill_every_stratum():
    r = ImpairmentRanges()
    ps = spread_profiles(6, 3, r)
    lo, hi = r.cfo_normalized
    cfo = sorted(p.cfo_normalized for p in ps)
    np.testing.assert_allclose(cfo, lo + (hi - lo) * (np.arange(6) + 0.5) / 6)
    gains = sorted(p.iq_gain_imbalance_db for p in ps)
    assert min(np.diff(gains)) == pytest.approx((r.iq_gain_imbalance_db[1] - r.iq_gain_imbalance_db[0]) / 6)


def test_spread_layout_corpus():
    c = generate_corpus(4, (5, 5), 20.0, seed=3, layout="spread")
    assert [c.profiles[t] for t in c.tx_ids] == spread_profiles(4, 3)
    with pytest.raises(ValueError):
        generate_corpus(4, (5, 5), 20.0, seed=3, layout="grid")
