import math

import numpy as np
import pytest

from emgopt.data import MovementClass, Position, Window
from emgopt.features import (FeatureConfig, FusionMode, _fuse, extract,
                             extract_batch, read_feature_csv, td_moments,
                             tdd_six, write_feature_csv)


def oracle_six(x, lam=0.1, eps=1e-8):
    """Independent plain-Python implementation of the six descriptors."""
    d1 = [x[i + 1] - x[i] for i in range(len(x) - 1)]
    d2 = [d1[i + 1] - d1[i] for i in range(len(d1) - 1)]
    m0 = math.sqrt(sum(v * v for v in x)) ** lam / lam
    m2 = math.sqrt(sum(v * v for v in d1)) ** lam / lam
    m4 = math.sqrt(sum(v * v for v in d2)) ** lam / lam
    f1 = math.log(m0 + eps)
    f2 = math.log(abs(m0 - m2) + eps)
    f3 = math.log(abs(m0 - m4) + eps)
    f4 = math.log(m0 / (math.sqrt(abs((m0 - m2) * (m0 - m4))) + eps) + eps)
    f5 = math.log(m2 / (math.sqrt(m0 * m4) + eps) + eps)
    f6 = math.log(sum(abs(v) for v in d1) + eps)
    return [f1, f2, f3, f4, f5, f6], (m0, m2, m4)


def make_window(samples, **kw):
    ident = dict(subject_id=1, position=Position.P1, class_label=MovementClass.C1,
                 trial=1, window_index=0, start_sample=0)
    ident.update(kw)
    return Window(samples=np.asarray(samples, dtype=float), **ident)


def test_moments_zero_signal():
    m0, m2, m4 = td_moments(np.zeros(16), FeatureConfig())
    assert m0 == m2 == m4 == 0.0


def test_moments_alternating_signal_hand_values():
    cfg = FeatureConfig()
    m0, m2, m4 = td_moments(np.array([1.0, -1.0, 1.0, -1.0]), cfg)
    # sum x^2 = 4, sum (dx)^2 = 12, sum (ddx)^2 = 32
    assert m0 == pytest.approx(math.sqrt(4.0) ** 0.1 / 0.1, rel=1e-14)
    assert m2 == pytest.approx(math.sqrt(12.0) ** 0.1 / 0.1, rel=1e-14)
    assert m4 == pytest.approx(math.sqrt(32.0) ** 0.1 / 0.1, rel=1e-14)


def test_moments_scaling_homogeneity():
    cfg = FeatureConfig(power_lambda=0.1)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(64)
    base = td_moments(x, cfg)
    for c in (0.5, 2.0, 17.3):
        scaled = td_moments(c * x, cfg)
        for got, ref in zip(scaled, base):
            assert got == pytest.approx(c ** cfg.power_lambda * ref, rel=1e-12)


def test_moments_rejects_short_signal():
    with pytest.raises(ValueError):
        td_moments(np.array([1.0, 2.0]), FeatureConfig())


def test_six_zero_signal_is_finite_logs_of_epsilon():
    cfg = FeatureConfig()
    f = tdd_six(np.zeros(32), cfg)
    assert np.all(np.isfinite(f))
    assert f[0] == pytest.approx(math.log(cfg.epsilon))
    assert f[5] == pytest.approx(math.log(cfg.epsilon))


def test_six_ramp_waveform_length():
    cfg = FeatureConfig()
    f = tdd_six(np.array([0.0, 1.0, 2.0, 3.0, 4.0]), cfg)
    assert f[5] == pytest.approx(math.log(4.0 + cfg.epsilon), rel=1e-14)


def test_six_matches_independent_oracle():
    rng = np.random.default_rng(42)
    for _ in range(20):
        x = rng.standard_normal(32)
        got = tdd_six(x, FeatureConfig())
        want, _ = oracle_six(list(x))
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_outputs_finite_for_pathological_inputs():
    cfg = FeatureConfig()
    rng = np.random.default_rng(1)
    cases = [np.zeros(8), np.full(8, 3.7), np.array([1e-30] * 8),
             np.array([1.0, -1.0] * 8), rng.standard_normal(8) * 1e6]
    for x in cases:
        assert np.all(np.isfinite(tdd_six(x, cfg)))


def test_extract_dimension_and_tags():
    rng = np.random.default_rng(2)
    w = make_window(rng.standard_normal((7, 40)), trial=3, window_index=9)
    fv = extract(w)
    assert fv.values.shape == (42,)
    assert fv.identity == (1, 1, 1, 3, 9)


def test_fusion_fixed_point_and_bounds():
    eps = 1e-8
    a = np.array([0.5, -2.0, 3.0])
    d = _fuse(a, a, eps)
    assert np.all(np.abs(d + 1.0) < 1e-6)  # a == b -> d -> -1
    rng = np.random.default_rng(7)
    for _ in range(50):
        w = make_window(rng.standard_normal((3, 24)))
        fv = extract(w, FeatureConfig(fusion_mode=FusionMode.NONLINEAR_FUSION))
        assert fv.values.shape == (18,)
        assert np.all(fv.values >= -1.0 - 1e-6)
        assert np.all(fv.values <= 1.0 + 1e-6)


def test_channel_permutation_permutes_blocks():
    rng = np.random.default_rng(3)
    samples = rng.standard_normal((4, 30))
    perm = [2, 0, 3, 1]
    base = extract(make_window(samples)).values.reshape(4, 6)
    permuted = extract(make_window(samples[perm])).values.reshape(4, 6)
    np.testing.assert_array_equal(permuted, base[perm])


def test_batch_matches_scalar_path():
    rng = np.random.default_rng(4)
    windows = [make_window(rng.standard_normal((5, 25)), window_index=i)
               for i in range(13)]
    for mode in FusionMode:
        cfg = FeatureConfig(fusion_mode=mode)
        batch = extract_batch(windows, cfg)
        for w, fv in zip(windows, batch):
            np.testing.assert_allclose(fv.values, extract(w, cfg).values,
                                       rtol=0, atol=1e-12)


def test_feature_csv_roundtrip_bitstable(tmp_path):
    rng = np.random.default_rng(5)
    windows = [make_window(rng.standard_normal((2, 16)), window_index=i)
               for i in range(4)]
    feats = extract_batch(windows)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_feature_csv(feats, str(p1))
    write_feature_csv(feats, str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    back = read_feature_csv(str(p1))
    for fv, rt in zip(feats, back):
        assert fv.identity == rt.identity
        np.testing.assert_array_equal(fv.values, rt.values)


def test_config_validation():
    with pytest.raises(ValueError):
        FeatureConfig(power_lambda=0.0)
    with pytest.raises(ValueError):
        FeatureConfig(epsilon=0.0)
