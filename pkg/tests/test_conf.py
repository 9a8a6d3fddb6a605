import numpy as np
import pytest

from splatmem.conf import (
    ConfidenceConfig,
    confidence,
    confidence_batch,
    confidence_values,
    entropy,
)
from splatmem.core import GaussianPrimitive
from splatmem.errors import InvalidInputError

RNG = np.random.default_rng(3)


def entropy_oracle(logits):
    """Direct summation oracle: softmax then -sum p log p."""
    e = np.exp(logits - np.max(logits))
    p = e / e.sum()
    return float(-(p * np.log(p)).sum())


def prim(logits, opacity=1.0):
    return GaussianPrimitive((0, 0, 0), (0.1, 0.1, 0.1), (1, 0, 0, 0),
                             opacity, logits)


class TestEntropy:
    def test_one_hot_near_zero(self):
        logits = np.zeros(11)
        logits[3] = 50.0
        assert entropy(logits) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_11(self):
        assert entropy(np.zeros(11)) == pytest.approx(np.log(11), abs=1e-12)
        assert entropy(np.full(11, 2.5)) == pytest.approx(2.39790, abs=1e-5)

    def test_uniform_2(self):
        assert entropy(np.zeros(2)) == pytest.approx(np.log(2), abs=1e-12)
        assert entropy(np.zeros(2)) == pytest.approx(0.69315, abs=1e-5)

    def test_matches_direct_summation(self):
        for _ in range(50):
            logits = RNG.normal(size=11) * 3
            assert entropy(logits) == pytest.approx(entropy_oracle(logits), abs=1e-10)

    def test_shift_invariance(self):
        for _ in range(20):
            logits = RNG.normal(size=11)
            shift = RNG.uniform(-30, 30)
            assert entropy(logits + shift) == pytest.approx(entropy(logits), abs=1e-9)

    def test_extreme_logits_stay_finite(self):
        assert np.isfinite(entropy(np.array([1e4, -1e4, 0.0])))


class TestConfidence:
    def test_one_hot_full_opacity(self):
        logits = np.zeros(11)
        logits[0] = 50.0
        assert confidence(prim(logits, 1.0)) == pytest.approx(1.0, abs=1e-9)

    def test_uniform_11_defaults(self):
        # (1 - ln(11)/3)^3 with the entropy oracle
        h = entropy_oracle(np.zeros(11))
        expect = (1.0 - h / 3.0) ** 3
        got = confidence(prim(np.zeros(11), 1.0))
        assert got == pytest.approx(expect, abs=1e-12)
        assert got == pytest.approx(0.008084, abs=1e-5)

    def test_linear_in_opacity(self):
        got = confidence(prim(np.zeros(11), 0.5))
        assert got == pytest.approx(0.004042, abs=1e-5)

    def test_entropy_above_hmax_gives_zero(self):
        cfg = ConfidenceConfig(h_max=1.0)
        assert confidence(prim(np.zeros(11), 1.0), cfg) == 0.0

    def test_monotone_in_entropy(self):
        cfg = ConfidenceConfig()
        peaks = np.linspace(6, 0, 10)
        values = []
        for p in peaks:
            logits = np.zeros(11)
            logits[0] = p
            values.append(confidence(prim(logits), cfg))
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_range_both_transforms(self):
        for transform in ("power", "sharp_sigmoid"):
            cfg = ConfidenceConfig(transform=transform)
            for _ in range(30):
                logits = RNG.normal(size=11) * 4
                c = confidence(prim(logits, RNG.uniform(0, 1)), cfg)
                assert 0.0 <= c <= 1.0

    def test_sharp_sigmoid_strictly_decreasing_in_entropy(self):
        cfg = ConfidenceConfig(transform="sharp_sigmoid")
        hs, cs = [], []
        for p in np.linspace(5, 0, 8):
            logits = np.zeros(11)
            logits[0] = p
            hs.append(entropy(logits))
            cs.append(confidence(prim(logits), cfg))
        assert all(h1 < h2 for h1, h2 in zip(hs, hs[1:]))
        assert all(c1 > c2 for c1, c2 in zip(cs, cs[1:]))

    def test_sharp_sigmoid_formula(self):
        cfg = ConfidenceConfig(transform="sharp_sigmoid")
        logits = np.zeros(11)
        h = entropy_oracle(logits)
        expect = 1.0 / (1.0 + np.exp(10.0 * (h - 1.5)))
        assert confidence(prim(logits), cfg) == pytest.approx(expect, abs=1e-12)

    def test_defaults_pinned(self):
        cfg = ConfidenceConfig()
        assert cfg.h_max == 3.0
        assert cfg.sharpness == 3.0
        assert cfg.sigmoid_beta == 10.0
        assert cfg.sigmoid_gamma == 1.5
        assert cfg.softmax_temperature == 0.2
        assert cfg.transform == "power"
        assert cfg.normalize == "none"


class TestConfidenceBatch:
    def test_no_normalization_matches_elementwise(self):
        prims = [prim(RNG.normal(size=11), RNG.uniform(0, 1)) for _ in range(8)]
        got = confidence_batch(prims)
        for g, c in zip(prims, got):
            assert c == pytest.approx(confidence(g), abs=1e-12)

    def test_softmax_two_identical(self):
        cfg = ConfidenceConfig(normalize="softmax")
        prims = [prim(np.zeros(11), 0.7)] * 2
        got = confidence_batch(prims, cfg)
        assert np.allclose(got, [0.5, 0.5])

    def test_softmax_scalar_oracle(self):
        # raw scores (1, 0) at T = 0.2 -> softmax(5, 0)
        cfg = ConfidenceConfig(normalize="softmax", softmax_temperature=0.2)
        one_hot = np.zeros(11)
        one_hot[0] = 60.0
        high_entropy = np.zeros(11)
        prims = [prim(one_hot, 1.0), prim(high_entropy, 1.0)]
        raw = confidence_values(np.stack([p.logits for p in prims]),
                                np.array([1.0, 1.0]))
        assert raw[0] == pytest.approx(1.0, abs=1e-9)
        assert raw[1] == pytest.approx(0.008084, abs=1e-5)
        got = confidence_batch(prims, cfg)
        z = raw / 0.2
        expect = np.exp(z - z.max())
        expect /= expect.sum()
        assert np.allclose(got, expect, atol=1e-12)
        assert got.sum() == pytest.approx(1.0)

    def test_softmax_empty_batch_rejected(self):
        cfg = ConfidenceConfig(normalize="softmax")
        with pytest.raises(InvalidInputError):
            confidence_batch([], cfg)

    def test_invalid_config_rejected(self):
        with pytest.raises(InvalidInputError):
            ConfidenceConfig(h_max=0.0)
        with pytest.raises(InvalidInputError):
            ConfidenceConfig(transform="linear")
        with pytest.raises(InvalidInputError):
            ConfidenceConfig(softmax_temperature=-1.0)
