from __future__ import annotations

import math

import pytest

from mlm_bridge.bridge import BridgeConfig, BridgeError, MaskScorer, OOVError


@pytest.fixture(scope="module")
def scorer(tiny_model_dir):
    return MaskScorer(BridgeConfig(model=tiny_model_dir))


class TestFillMask:
    def test_same_word_twice_gives_identical_values(self, scorer):
        a, b = scorer.fill_mask_logprobs("o neno que cantaba é {MASK} .", ["alto", "alto"])
        assert a == b

    def test_values_finite_and_nonpositive(self, scorer):
        lps = scorer.fill_mask_logprobs("a nena {MASK} na casa .", ["canta", "dorme"])
        for lp in lps:
            assert math.isfinite(lp)
            assert lp <= 0.0

    def test_softmax_mass_bound(self, scorer):
        lps = scorer.fill_mask_logprobs("o neno que cantaba é {MASK} .", ["alto", "alta"])
        assert math.exp(lps[0]) + math.exp(lps[1]) <= 1.0 + 1e-6

    def test_multi_piece_candidate_is_oov(self, scorer):
        with pytest.raises(OOVError, match="altos"):
            scorer.fill_mask_logprobs("os nenos son {MASK} .", ["altos", "alto"])

    def test_unknown_candidate_is_oov(self, scorer):
        with pytest.raises(OOVError):
            scorer.fill_mask_logprobs("o neno é {MASK} .", ["zzzqqq", "alto"])

    def test_zero_masks_rejected(self, scorer):
        with pytest.raises(BridgeError, match="exactly one"):
            scorer.fill_mask_logprobs("sen oco ningún .", ["alto", "alta"])

    def test_two_masks_rejected(self, scorer):
        with pytest.raises(BridgeError, match="exactly one"):
            scorer.fill_mask_logprobs("{MASK} e {MASK} .", ["alto", "alta"])

    def test_deterministic_repeat(self, scorer):
        first = scorer.fill_mask_logprobs("o neno que cantaba onte {MASK} na casa .", ["aparece", "aparecen"])
        second = scorer.fill_mask_logprobs("o neno que cantaba onte {MASK} na casa .", ["aparece", "aparecen"])
        assert first == second

    def test_agreement_smoke_observation(self, scorer, capsys):
        # tiny random weights carry no grammar; record the preference, assert nothing
        lps = scorer.fill_mask_logprobs("o neno que cantaba onte {MASK} na casa .", ["aparece", "aparecen"])
        preferred = "aparece" if lps[0] > lps[1] else "aparecen"
        print(f"smoke observation: singular-context preference = {preferred!r} (lps={lps})")

    def test_handshake_payload(self, scorer):
        hello = scorer.hello()
        assert hello["mask_token"] == "[MASK]"
        assert hello["deterministic"] is True
        assert hello["name"]
