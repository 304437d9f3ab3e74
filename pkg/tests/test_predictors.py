"""Toy predictor networks: determinism, causality, refiner row discipline."""

import numpy as np
import pytest

from facemotion import (
    AudioFeatureSequence,
    Deformation,
    DimensionError,
    ModelDims,
    NoiseSpec,
    StyleCode,
    VersionError,
    WeightsError,
    combined_predict,
    init_weights,
    load_weights,
    predict_expressions,
    recompose_with_prediction,
    refine_lips,
    save_weights,
)

from conftest import SMALL_DIMS, SMALL_LIPS, make_audio, random_keypoints, random_pose


class TestInitWeights:
    def test_deterministic(self, small_dims):
        a = save_weights(init_weights(3, small_dims))
        b = save_weights(init_weights(3, small_dims))
        assert a == b

    def test_different_seeds_differ(self, small_dims):
        a = init_weights(0, small_dims)
        b = init_weights(1, small_dims)
        assert any(
            not np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors
        )

    def test_heads_must_divide_model(self):
        with pytest.raises(WeightsError):
            ModelDims(d_model=10, n_heads=3)

    def test_neutral_condition_row_is_zero(self, small_weights):
        table = small_weights.tensors["emotion.table"]
        assert np.array_equal(table[0], np.zeros(table.shape[1]))

    def test_emotion_rows_unit_norm(self, small_weights):
        table = small_weights.tensors["emotion.table"]
        norms = np.linalg.norm(table[1:], axis=1)
        assert np.allclose(norms, 1.0, atol=1e-12)


class TestPredictExpressions:
    def test_shape_contract(self, small_dims, small_weights):
        rng = np.random.default_rng(0)
        audio = make_audio(rng, 10, small_dims.d_audio)
        out = predict_expressions(audio, StyleCode(0, 4), small_weights, window=50)
        assert len(out) == 10
        assert all(d.offsets.shape == (small_dims.n_kp, 3) for d in out)

    def test_deterministic(self, small_dims, small_weights):
        rng = np.random.default_rng(1)
        audio = make_audio(rng, 12, small_dims.d_audio)
        a = predict_expressions(audio, StyleCode(1, 4), small_weights)
        b = predict_expressions(audio, StyleCode(1, 4), small_weights)
        assert all(np.array_equal(x.offsets, y.offsets) for x, y in zip(a, b))

    def test_causality_50_cases(self, small_dims, small_weights):
        # perturbing audio rows > t never changes outputs at rows <= t
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(3, 20))
            t = int(rng.integers(0, n - 1))
            audio = make_audio(rng, n, small_dims.d_audio)
            style = StyleCode(int(rng.integers(0, 4)), 4)
            base = predict_expressions(audio, style, small_weights)
            bumped = audio.embeddings.copy()
            bumped[t + 1 :] += rng.normal(size=bumped[t + 1 :].shape)
            alt = predict_expressions(
                AudioFeatureSequence(bumped, audio.rms), style, small_weights
            )
            for i in range(t + 1):
                assert np.array_equal(base[i].offsets, alt[i].offsets), f"frame {i} leaked"

    def test_style_sensitivity_7_of_8_seeds(self, small_dims):
        rng = np.random.default_rng(3)
        audio = make_audio(rng, 6, small_dims.d_audio)
        differing = 0
        for seed in range(8):
            w = init_weights(seed, small_dims)
            a = predict_expressions(audio, StyleCode(0, 4), w)
            b = predict_expressions(audio, StyleCode(1, 4), w)
            if any(not np.array_equal(x.offsets, y.offsets) for x, y in zip(a, b)):
                differing += 1
        assert differing >= 7

    def test_style_index_out_of_range(self, small_weights):
        rng = np.random.default_rng(4)
        audio = make_audio(rng, 3, SMALL_DIMS.d_audio)
        with pytest.raises(DimensionError):
            predict_expressions(audio, StyleCode(9, 16), small_weights)

    def test_audio_width_mismatch(self, small_weights):
        rng = np.random.default_rng(5)
        audio = make_audio(rng, 3, SMALL_DIMS.d_audio + 1)
        with pytest.raises(DimensionError):
            predict_expressions(audio, StyleCode(0, 4), small_weights)


class TestCombinedPredict:
    def test_neutral_equals_zero_condition(self, small_dims, small_weights):
        rng = np.random.default_rng(6)
        audio = make_audio(rng, 8, small_dims.d_audio)
        zero = np.zeros(small_dims.cond_dim)
        a = combined_predict("neutral", audio, small_weights)
        b = combined_predict(zero, audio, small_weights)
        assert all(np.array_equal(x.offsets, y.offsets) for x, y in zip(a, b))

    def test_deterministic(self, small_dims, small_weights):
        rng = np.random.default_rng(7)
        audio = make_audio(rng, 8, small_dims.d_audio)
        cond = rng.normal(size=small_dims.cond_dim)
        a = combined_predict(cond, audio, small_weights)
        b = combined_predict(cond, audio, small_weights)
        assert all(np.array_equal(x.offsets, y.offsets) for x, y in zip(a, b))

    def test_condition_changes_output(self, small_dims, small_weights):
        rng = np.random.default_rng(8)
        audio = make_audio(rng, 8, small_dims.d_audio)
        a = combined_predict(np.zeros(small_dims.cond_dim), audio, small_weights)
        b = combined_predict(np.ones(small_dims.cond_dim), audio, small_weights)
        assert any(not np.array_equal(x.offsets, y.offsets) for x, y in zip(a, b))


class TestRefineLips:
    def _inputs(self, seed):
        rng = np.random.default_rng(seed)
        k_ori = random_keypoints(rng, SMALL_DIMS.n_kp)
        delta = Deformation(rng.normal(size=(SMALL_DIMS.n_kp, 3)) * 0.1)
        row = rng.normal(size=SMALL_DIMS.d_audio)
        return row, k_ori, delta

    def test_empty_mask_returns_k_rec(self, small_weights):
        from facemotion import RegionMask

        row, k_ori, delta = self._inputs(10)
        empty = RegionMask("lips", ())
        out = refine_lips(row, k_ori, delta, NoiseSpec(), small_weights, empty)
        k_rec = recompose_with_prediction(k_ori, delta)
        assert np.array_equal(out.coords, k_rec.coords)

    def test_sigma_zero_deterministic(self, small_weights):
        row, k_ori, delta = self._inputs(11)
        spec = NoiseSpec(sigma=0.0, seed=0)
        a = refine_lips(row, k_ori, delta, spec, small_weights, SMALL_LIPS)
        b = refine_lips(row, k_ori, delta, spec, small_weights, SMALL_LIPS)
        assert np.array_equal(a.coords, b.coords)

    def test_non_lip_rows_bitwise_100_cases(self, small_weights):
        rng = np.random.default_rng(12)
        non_lip = [i for i in range(SMALL_DIMS.n_kp) if i not in SMALL_LIPS.indices]
        for case in range(100):
            row, k_ori, delta = self._inputs(1000 + case)
            pose = random_pose(rng)
            noise = NoiseSpec(sigma=1e-3, seed=case)
            out = refine_lips(row, k_ori, delta, noise, small_weights, SMALL_LIPS, pose=pose)
            k_rec = recompose_with_prediction(k_ori, delta, pose=pose)
            assert np.array_equal(out.coords[non_lip], k_rec.coords[non_lip])

    def test_lip_rows_actually_move(self, small_weights):
        row, k_ori, delta = self._inputs(13)
        out = refine_lips(row, k_ori, delta, NoiseSpec(), small_weights, SMALL_LIPS)
        k_rec = recompose_with_prediction(k_ori, delta)
        lips = list(SMALL_LIPS.indices)
        assert not np.array_equal(out.coords[lips], k_rec.coords[lips])


class TestWeightsRoundTrip:
    def test_load_save_bit_exact(self, small_weights):
        blob = save_weights(small_weights)
        again = save_weights(load_weights(blob))
        assert blob == again

    def test_all_tensors_equal(self, small_weights):
        back = load_weights(save_weights(small_weights))
        assert set(back.tensors) == set(small_weights.tensors)
        for k, v in small_weights.tensors.items():
            assert np.array_equal(back.tensors[k], v), k

    def test_bad_version(self, small_weights):
        text = save_weights(small_weights).decode()
        tampered = text.replace("weights 1", "weights 9", 1)
        with pytest.raises(VersionError):
            load_weights(tampered.encode())

    def test_truncated(self, small_weights):
        from facemotion import FormatError

        blob = save_weights(small_weights)
        with pytest.raises(FormatError):
            load_weights(blob[: len(blob) // 2])
