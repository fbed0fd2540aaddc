import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minder.errors import InvalidSigma
from minder.imagio import ImageTensor
from minder.perturb import (
    BlurKernel,
    PerturbationSpec,
    add_noise,
    apply,
    blur,
    blur_residual,
    build_kernel,
    noise_field,
    sharpen,
)
from conftest import random_image
from oracles import conv3_direct

# published 3x3 kernel weight tables, +-0.0005 per entry
KERNEL_TABLE = {
    0.45: [[0.005, 0.062, 0.005], [0.062, 0.731, 0.062], [0.005, 0.062, 0.005]],
    0.50: [[0.011, 0.084, 0.011], [0.084, 0.619, 0.084], [0.011, 0.084, 0.011]],
    0.55: [[0.019, 0.100, 0.019], [0.100, 0.523, 0.100], [0.019, 0.100, 0.019]],
    0.60: [[0.028, 0.111, 0.028], [0.111, 0.445, 0.111], [0.028, 0.111, 0.028]],
    0.65: [[0.036, 0.118, 0.036], [0.118, 0.385, 0.118], [0.036, 0.118, 0.036]],
}


def impulse_image(size=9):
    arr = np.zeros((size, size, 3))
    arr[size // 2, size // 2, :] = 1.0
    return ImageTensor(arr)


class TestBuildKernel:
    @pytest.mark.parametrize("sigma", sorted(KERNEL_TABLE))
    def test_reference_tables(self, sigma):
        kernel = build_kernel(sigma)
        assert np.max(np.abs(kernel.weights - np.array(KERNEL_TABLE[sigma]))) <= 5e-4

    def test_tiny_sigma_collapses_to_identity(self):
        kernel = build_kernel(0.05)
        assert kernel.center > 0.9999
        assert kernel.weights[0, 0] < 1e-30

    @pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf"), "x"])
    def test_invalid_sigma(self, bad):
        with pytest.raises(InvalidSigma):
            build_kernel(bad)

    @given(st.floats(min_value=0.05, max_value=2.0))
    @settings(max_examples=60, deadline=None)
    def test_l1_norm_is_one(self, sigma):
        kernel = build_kernel(sigma)
        assert abs(float(kernel.weights.sum()) - 1.0) <= 1e-9

    @given(st.floats(min_value=0.05, max_value=2.0))
    @settings(max_examples=60, deadline=None)
    def test_monotone_with_radius(self, sigma):
        w = build_kernel(sigma).weights
        assert w[1, 1] >= w[0, 1] >= w[0, 0] >= 0

    def test_invariants_enforced_by_type(self):
        with pytest.raises(ValueError):
            BlurKernel(weights=np.full((3, 3), 0.2), sigma=0.5)
        lopsided = np.full((3, 3), 1 / 9.0)
        lopsided[0, 0] += 1e-3
        lopsided[2, 2] -= 1e-3
        with pytest.raises(ValueError):
            BlurKernel(weights=lopsided, sigma=0.5)


class TestBlur:
    def test_constant_image_unchanged_exactly(self):
        img = ImageTensor(np.full((16, 12, 3), 0.37))
        for sigma in (0.1, 0.45, 0.55, 1.5):
            out = blur(img, build_kernel(sigma))
            assert np.array_equal(out.data, img.data)

    def test_impulse_response_equals_weights_exactly(self):
        kernel = build_kernel(0.55)
        out = blur(impulse_image(), kernel)
        for c in range(3):
            assert np.array_equal(out.data[3:6, 3:6, c], kernel.weights)
        assert out.data[0, 0, 0] == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_direct_oracle(self, seed):
        img = random_image(seed)
        kernel = build_kernel(0.45)
        got = blur(img, kernel).data
        want = np.clip(conv3_direct(img.data, kernel.weights), 0.0, 1.0)
        assert np.max(np.abs(got - want)) < 1e-9

    def test_output_in_range(self):
        img = random_image(99, size=(12, 12))
        out = blur(img, build_kernel(0.65))
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0


class TestBlurResidual:
    def test_constant_residual_is_zero_exactly(self):
        img = ImageTensor(np.full((8, 8, 3), 0.61))
        res = blur_residual(img, build_kernel(0.55))
        assert np.array_equal(res, np.zeros_like(res))

    def test_impulse_residual_structure(self):
        kernel = build_kernel(0.55)
        res = blur_residual(impulse_image(), kernel)
        assert res[4, 4, 0] == 1.0 - kernel.center
        assert res[4, 3, 1] == -kernel.weights[1, 0]
        assert res[3, 3, 2] == -kernel.weights[0, 0]

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_oracle(self, seed):
        img = random_image(seed + 10)
        kernel = build_kernel(0.55)
        want = img.data - conv3_direct(img.data, kernel.weights)
        assert np.max(np.abs(blur_residual(img, kernel) - want)) < 1e-9

    def test_blur_plus_residual_reconstucts_input(self):
        img = random_image(77, size=(10, 14))
        kernel = build_kernel(0.6)
        raw = img.data - blur_residual(img, kernel)
        assert np.max(np.abs(raw + blur_residual(img, kernel) - img.data)) < 1e-9

    def test_residual_grows_with_sigma(self):
        img = random_image(5, size=(32, 32))
        values = [
            np.abs(blur_residual(img, build_kernel(s))).sum()
            for s in (0.45, 0.5, 0.55, 0.6, 0.65)
        ]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestSharpen:
    def test_constant_unchanged(self):
        img = ImageTensor(np.full((8, 8, 3), 0.3))
        assert np.array_equal(sharpen(img, build_kernel(0.55)).data, img.data)

    def test_impulse_clips_both_sides(self):
        kernel = build_kernel(0.55)
        out = sharpen(impulse_image(), kernel)
        assert out.data[4, 4, 0] == 1.0  # 2 - 0.523 clipped
        assert out.data[4, 3, 0] == 0.0  # 0 - w clipped
        assert out.data[0, 0, 0] == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_oracle(self, seed):
        img = random_image(seed + 20)
        kernel = build_kernel(0.5)
        want = np.clip(2.0 * img.data - conv3_direct(img.data, kernel.weights), 0.0, 1.0)
        assert np.max(np.abs(sharpen(img, kernel).data - want)) < 1e-9


class TestAddNoise:
    def test_same_key_identical(self):
        img = random_image(1, size=(16, 16))
        a = add_noise(img, 0.009, seed=42, sample_index=1)
        b = add_noise(img, 0.009, seed=42, sample_index=1)
        assert np.array_equal(a.data, b.data)

    def test_different_sample_index_differs(self):
        img = random_image(1, size=(16, 16))
        a = add_noise(img, 0.009, seed=42, sample_index=0)
        b = add_noise(img, 0.009, seed=42, sample_index=1)
        assert not np.array_equal(a.data, b.data)

    def test_empirical_std_at_nominal_sigma(self):
        img = ImageTensor(np.full((224, 224, 3), 0.5))
        out = add_noise(img, 0.009, seed=7, sample_index=0)
        std = float((out.data - img.data).std())
        assert 0.0085 <= std <= 0.0095

    def test_clipping_at_bounds(self):
        ones = ImageTensor(np.ones((16, 16, 3)))
        out = add_noise(ones, 0.5, seed=3, sample_index=0)
        assert out.data.max() <= 1.0
        zeros = ImageTensor(np.zeros((16, 16, 3)))
        out = add_noise(zeros, 0.5, seed=3, sample_index=0)
        assert out.data.min() >= 0.0

    def test_invalid_sigma(self):
        img = random_image(1)
        with pytest.raises(InvalidSigma):
            add_noise(img, 0.0, seed=1)
        with pytest.raises(InvalidSigma):
            add_noise(img, float("nan"), seed=1)

    def test_field_keyed_by_shape_not_image(self):
        f1 = noise_field((8, 8, 3), 0.01, seed=9, sample_index=0)
        f2 = noise_field((8, 8, 3), 0.01, seed=9, sample_index=0)
        assert np.array_equal(f1, f2)


class TestApply:
    def test_noise_produces_n_distinct_variants(self):
        img = random_image(2, size=(16, 16))
        spec = PerturbationSpec(kind="gaussian_noise", sigma_noise=0.01, n_samples=3, seed=1)
        out = apply(img, spec)
        assert len(out.variants) == 3 and not out.pair_mode
        assert not np.array_equal(out.variants[0].data, out.variants[1].data)
        assert not np.array_equal(out.variants[1].data, out.variants[2].data)

    def test_contrastive_pair_contract(self):
        img = random_image(3, size=(16, 16))
        spec = PerturbationSpec(kind="contrastive_blur", sigma_blur=0.55)
        out = apply(img, spec)
        assert len(out.variants) == 2 and out.pair_mode
        kernel = build_kernel(0.55)
        assert np.array_equal(out.variants[0].data, blur(img, kernel).data)
        assert np.array_equal(out.variants[1].data, sharpen(img, kernel).data)

    def test_blur_and_sharpen_single_variant(self):
        img = random_image(4, size=(16, 16))
        for kind in ("gaussian_blur", "sharpen"):
            out = apply(img, PerturbationSpec(kind=kind, sigma_blur=0.5))
            assert len(out.variants) == 1 and not out.pair_mode

    def test_mix_on_constant_equals_pure_noise(self):
        img = ImageTensor(np.full((16, 16, 3), 0.5))
        mix = apply(
            img,
            PerturbationSpec(
                kind="mix", sigma_noise=0.02, sigma_blur=0.55, n_samples=2, seed=11
            ),
        )
        for i, variant in enumerate(mix.variants):
            pure = add_noise(img, 0.02, seed=11, sample_index=i)
            assert np.array_equal(variant.data, pure.data)

    def test_outputs_in_unit_range(self):
        img = random_image(6, size=(16, 16))
        for kind, kwargs in (
            ("gaussian_noise", {"sigma_noise": 0.3, "n_samples": 2}),
            ("gaussian_blur", {"sigma_blur": 0.65}),
            ("sharpen", {"sigma_blur": 0.65}),
            ("contrastive_blur", {"sigma_blur": 0.65}),
            ("mix", {"sigma_noise": 0.3, "sigma_blur": 0.65, "n_samples": 2}),
        ):
            out = apply(img, PerturbationSpec(kind=kind, seed=5, **kwargs))
            for v in out.variants:
                assert v.data.min() >= 0.0 and v.data.max() <= 1.0

    def test_full_determinism(self):
        img = random_image(8, size=(16, 16))
        spec = PerturbationSpec(kind="mix", sigma_noise=0.05, sigma_blur=0.5, n_samples=3, seed=2)
        a = apply(img, spec)
        b = apply(img, spec)
        for va, vb in zip(a.variants, b.variants):
            assert np.array_equal(va.data, vb.data)


class TestPerturbationSpec:
    def test_kind_validation(self):
        with pytest.raises(ValueError):
            PerturbationSpec(kind="fog")

    def test_sigma_requirements_per_kind(self):
        with pytest.raises(InvalidSigma):
            PerturbationSpec(kind="gaussian_noise", sigma_noise=0.0)
        with pytest.raises(InvalidSigma):
            PerturbationSpec(kind="contrastive_blur", sigma_blur=0.0)
        with pytest.raises(InvalidSigma):
            PerturbationSpec(kind="mix", sigma_noise=0.01, sigma_blur=0.0)

    def test_n_samples_floor(self):
        with pytest.raises(ValueError):
            PerturbationSpec(kind="gaussian_noise", sigma_noise=0.01, n_samples=0)

    def test_default_channel_names(self):
        assert PerturbationSpec(kind="gaussian_noise", sigma_noise=0.01).name == "noise"
        assert PerturbationSpec(kind="contrastive_blur", sigma_blur=0.5).name == "contrastive_blur"

    def test_json_round_trip(self):
        spec = PerturbationSpec(
            kind="contrastive_blur", sigma_blur=0.55, seed=1234, name="cb"
        )
        rec = spec.to_json_dict()
        assert rec["kind"] == "contrastive_blur" and rec["sigma_blur"] == 0.55
        assert PerturbationSpec.from_json_dict(rec) == spec
