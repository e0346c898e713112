from __future__ import annotations

import numpy as np
import pytest

from uqbench.labelspace import AcceptedClassSet
from uqbench.perturb import (
    DEFAULT_SUITE,
    apply_filter,
    apply_perturbation,
    gaussian_blur,
    gaussian_kernel,
    grayscale,
    hue_shift,
    robustness_eval,
    rotate,
    sepia,
)
from uqbench.types import PerturbationSpec

from .synthetic import BrightnessNet, make_member


def test_rotate_multiples_of_90_are_exact(rgb_image):
    assert np.array_equal(rotate(rgb_image, 0), rgb_image)
    assert np.array_equal(rotate(rgb_image, 360), rgb_image)
    r90 = rotate(rgb_image, 90)
    assert r90.shape == (16, 12, 3)
    # counter-clockwise: the top-right pixel moves to the top-left
    assert np.array_equal(r90[0, 0], rgb_image[0, -1])
    r180 = rotate(rgb_image, 180)
    assert np.array_equal(r180, rgb_image[::-1, ::-1])
    assert np.array_equal(rotate(r180, 180), rgb_image)
    assert np.array_equal(rotate(rgb_image, -90), rotate(rgb_image, 270))


def test_rotate_arbitrary_angle_enlarges_canvas(rgb_image):
    out = rotate(rgb_image, 45)
    assert out.shape[0] > rgb_image.shape[0] and out.shape[1] > rgb_image.shape[1]
    assert out.dtype == np.uint8
    assert out[0, 0].tolist() == [0, 0, 0]


def test_rotate_rejects_empty_image():
    with pytest.raises(ValueError):
        rotate(np.zeros((0, 0, 3), dtype=np.uint8), 90)


@pytest.mark.parametrize(
    "pixel, expected",
    [
        ((100, 50, 0), (78, 69, 54)),
        ((10, 20, 30), (25, 22, 17)),
        ((255, 255, 255), (255, 255, 239)),
        ((0, 0, 0), (0, 0, 0)),
    ],
)
def test_sepia_matrix_with_clamping(pixel, expected):
    img = np.array([[pixel]], dtype=np.uint8)
    assert tuple(sepia(img)[0, 0].tolist()) == expected


def test_grayscale_uses_luma_weights():
    img = np.array([[[255, 0, 0], [0, 0, 255], [100, 100, 100]]], dtype=np.uint8)
    out = grayscale(img)
    assert out[0, 0].tolist() == [76, 76, 76]
    assert out[0, 1].tolist() == [29, 29, 29]
    assert out[0, 2].tolist() == [100, 100, 100]


def test_filters_keep_alpha_channel():
    rgba = np.zeros((2, 2, 4), dtype=np.uint8)
    rgba[..., 0] = 200
    rgba[..., 3] = 77
    for out in (grayscale(rgba), sepia(rgba), hue_shift(rgba, 30)):
        assert out.shape == (2, 2, 4)
        assert np.all(out[..., 3] == 77)


def test_gaussian_kernel_is_normalized():
    k = gaussian_kernel(2.0)
    assert k.size == 13
    assert k.sum() == pytest.approx(1.0)
    assert np.argmax(k) == 6


def test_gaussian_blur(rgb_image):
    assert np.array_equal(gaussian_blur(rgb_image, 0.0), rgb_image)
    flat = np.full((10, 10, 3), 90, dtype=np.uint8)
    assert np.array_equal(gaussian_blur(flat, 1.5), flat)
    blurred = gaussian_blur(rgb_image, 2.0)
    assert blurred.shape == rgb_image.shape
    assert blurred.astype(float).std() < rgb_image.astype(float).std()
    with pytest.raises(ValueError):
        gaussian_blur(rgb_image, -1.0)


def test_hue_shift_rotates_primaries():
    red = np.array([[[255, 0, 0]]], dtype=np.uint8)
    assert hue_shift(red, 120)[0, 0].tolist() == [0, 255, 0]
    assert hue_shift(red, -120)[0, 0].tolist() == [0, 0, 255]
    assert np.array_equal(hue_shift(red, 0), red)
    with pytest.raises(ValueError):
        hue_shift(red, 200)


def test_spec_requires_matching_parameters():
    with pytest.raises(ValueError, match="requires"):
        PerturbationSpec(kind="rotate")
    with pytest.raises(ValueError, match="does not accept"):
        PerturbationSpec(kind="sepia", sigma=1.0)
    with pytest.raises(ValueError, match="Unknown"):
        PerturbationSpec(kind="posterize")
    with pytest.raises(ValueError):
        PerturbationSpec(kind="hue_shift", shift=181.0)


def test_spec_labels():
    assert [s.label() for s in DEFAULT_SUITE] == ["rotate 180", "sepia"]
    assert PerturbationSpec(kind="gaussian_blur", sigma=2.0).label() == "gaussian_blur sigma=2"
    assert PerturbationSpec(kind="hue_shift", shift=-30.0).to_dict() == {"kind": "hue_shift", "shift": -30.0}


def test_apply_filter_rejects_rotation(rgb_image):
    with pytest.raises(ValueError, match="Not a filter"):
        apply_filter(rgb_image, PerturbationSpec(kind="rotate", degrees=90.0))
    out = apply_perturbation(rgb_image, PerturbationSpec(kind="rotate", degrees=90.0))
    assert out.shape == (16, 12, 3)


def test_grayscale_flips_brightness_classifier():
    # pure blue: mean 1/3 before, luma 0.114 after
    blue = np.zeros((8, 8, 3), dtype=np.uint8)
    blue[..., 2] = 255
    member = make_member("resnet50", BrightnessNet(threshold=0.2))
    accepted = AcceptedClassSet("bright", frozenset({0}))
    specs = [PerturbationSpec(kind="grayscale"), PerturbationSpec(kind="rotate", degrees=180.0)]

    records = robustness_eval(member, blue, specs, accepted, image_id="blue")
    gray, rotated = records
    assert gray.original_prediction.class_index == 0
    assert gray.perturbed_prediction.class_index == 1
    assert gray.flipped and gray.originally_correct and not gray.perturbed_correct
    assert not rotated.flipped
    assert rotated.perturbed_correct
    assert member.invocations == 3


def test_robustness_eval_with_no_specs(rgb_image):
    member = make_member("resnet50", BrightnessNet())
    assert robustness_eval(member, rgb_image, [], AcceptedClassSet("x", frozenset({0}))) == []
    assert member.invocations == 0
