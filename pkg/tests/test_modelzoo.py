from __future__ import annotations

import numpy as np
import pytest

from uqbench.modelzoo import (
    MEMBER_IDS,
    ModelMember,
    PreprocessSpec,
    list_members,
    load_image,
    predict,
    preprocess,
    preprocess_view,
    to_rgb,
    top1_accuracy,
)

from .synthetic import FixedProbsNet, PooledNet, make_member, write_png


def test_members_are_the_five_classifiers():
    assert list_members() == ["resnet50", "vgg16", "densenet121", "alexnet", "googlenet"]
    assert list_members() == list(MEMBER_IDS)


def test_unknown_member_is_rejected():
    with pytest.raises(ValueError, match="Unknown member"):
        ModelMember("lenet")


def test_member_construction_is_lazy(tmp_path):
    m = ModelMember("resnet50", weights_dir=tmp_path / "w")
    assert m.weights_source == "IMAGENET1K_V1"
    assert m.invocations == 0
    assert not (tmp_path / "w").exists()


def test_to_rgb_replicates_gray_and_drops_alpha():
    gray = np.arange(6, dtype=np.uint8).reshape(2, 3)
    out = to_rgb(gray)
    assert out.shape == (2, 3, 3)
    assert np.array_equal(out[:, :, 0], gray) and np.array_equal(out[:, :, 2], gray)

    rgba = np.zeros((2, 2, 4), dtype=np.uint8)
    rgba[..., 3] = 255
    rgba[..., 0] = 9
    out = to_rgb(rgba)
    assert out.shape == (2, 2, 3)
    assert out[0, 0].tolist() == [9, 0, 0]


def test_to_rgb_rejects_zero_size():
    with pytest.raises(ValueError, match="Zero-size"):
        to_rgb(np.zeros((0, 4, 3), dtype=np.uint8))


def test_preprocess_shapes():
    img = np.full((300, 400, 3), 128, dtype=np.uint8)
    view = preprocess_view(img)
    assert view.shape == (224, 224, 3) and view.dtype == np.uint8
    x = preprocess(img)
    assert x.shape == (3, 224, 224) and x.dtype == np.float32
    expected = (128 / 255.0 - 0.485) / 0.229
    assert x[0, 100, 100] == pytest.approx(expected, rel=1e-5)


def test_preprocess_handles_portrait_and_gray(tiny_spec):
    img = np.full((20, 10), 255, dtype=np.uint8)
    x = preprocess(img, tiny_spec)
    assert x.shape == (3, 8, 8)
    assert np.allclose(x, 1.0)


def test_preprocess_spec_validation():
    with pytest.raises(ValueError):
        PreprocessSpec(resize_short_side=8, center_crop=16)
    with pytest.raises(ValueError):
        PreprocessSpec(channel_stds=(1.0, 0.0, 1.0))


def test_load_image_returns_rgb(tmp_path):
    rgb = np.zeros((4, 5, 3), dtype=np.uint8)
    rgb[..., 0] = 200
    path = write_png(tmp_path / "red.png", rgb)
    loaded = load_image(path)
    assert loaded.shape == (4, 5, 3)
    assert loaded[0, 0].tolist() == [200, 0, 0]


def test_load_image_failure(tmp_path):
    bogus = tmp_path / "bogus.png"
    bogus.write_bytes(b"not an image")
    with pytest.raises(ValueError, match="Failed to read image"):
        load_image(bogus)


def test_predict_returns_normalized_float64_vector(tiny_spec, rgb_image):
    member = make_member("resnet50", PooledNet(seed=1))
    p = member.predict_image(rgb_image)
    assert p.shape == (1000,) and p.dtype == np.float64
    assert p.sum() == pytest.approx(1.0, abs=1e-6)
    assert np.all(p >= 0)
    assert member.invocations == 1


def test_predict_is_deterministic(tiny_spec, rgb_image):
    member = make_member("vgg16", PooledNet(seed=2))
    x = preprocess(rgb_image, tiny_spec)
    assert np.array_equal(predict(member, x), predict(member, x))


def test_predict_rejects_shape_mismatch():
    member = make_member("alexnet", PooledNet(seed=3))
    with pytest.raises(ValueError, match="shape mismatch"):
        member.predict(np.zeros((3, 224, 224), dtype=np.float32))


def test_predict_rejects_non_finite_output(rgb_image):
    member = make_member("googlenet", FixedProbsNet([np.nan, 0.5, 0.5]))
    with pytest.raises(ValueError, match="Non-finite"):
        member.predict_image(rgb_image)


def test_fixed_probabilities_reproduce_through_softmax(rgb_image):
    probs = [0.7, 0.2, 0.1]
    member = make_member("densenet121", FixedProbsNet(probs))
    assert member.predict_image(rgb_image) == pytest.approx(probs, abs=1e-12)


def test_top1_accuracy_in_percent(tiny_spec):
    member = make_member("resnet50", FixedProbsNet([0.1, 0.9]))
    img = np.zeros((8, 8, 3), dtype=np.uint8)
    assert top1_accuracy(member, [(img, 1), (img, 1), (img, 0), (img, 1)]) == pytest.approx(75.0)
