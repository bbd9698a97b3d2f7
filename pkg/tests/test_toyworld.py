#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
unit tests:

  * generator backends
  * labeling oracles
  * biased dataset sampling

see copyright/license in README.md
"""

import pathlib
import tempfile

import numpy as np
import pytest

from cf_diagnosis.diffcore import Tape, Tensor, backward, finite_difference_check
from cf_diagnosis.errors import ConfigError, ShapeError
from cf_diagnosis.tensorio import load_tensor
from cf_diagnosis.toyworld import (
    Backend,
    BackendSpec,
    BiasedDatasetSpec,
    KeypointMap,
    LabelRule,
    World,
    label,
    make_backend,
    sample_biased_latents,
    sample_uniform_latents,
)
from cf_diagnosis.util import rng_stream


def _backend(
    kind: str = "linear-basis",
    seed: int = 1,
    *,
    mix_strength: float = 0.3,
) -> Backend:
    return make_backend(BackendSpec(kind=kind, seed=seed, image_size=(16, 16), attr_count=8, mix_strength=mix_strength))


def test_backend_determinism(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Same spec, bitwise identical bases; other seeds give other bases.
    """
    one: Backend = _backend(seed=5)
    two: Backend = _backend(seed=5)
    other: Backend = _backend(seed=6)

    assert one.bases.tobytes() == two.bases.tobytes()
    assert one.bias.tobytes() == two.bias.tobytes()
    assert one.bases.tobytes() != other.bases.tobytes()


def test_backend_validation(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Degenerate specs are rejected before any basis is drawn.
    """
    for spec in (
        BackendSpec(image_size=(8, 8), attr_count=65),
        BackendSpec(attr_count=1),
        BackendSpec(image_size=(4, 16)),
        BackendSpec(kind="stylegan"),
        BackendSpec(kind="mixed-basis", mix_strength=1.5),
    ):
        with pytest.raises(ConfigError):
            make_backend(spec)


def test_two_bases_are_distinct(
    *,
    debug: bool = False,
) -> None:
    """
    A K=2 linear backend has weakly correlated bases.
    """
    backend: Backend = make_backend(BackendSpec(seed=3, attr_count=2))
    corr: float = float(np.corrcoef(backend.basis_rows)[0, 1])

    if debug:
        print("basis correlation", corr)

    assert abs(corr) < 0.5


def test_zero_mixing_matches_linear(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    With `mix_strength=0` the mixed-basis backend renders like the linear one.
    """
    linear: Backend = _backend("linear-basis", seed=9)
    mixed: Backend = _backend("mixed-basis", seed=9, mix_strength=0.0)
    latents: np.ndarray = sample_uniform_latents(np.random.default_rng(0), 16, 8)

    np.testing.assert_allclose(mixed.generate(latents), linear.generate(latents), atol=1e-6)


def test_mixed_bends_latent(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    The mixed-basis backend renders `s + m * tanh(W s)` through the linear
    backend's bases.
    """
    linear: Backend = _backend("linear-basis", seed=9)
    mixed: Backend = _backend("mixed-basis", seed=9, mix_strength=0.3)
    latents: np.ndarray = sample_uniform_latents(np.random.default_rng(2), 16, 8).astype(np.float64)

    assert mixed.mixing is not None
    bent: np.ndarray = latents + 0.3 * np.tanh(latents @ mixed.mixing.astype(np.float64).T)

    np.testing.assert_allclose(
        mixed.generate(latents.astype(np.float32)),
        linear.generate(bent.astype(np.float32)),
        atol=1e-5,
    )


def test_basis_energy(
    *,
    debug: bool = False,
) -> None:
    """
    Plain blobs peak at the backend amplitude, and textured blobs carry
    about the same energy, so no attribute dominates the image.
    """
    backend: Backend = _backend(seed=4)
    energy: np.ndarray = np.linalg.norm(backend.basis_rows.astype(np.float64), axis=1)

    if debug:
        print("basis energy", energy)

    for k in range(0, 8, 3):
        assert float(backend.bases[k].max()) == pytest.approx(Backend.AMPLITUDE, abs=1e-5)

    assert float(energy.max() / energy.min()) <= 1.5


def test_generate_values(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    The zero latent renders `sigmoid(b)`; every render stays inside (0, 1).
    """
    for kind in ("linear-basis", "mixed-basis"):
        backend: Backend = _backend(kind)
        zero: np.ndarray = backend.generate(np.zeros(8, dtype=np.float32))
        expected: np.ndarray = 1.0 / (1.0 + np.exp(-backend.bias.astype(np.float64)))

        assert zero.shape == (16, 16)
        np.testing.assert_allclose(zero, expected, atol=1e-6)

        images: np.ndarray = backend.generate(sample_uniform_latents(np.random.default_rng(1), 1000, 8))

        assert images.shape == (1000, 16, 16)
        assert images.min() > 0.0
        assert images.max() < 1.0

    with pytest.raises(ShapeError):
        _backend().generate(np.zeros(5, dtype=np.float32))


def test_generate_gradients(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Rendering is smooth in the latent: tape gradients match central
    differences, and the analytic Jacobian matches the tape.
    """
    rng: np.random.Generator = np.random.default_rng(4)

    for kind in ("linear-basis", "mixed-basis"):
        backend: Backend = _backend(kind)
        weight: np.ndarray = rng.normal(size=(16, 16))

        def build(tape: Tape, p: dict[str, Tensor]) -> Tensor:
            return tape.sum(tape.mul(backend.generate_tensor(p["s"]), tape.const(weight)))  # pylint: disable=W0640

        for _ in range(100):
            point: np.ndarray = rng.uniform(0.0, 1.0, size=8)
            assert finite_difference_check(build, {"s": point}, rel_tol=1e-4).passed

        tape: Tape = Tape(dtype=np.float64)
        grads: dict[str, np.ndarray] = backward(tape, build(tape, {"s": tape.param("s", point)}))
        np.testing.assert_allclose(backend.jacobian(point).T @ weight.ravel(), grads["s"], rtol=1e-5, atol=1e-6)


def test_shared_attribute_semantics(
    *,
    debug: bool = False,
) -> None:
    """
    Editing coordinate k moves the same image region under every seed.
    """
    one: Backend = _backend(seed=11)
    two: Backend = _backend(seed=12)
    point: np.ndarray = np.full(8, 0.5)

    mask_one: np.ndarray = np.abs(one.jacobian(point))
    mask_two: np.ndarray = np.abs(two.jacobian(point))

    for k in range(8):
        corr: float = float(np.corrcoef(mask_one[:, k], mask_two[:, k])[0, 1])

        if debug:
            print(k, corr)

        assert corr > 0.0


def test_sample_latent(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Uniform cube coordinates, reproducible per seed, off the label boundary.
    """
    backend: Backend = _backend()
    first: np.ndarray = backend.sample_latent(rng_stream(3, "latents"))
    again: np.ndarray = backend.sample_latent(rng_stream(3, "latents"))

    np.testing.assert_array_equal(first, again)
    assert first.shape == (8,)

    many: np.ndarray = sample_uniform_latents(np.random.default_rng(8), 10_000, 8)

    assert many.min() >= 0.0
    assert many.max() <= 1.0
    assert np.all(np.abs(many - 0.5) >= 1e-3 - 1e-7)
    assert np.all((many.mean(axis=0) > 0.47) & (many.mean(axis=0) < 0.53))


def test_binary_label(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Class 1 iff the main coordinate is strictly above 0.5.
    """
    rule: LabelRule = LabelRule(main_attr=2)
    s: np.ndarray = np.full(8, 0.1)

    s[2] = 0.9
    assert label(s, rule) == 1

    s[2] = 0.5
    assert label(s, rule) == 0


def test_keypoint_continuity(
    *,
    debug: bool = False,
) -> None:
    """
    Keypoints lie in the unit square and never move faster than the
    map's Lipschitz bound.
    """
    rule: LabelRule = LabelRule(task="keypoint", keypoints=5, seed=2)
    kp_map: KeypointMap = KeypointMap(rule, 8)
    bound: float = kp_map.lipschitz_bound()
    rng: np.random.Generator = np.random.default_rng(5)
    worst: float = 0.0

    for _ in range(500):
        s: np.ndarray = rng.uniform(size=8)
        t: np.ndarray = s + rng.normal(scale=0.05, size=8)
        points: np.ndarray = label(s, rule, keypoint_map=kp_map)

        assert points.shape == (5, 2)
        assert np.all((points > 0.0) & (points < 1.0))

        moved: float = float(np.linalg.norm(kp_map(t).astype(np.float64) - points))
        worst = max(worst, moved / float(np.linalg.norm(t - s)))

    if debug:
        print("measured", worst, "bound", bound)

    assert worst <= bound + 1e-4


def test_segmentation_label(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    One class per pixel; the oracle needs the backend that drew the regions.
    """
    rule: LabelRule = LabelRule(task="segmentation", seg_classes=3)
    backend: Backend = _backend()
    classes: np.ndarray = label(np.full(8, 0.9), rule, backend=backend)

    assert classes.shape == (256,)
    assert set(np.unique(classes).tolist()) <= {0, 1, 2}
    assert len(np.unique(classes)) > 1

    # nothing present: only background
    assert set(label(np.zeros(8), rule, backend=backend).tolist()) == {0}

    with pytest.raises(ConfigError):
        label(np.zeros(8), rule)


def test_biased_congruence(
    *,
    debug: bool = False,
) -> None:
    """
    Congruence between class and spurious attribute is total at
    `epsilon=0`, a coin flip at `epsilon=1`, and `1 - epsilon/2` between.
    """
    for epsilon, expected in ((0.0, 1.0), (1.0, 0.5), (0.2, 0.9)):
        spec: BiasedDatasetSpec = BiasedDatasetSpec(spurious_attr=(1,), epsilon=epsilon, n_per_class=5000)
        latents, planted = sample_biased_latents(spec, 8, rng_stream(0, "congruence", int(epsilon * 10)))
        classes: np.ndarray = (latents[:, 0] > 0.5).astype(int)
        rate: float = float(np.mean(classes == (latents[:, 1] > 0.5)))
        stderr: float = float(np.sqrt(max(expected * (1.0 - expected), 0.25 * 0.01) / latents.shape[0]))

        if debug:
            print(epsilon, rate, planted.mean())

        assert latents.shape == (10_000, 8)
        assert classes.sum() == 5000

        if epsilon == 0.0:
            assert rate == 1.0
        elif epsilon == 1.0:
            assert abs(rate - 0.5) <= 0.05
        else:
            assert abs(rate - expected) <= 3.0 * stderr


def test_planted_ratio(
    *,
    debug: bool = False,
) -> None:
    """
    About one in a hundred samples per class escapes the planted correlation.
    """
    spec: BiasedDatasetSpec = BiasedDatasetSpec(n_per_class=10_000)
    _, planted = sample_biased_latents(spec, 8, rng_stream(0, "ratio"))

    for block in (planted[:10_000], planted[10_000:]):
        escaped: int = int((~block).sum())

        if debug:
            print("unplanted", escaped)

        assert abs(escaped - 99) <= 3.0 * np.sqrt(99)


def test_biased_spec_validation(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    The spurious attribute must differ from the main one and fit the world.
    """
    for spec in (
        BiasedDatasetSpec(spurious_attr=(0,)),
        BiasedDatasetSpec(spurious_attr=()),
        BiasedDatasetSpec(spurious_attr=(9,)),
        BiasedDatasetSpec(epsilon=1.5),
        BiasedDatasetSpec(n_per_class=0),
    ):
        with pytest.raises(ConfigError):
            spec.validate(8)


def test_world_datasets(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Datasets alternate backends, label from latents, and compose.
    """
    world: World = World([_backend(seed=1), _backend("mixed-basis", seed=2)], LabelRule())
    data = world.sample_biased_dataset(BiasedDatasetSpec(n_per_class=20), rng_stream(0, "world"))

    assert len(data) == 40
    assert data.images is not None and data.images.shape == (40, 16, 16)
    np.testing.assert_array_equal(data.backend_ids[:4], [0, 1, 0, 1])
    np.testing.assert_array_equal(data.labels, (data.latents[:, 0] > 0.5).astype(int))
    np.testing.assert_allclose(data.images[1], world.backends[1].generate(data.latents[1]), atol=1e-6)

    both = data.concat(data.subset(data.labels == 1))
    assert len(both) == 60
    assert both.congruent(0, 1).shape == (60,)

    unrendered = world.sample_dataset(10, rng_stream(0, "plain"), render=False)
    assert unrendered.images is None
    assert not unrendered.planted.any()

    assert world.attributes[:2] == ["male", "smiling"]

    with pytest.raises(ConfigError):
        World([_backend(), make_backend(BackendSpec(image_size=(8, 8)))], LabelRule())


def test_export_bases(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    One UMOT tensor per basis plus the bias image.
    """
    backend: Backend = _backend()

    with tempfile.TemporaryDirectory() as tmp_dir:
        written: list[pathlib.Path] = backend.export_bases(pathlib.Path(tmp_dir) / "bases")

        assert len(written) == 9
        np.testing.assert_array_equal(load_tensor(written[3]), backend.bases[3])
        np.testing.assert_array_equal(load_tensor(written[-1]), backend.bias)


if __name__ == "__main__":
    test_backend_determinism(debug=True)
    test_backend_validation(debug=True)
    test_two_bases_are_distinct(debug=True)
    test_zero_mixing_matches_linear(debug=True)
    test_mixed_bends_latent(debug=True)
    test_basis_energy(debug=True)
    test_generate_values(debug=True)
    test_generate_gradients(debug=True)
    test_shared_attribute_semantics(debug=True)
    test_sample_latent(debug=True)
    test_binary_label(debug=True)
    test_keypoint_continuity(debug=True)
    test_segmentation_label(debug=True)
    test_biased_congruence(debug=True)
    test_planted_ratio(debug=True)
    test_biased_spec_validation(debug=True)
    test_world_datasets(debug=True)
    test_export_bases(debug=True)
