import numpy as np

from dvdkit.core import CompressionRate, ImageTensor, Rng
from dvdkit.task import (
    N_CLASSES,
    TaskSpec,
    answer,
    build_router_dataset,
    fit_task_router,
    fused_tokens,
    make_image,
    make_tile,
    reference_lm,
)
from dvdkit.vision import encode_tile, pooled_feature, route_tile


def test_make_image_deterministic():
    a, la = make_image(Rng(3), 2, 1)
    b, lb = make_image(Rng(3), 2, 1)
    assert la == lb and np.array_equal(a.pixels, b.pixels)
    assert (a.height, a.width) == (896, 448)


def test_reference_lm_answers_prototypes():
    spec = TaskSpec()
    lm = reference_lm(spec)
    for label in range(N_CLASSES):
        tile = ImageTensor(448, 448, make_tile(Rng(100 + label).generator(), label))
        _, q = fused_tokens(tile, spec, CompressionRate.QUARTER)
        assert answer(lm, q) == label


def test_flat_tiles_survive_compression_textured_do_not():
    spec = TaskSpec()
    lm = reference_lm(spec)
    g = Rng(5).generator()
    for label in range(N_CLASSES):
        tile = ImageTensor(448, 448, make_tile(g, label))
        _, q = fused_tokens(tile, spec, CompressionRate.QUARTER)
        _, c = fused_tokens(tile, spec, CompressionRate.SIXTEENTH)
        if label == 0:
            assert answer(lm, c) == 0
        else:
            assert answer(lm, q) == label


def test_router_dataset_and_fit():
    ds = build_router_dataset(n_tiles=48, seed=1)
    labelled = ds.pairs()
    assert len(labelled) == 48
    ones = sum(lab for _, lab in labelled)
    assert abs(ones - 24) <= 1
    params = fit_task_router(n_tiles=48, seed=1)
    spec = TaskSpec()
    g = Rng(77).generator()
    for label in (0, 1, 2, 3, 0, 2):
        tile = ImageTensor(448, 448, make_tile(g, label))
        rate = route_tile(encode_tile(tile, spec.encoder, spec.dim), params).rate
        want = CompressionRate.SIXTEENTH if label == 0 else CompressionRate.QUARTER
        assert rate is want
    assert params.dim == pooled_feature(encode_tile(tile, spec.encoder, spec.dim)).size
