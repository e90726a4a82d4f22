import numpy as np
import pytest

from camrefine.attribution import (
    base_cam,
    base_cam_raw,
    baseline_fixed_threshold,
    check_step_feasibility,
    extract_image_span,
    per_token_cam,
    pooled_feasibility,
)
from camrefine.core import (
    ActivationMap,
    FeatureStack,
    GradientStack,
    NoSteps,
    SampleMetadata,
    ShapeMismatch,
    SpanOutOfRange,
    StepRecord,
)


def meta_with_steps(steps, n_base=0, grid=(2, 2)):
    return SampleMetadata(
        sample_id="s", n_base=n_base, grid_h=grid[0], grid_w=grid[1], steps=steps
    )


def table5_sample_meta():
    """One prefix PASS record plus the repeating FAIL pattern."""
    steps = [StepRecord(t=0, seq_len=579, img_end=551)]
    steps += [StepRecord(t=t, seq_len=64, img_end=551) for t in range(1, 33)]
    return meta_with_steps(tuple(steps))


def test_feasibility_pass_and_fail_records():
    rep = check_step_feasibility(table5_sample_meta())
    assert rep.per_step[0].valid  # 579 >= 551
    assert not rep.per_step[1].valid  # 64 < 551
    assert rep.valid_count == 1
    assert rep.total_count == 33


def test_feasibility_pooled_ratio():
    metas = [table5_sample_meta() for _ in range(200)]
    rep = pooled_feasibility(metas)
    assert rep.valid_count == 200
    assert rep.total_count == 6600
    assert rep.valid_ratio == pytest.approx(200 / 6600, abs=1e-12)
    assert rep.valid_ratio == pytest.approx(0.030, abs=5e-4)


def test_feasibility_missing_img_end_uses_grid():
    meta = meta_with_steps(
        (StepRecord(t=0, seq_len=6), StepRecord(t=1, seq_len=3)), n_base=2, grid=(2, 2)
    )
    rep = check_step_feasibility(meta)
    assert rep.per_step[0].img_end == 6
    assert rep.per_step[0].valid
    assert not rep.per_step[1].valid


def test_feasibility_empty_steps_raises():
    with pytest.raises(NoSteps):
        check_step_feasibility(meta_with_steps(()))


def test_feasibility_is_permutation_pure(rng):
    steps = tuple(
        StepRecord(t=i, seq_len=int(rng.integers(0, 700)), img_end=551) for i in range(40)
    )
    base = check_step_feasibility(meta_with_steps(steps))
    perm = rng.permutation(40)
    shuffled = check_step_feasibility(meta_with_steps(tuple(steps[i] for i in perm)))
    assert shuffled.valid_ratio == base.valid_ratio
    assert [c.valid for c in shuffled.per_step] == [base.per_step[i].valid for i in perm]


def test_extract_image_span_slices_in_order():
    meta = SampleMetadata(sample_id="s", n_base=2, grid_h=2, grid_w=2)
    hidden = np.array([[9], [9], [1], [2], [3], [4]], dtype=float)
    stack = extract_image_span(hidden, meta)
    assert stack.channels[0].tolist() == [[1.0, 2.0], [3.0, 4.0]]


def test_extract_image_span_out_of_range():
    meta = SampleMetadata(sample_id="s", n_base=2, grid_h=2, grid_w=2)
    with pytest.raises(SpanOutOfRange):
        extract_image_span(np.zeros((5, 3)), meta)


def test_extract_image_span_table5_bound():
    # consistency with the 579/551 arithmetic: span accepted iff
    # n_base + H*W <= L (integer bound oracle)
    h = w = 22  # 484 tokens
    n_base = 551 - h * w
    meta = SampleMetadata(sample_id="s", n_base=n_base, grid_h=h, grid_w=w)
    assert extract_image_span(np.zeros((579, 4)), meta).shape == (4, 22, 22)
    with pytest.raises(SpanOutOfRange):
        extract_image_span(np.zeros((550, 4)), meta)


def test_extract_multichannel_layout(rng):
    # channel plane (i, j) must equal hidden[n_base + i*W + j][c]
    L, D, n_base, h, w = 10, 3, 1, 2, 3
    hidden = rng.random((L, D))
    meta = SampleMetadata(sample_id="s", n_base=n_base, grid_h=h, grid_w=w)
    stack = extract_image_span(hidden, meta)
    for c in range(D):
        for i in range(h):
            for j in range(w):
                assert stack.channels[c, i, j] == hidden[n_base + i * w + j, c]


def test_base_cam_identity_weights():
    A = FeatureStack(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    G = GradientStack(np.ones((1, 2, 2)))
    assert base_cam_raw(A, G).tolist() == [[1.0, 2.0], [3.0, 4.0]]


def test_base_cam_zero_gradients():
    A = FeatureStack(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    G = GradientStack(np.zeros((1, 2, 2)))
    assert not base_cam_raw(A, G).any()
    assert not base_cam(A, G).values.any()


def test_base_cam_two_channel_relu_clip():
    # w = (1, -1); channel sum = A1 - A2 = [[1,-2],[-2,1]] -> ReLU
    A = FeatureStack(np.stack([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 2.0], [2.0, 0.0]]]))
    G = GradientStack(np.stack([np.ones((2, 2)), -np.ones((2, 2))]))
    assert base_cam_raw(A, G).tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_base_cam_shape_mismatch():
    A = FeatureStack(np.zeros((1, 2, 2)))
    G = GradientStack(np.zeros((1, 3, 2)))
    with pytest.raises(ShapeMismatch):
        base_cam(A, G)


def test_base_cam_nonnegative_and_scale_invariant(rng):
    for _ in range(100):
        d, h, w = rng.integers(1, 5), rng.integers(2, 9), rng.integers(2, 9)
        A = FeatureStack(rng.normal(size=(d, h, w)))
        G = GradientStack(rng.normal(size=(d, h, w)))
        out = base_cam(A, G)
        assert (out.values >= 0).all()
        # power-of-two scales shift exponents only: bit-identical output
        k2 = float(2.0 ** rng.integers(-6, 7))
        scaled2 = base_cam(A, GradientStack(k2 * G.channels))
        assert np.array_equal(out.values, scaled2.values)
        # arbitrary positive scales cancel up to rounding
        k = float(rng.uniform(0.1, 50))
        scaled = base_cam(A, GradientStack(k * G.channels))
        assert np.allclose(out.values, scaled.values, rtol=1e-12, atol=1e-14)


def test_base_cam_sign_flip_splits_magnitude(rng):
    # pre-normalization outputs of G and -G sum to |sum_c w_c A_c| pointwise
    for _ in range(50):
        d, h, w = rng.integers(1, 5), rng.integers(2, 8), rng.integers(2, 8)
        A = FeatureStack(rng.normal(size=(d, h, w)))
        G = GradientStack(rng.normal(size=(d, h, w)))
        pos = base_cam_raw(A, G)
        neg = base_cam_raw(A, GradientStack(-G.channels))
        weights = G.channels.mean(axis=(1, 2))
        combined = np.tensordot(weights, A.channels, axes=(0, 0))
        assert np.allclose(pos + neg, np.abs(combined), atol=1e-12)


def test_per_token_cam_matches_base(rng):
    A = FeatureStack(rng.random((2, 3, 3)))
    grads = [GradientStack(rng.normal(size=(2, 3, 3))) for _ in range(3)]
    outs = per_token_cam(A, grads)
    assert len(outs) == 3
    for got, g in zip(outs, grads):
        assert np.array_equal(got.values, base_cam(A, g).values)


def test_baseline_fixed_threshold():
    m = ActivationMap([[0.3, 0.5]])
    assert baseline_fixed_threshold(m).values.tolist() == [[0.0, 0.5]]
    high = ActivationMap([[0.4, 0.9]])
    assert baseline_fixed_threshold(high).values.tolist() == [[0.4, 0.9]]
    assert baseline_fixed_threshold(m, theta=0.0).values.tolist() == [[0.3, 0.5]]
