import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from tsdbench.challenges import (
    ChallengeComposer,
    ChallengeSpec,
    ChallengeTransformer,
    ChallengeType,
    apply_challenge,
    compose_challenges,
)
from tsdbench.imaging import FrameSequence
from tsdbench.spectral import ResidualSpectrum, floor_value


def test_transformer_params_and_clone():
    est = ChallengeTransformer(kind="rain", level=3, seed=5)
    assert est.get_params() == {"kind": "rain", "level": 3, "seed": 5, "frame_rate": None}
    twin = clone(est)
    assert twin is not est and twin.get_params() == est.get_params()
    est.set_params(level=4)
    assert est.level == 4


def test_transform_requires_fit(small_seq):
    with pytest.raises(NotFittedError):
        ChallengeTransformer().transform(small_seq)


def test_transformer_matches_apply_challenge(small_seq):
    out = ChallengeTransformer("noise", 2, seed=9).fit().transform(small_seq)
    expected = apply_challenge(small_seq, ChallengeSpec(ChallengeType.NOISE, 2, 9))
    assert isinstance(out, FrameSequence)
    np.testing.assert_array_equal(out.frames, expected.frames)


def test_transformer_accepts_arrays(small_seq):
    est = ChallengeTransformer("gaussian_blur", 3).fit()
    stack = est.transform(small_seq.frames)
    assert isinstance(stack, np.ndarray) and stack.shape == small_seq.frames.shape
    single = est.transform(small_seq.frames[0])
    assert single.shape == small_seq.frames[0].shape
    np.testing.assert_array_equal(single, stack[0])


def test_level_zero_transformer_is_identity(small_seq):
    out = ChallengeTransformer("snow", 0).fit().transform(small_seq)
    np.testing.assert_array_equal(out.frames, small_seq.frames)


def test_composer(small_seq):
    est = ChallengeComposer(steps=[("exposure", 1), ("gaussian_blur", 2)])
    assert clone(est).get_params()["steps"] == [("exposure", 1), ("gaussian_blur", 2)]
    out = est.fit().transform(small_seq)
    specs = est.specs_
    np.testing.assert_array_equal(out.frames, compose_challenges(small_seq, specs).frames)
    with pytest.raises(ValueError):
        ChallengeComposer(steps=[]).fit()


def test_composer_order_matters(small_seq):
    a = ChallengeComposer(steps=[("exposure", 1), ("darkening", 3)]).fit().transform(small_seq)
    b = ChallengeComposer(steps=[("darkening", 3), ("exposure", 1)]).fit().transform(small_seq)
    assert not np.array_equal(a.frames, b.frames)


def test_residual_spectrum(small_seq):
    est = ResidualSpectrum().fit(small_seq)
    maps = est.transform(small_seq)
    assert maps.shape[0] == len(small_seq)
    assert np.all(maps == floor_value())
    challenged = ChallengeTransformer("noise", 3).fit().transform(small_seq)
    assert est.mean_magnitude(challenged) > floor_value()
    with pytest.raises(ValueError):
        ResidualSpectrum(epsilon=0).fit(small_seq)
    with pytest.raises(NotFittedError):
        ResidualSpectrum().transform(small_seq)


def test_pipeline_of_challenges(small_seq):
    pipe = Pipeline([
        ("rain", ChallengeTransformer("rain", 2, seed=1)),
        ("expose", ChallengeTransformer("exposure", 1)),
    ])
    out = pipe.fit(small_seq).transform(small_seq)
    manual = ChallengeTransformer("exposure", 1).fit().transform(
        ChallengeTransformer("rain", 2, seed=1).fit().transform(small_seq)
    )
    np.testing.assert_array_equal(out.frames, manual.frames)
    pipe.set_params(rain__level=4)
    assert pipe.named_steps["rain"].level == 4
