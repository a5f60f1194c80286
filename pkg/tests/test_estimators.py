import numpy as np
import pytest
import torch
from sklearn.base import clone

from slotvideo.data import SpriteSceneConfig, generate_clip
from slotvideo.estimators import SlotDynamicsForecaster, SlotVideoSegmenter

SCENE = SpriteSceneConfig(num_frames=8, height=16, width=16, size_min=4, size_max=6, patch_size=8, seed=31)


@pytest.fixture(scope="module")
def clips():
    return [generate_clip(SCENE, i, f"c{i}") for i in range(4)]


@pytest.fixture(scope="module")
def fitted(clips, tmp_path_factory):
    est = SlotVideoSegmenter(
        num_slots=3, slot_dim=16, feature_dim=16, image_size=16, patch_size=8,
        steps=5, batch_size=2, warmup_steps=2, decay_steps=5,
        work_dir=str(tmp_path_factory.mktemp("fit")),
    )
    return est.fit(clips)


class TestSegmenterEstimator:
    def test_get_set_params_round_trip(self):
        est = SlotVideoSegmenter(num_slots=4, temperature=0.2)
        params = est.get_params()
        assert params["num_slots"] == 4
        assert params["temperature"] == 0.2
        est2 = SlotVideoSegmenter().set_params(**params)
        assert est2.get_params() == params

    def test_sklearn_clone_compatible(self):
        est = SlotVideoSegmenter(num_slots=5, contrast_weight=0.25)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_predict_before_fit_raises(self, clips):
        with pytest.raises(RuntimeError, match="not fitted"):
            SlotVideoSegmenter().predict(clips)

    def test_fit_predict_shapes(self, fitted, clips):
        masks = fitted.predict(clips[:2])
        assert len(masks) == 2
        assert masks[0].shape == (8, 16, 16)
        assert masks[0].min() >= 0 and masks[0].max() < 3

    def test_transform_returns_slot_sequences(self, fitted, clips):
        slots = fitted.transform(clips[:1])
        assert slots[0].shape == (8, 3, 16)

    def test_score_returns_video_fg_ari(self, fitted, clips):
        score = fitted.score(clips[:2])
        assert -1.0 <= score <= 1.0

    def test_invalid_clip_rejected(self, fitted, clips):
        from slotvideo.core import VideoClip

        bad_vis = clips[0].visibility.copy()
        bad_vis[0, 0] += 1
        bad = VideoClip(
            frames=clips[0].frames, gt_masks=clips[0].gt_masks, visibility=bad_vis, clip_id="bad"
        )
        with pytest.raises(ValueError, match="invalid clip"):
            fitted.predict([bad])


class TestForecasterEstimator:
    def test_fit_predict_on_slot_arrays(self):
        rng = np.random.default_rng(0)
        trajectories = [rng.normal(size=(8, 2, 4)).astype(np.float32) for _ in range(2)]
        est = SlotDynamicsForecaster(burn_in=3, rollout=2, latent_dim=8, ffn_dim=16, steps=3, dropout=0.0)
        est.fit(trajectories)
        out = est.predict(trajectories[0][:3])
        assert out.shape == (2, 2, 4)
        batch = est.predict(np.stack([t[:3] for t in trajectories]))
        assert batch.shape == (2, 2, 2, 4)

    def test_clone_compatible(self):
        est = SlotDynamicsForecaster(burn_in=5, dropout=0.3)
        assert clone(est).get_params() == est.get_params()

    def test_predict_before_fit_raises(self):
        with pytest.raises(RuntimeError, match="not fitted"):
            SlotDynamicsForecaster().predict(np.zeros((1, 4, 2, 4), dtype=np.float32))
