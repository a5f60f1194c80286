import dataclasses

import numpy as np
import pytest

from slotvideo.config import (
    ModelConfig,
    TrainConfig,
    config_hash,
    load_config,
    save_config,
)
from slotvideo.core import VideoClip, as_clip_list, validate_clip

from conftest import make_clip


class TestValidateClip:
    def test_well_formed_clip_passes(self):
        clip = make_clip([[[0, 1], [1, 2]], [[0, 0], [1, 2]]])
        assert validate_clip(clip) == []

    def test_wrong_visibility_count_is_reported(self):
        clip = make_clip([[[0, 1, 1], [1, 1, 0]]])
        vis = clip.visibility.copy()
        vis[0, 0] = 5  # actual count is 4
        bad = VideoClip(frames=clip.frames, gt_masks=clip.gt_masks, visibility=vis, clip_id="bad")
        violations = validate_clip(bad)
        assert len(violations) == 1
        assert "visibility[0, 0]" in violations[0]

    def test_out_of_range_mask_id_is_reported(self):
        gt = np.zeros((1, 2, 2), dtype=np.int32)
        gt[0, 0, 0] = 7
        frames = np.zeros((1, 2, 2, 3), dtype=np.float32)
        vis = np.zeros((1, 3), dtype=np.int32)
        bad = VideoClip(frames=frames, gt_masks=gt, visibility=vis, clip_id="bad")
        violations = validate_clip(bad)
        assert any("gt_masks" in v and "7" in v for v in violations)

    def test_frames_out_of_range_reported(self):
        clip = make_clip([[[0, 1], [1, 0]]])
        frames = clip.frames.copy()
        frames[0, 0, 0] = 1.5
        bad = VideoClip(frames=frames, gt_masks=clip.gt_masks, visibility=clip.visibility, clip_id="bad")
        assert any("frames" in v for v in validate_clip(bad))

    def test_pure_function(self):
        clip = make_clip([[[0, 1], [2, 2]]])
        assert validate_clip(clip) == validate_clip(clip)


class TestImmutability:
    def test_arrays_are_read_only(self):
        clip = make_clip([[[0, 1], [1, 0]]])
        with pytest.raises(ValueError):
            clip.frames[0, 0, 0, 0] = 0.5
        with pytest.raises(ValueError):
            clip.gt_masks[0, 0, 0] = 3

    def test_dataclass_is_frozen(self):
        clip = make_clip([[[0, 1], [1, 0]]])
        with pytest.raises(dataclasses.FrozenInstanceError):
            clip.clip_id = "other"


class TestConfigRoundTrip:
    def test_defaults_round_trip_bit_exactly(self, tmp_path):
        model, train = ModelConfig(), TrainConfig()
        path = tmp_path / "config.yaml"
        save_config(path, model, train)
        model2, train2 = load_config(path)
        assert model2 == model
        assert train2 == train

    def test_awkward_floats_round_trip(self, tmp_path):
        train = TrainConfig(peak_lr=1 / 3, temperature=0.30000000000000004, contrast_weight=2.06e-9)
        path = tmp_path / "config.yaml"
        save_config(path, ModelConfig(), train)
        _, train2 = load_config(path)
        assert train2.peak_lr == train.peak_lr
        assert train2.temperature == train.temperature
        assert train2.contrast_weight == train.contrast_weight

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.yaml"
        save_config(path, ModelConfig(), TrainConfig())
        path.write_text(path.read_text() + "bogus_key: 1\n")
        with pytest.raises(ValueError, match="bogus_key"):
            load_config(path)

    def test_hash_is_content_addressed(self):
        assert config_hash(ModelConfig()) == config_hash(ModelConfig())
        assert config_hash(ModelConfig()) != config_hash(ModelConfig(num_slots=7))


class TestConfigValidation:
    def test_temperature_must_be_positive(self):
        with pytest.raises(ValueError):
            TrainConfig(temperature=0.0)

    def test_segment_length_needs_consecutive_frames(self):
        with pytest.raises(ValueError):
            TrainConfig(segment_length=1)

    def test_resolution_patch_divisibility(self):
        with pytest.raises(ValueError):
            ModelConfig(image_size=50, patch_size=8)

    def test_contrast_weight_nonnegative(self):
        with pytest.raises(ValueError):
            TrainConfig(contrast_weight=-0.1)


def test_as_clip_list_type_checks():
    clip = make_clip([[[0, 1], [1, 0]]])
    assert as_clip_list(clip) == [clip]
    assert as_clip_list([clip, clip]) == [clip, clip]
    with pytest.raises(TypeError):
        as_clip_list([clip, "not a clip"])
