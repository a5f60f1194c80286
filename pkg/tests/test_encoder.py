import numpy as np
import pytest
import torch

from slotvideo.encoder import (
    ConvPatchEncoder,
    FeatureAdapter,
    ImportBackbone,
    extract_features,
    load_feature_file,
    pca_rgb,
    save_feature_file,
)

from oracles import central_difference_gradients


class TestConvPatchEncoder:
    def test_token_count_matches_patch_grid(self):
        torch.manual_seed(0)
        enc = ConvPatchEncoder(image_size=64, patch_size=8, out_dim=16)
        frames = torch.rand(2, 64, 64, 3)
        out = enc(frames)
        assert out.shape == (2, 64, 16)
        assert enc.grid == (8, 8)

    def test_identical_frames_give_identical_features(self):
        torch.manual_seed(0)
        enc = ConvPatchEncoder(image_size=32, patch_size=8, out_dim=8)
        frame = torch.rand(1, 32, 32, 3)
        out = enc(torch.cat([frame, frame]))
        torch.testing.assert_close(out[0], out[1])

    def test_output_is_finite(self):
        torch.manual_seed(1)
        enc = ConvPatchEncoder(image_size=32, patch_size=4, out_dim=8)
        out = enc(torch.rand(3, 32, 32, 3))
        assert torch.isfinite(out).all()

    def test_indivisible_resolution_rejected(self):
        with pytest.raises(ValueError):
            ConvPatchEncoder(image_size=50, patch_size=8)

    def test_frozen_encoder_has_no_trainable_parameters(self):
        enc = ConvPatchEncoder(image_size=32, patch_size=8, frozen=True)
        assert all(not p.requires_grad for p in enc.parameters())
        enc2 = ConvPatchEncoder(image_size=32, patch_size=8, frozen=False)
        assert all(p.requires_grad for p in enc2.parameters())

    def test_frozen_parameters_unchanged_by_optimizer_step(self):
        torch.manual_seed(2)
        enc = ConvPatchEncoder(image_size=32, patch_size=8, out_dim=8, frozen=True)
        adapter = FeatureAdapter(8, 8, hidden=(16,))
        before = [p.clone() for p in enc.parameters()]
        opt = torch.optim.Adam(
            [p for p in list(enc.parameters()) + list(adapter.parameters()) if p.requires_grad],
            lr=0.1,
        )
        loss = adapter(enc(torch.rand(2, 32, 32, 3))).square().mean()
        loss.backward()
        opt.step()
        for p, b in zip(enc.parameters(), before):
            torch.testing.assert_close(p, b, atol=0, rtol=0)

    def test_batched_video_extraction(self):
        torch.manual_seed(3)
        enc = ConvPatchEncoder(image_size=16, patch_size=8, out_dim=4)
        video = torch.rand(2, 3, 16, 16, 3)
        out = extract_features(video, enc)
        assert out.shape == (2, 3, 4, 4)
        single = extract_features(video[0], enc)
        torch.testing.assert_close(single, out[0])


class TestFeatureAdapter:
    def test_identity_initialized_linear_is_identity(self):
        adapter = FeatureAdapter(6, 6, hidden=())
        with torch.no_grad():
            adapter.mlp[0].weight.copy_(torch.eye(6))
            adapter.mlp[0].bias.zero_()
        x = torch.randn(4, 10, 6)
        torch.testing.assert_close(adapter(x), x)

    def test_token_permutation_equivariance(self):
        torch.manual_seed(4)
        adapter = FeatureAdapter(5, 7, hidden=(11,))
        x = torch.randn(2, 9, 5)
        perm = torch.randperm(9)
        torch.testing.assert_close(adapter(x)[:, perm], adapter(x[:, perm]))

    def test_gradient_matches_central_differences(self):
        torch.manual_seed(5)
        adapter = FeatureAdapter(3, 4, hidden=(5,)).double()
        x = torch.randn(2, 6, 3, dtype=torch.float64)
        target = torch.randn(2, 6, 4, dtype=torch.float64)

        def loss_fn():
            return float(((adapter(x) - target) ** 2).mean())

        loss = ((adapter(x) - target) ** 2).mean()
        loss.backward()
        fd = central_difference_gradients(loss_fn, list(adapter.parameters()))
        for p, g in zip(adapter.parameters(), fd):
            rel = (p.grad - g).abs().max() / g.abs().max().clamp(min=1e-12)
            assert float(rel) < 1e-4


class TestFeatureImport:
    def test_round_trips_bit_exactly(self, tmp_path):
        raw = np.random.default_rng(0).random((3, 16, 8)).astype(np.float32)
        path = tmp_path / "clip.npz"
        save_feature_file(path, raw, (4, 4), "clip")
        loaded, grid = load_feature_file(path)
        assert grid == (4, 4)
        np.testing.assert_array_equal(loaded, raw)
        assert loaded.dtype == raw.dtype

    def test_import_backbone_returns_stored_features_verbatim(self, tmp_path):
        raw = np.random.default_rng(1).random((2, 9, 6)).astype(np.float32)
        save_feature_file(tmp_path / "c7.npz", raw, (3, 3), "c7")
        backbone = ImportBackbone(tmp_path, out_dim=6)
        loaded, grid = backbone.features_for("c7")
        np.testing.assert_array_equal(loaded, raw)

    def test_missing_feature_file_is_an_error(self, tmp_path):
        backbone = ImportBackbone(tmp_path, out_dim=6)
        with pytest.raises(FileNotFoundError):
            backbone.features_for("nope")

    def test_grid_mismatch_rejected(self, tmp_path):
        raw = np.zeros((1, 10, 4), dtype=np.float32)
        save_feature_file(tmp_path / "bad.npz", raw, (3, 3), "bad")
        with pytest.raises(ValueError):
            load_feature_file(tmp_path / "bad.npz")


class TestPcaRgb:
    def test_rank_one_features_leave_two_gray_channels(self):
        direction = np.array([1.0, 2.0, -1.0, 0.5])
        coords = np.linspace(-1, 1, 16)
        features = coords[:, None] * direction
        img = pca_rgb(features, (4, 4))
        assert img.shape == (4, 4, 3)
        assert np.all(img[..., 1] == 0.5)
        assert np.all(img[..., 2] == 0.5)
        assert img[..., 0].min() == 0.0 and img[..., 0].max() == 1.0

    def test_zero_variance_features_render_gray(self):
        features = np.ones((9, 5))
        img = pca_rgb(features, (3, 3))
        assert np.all(img == 0.5)

    def test_two_cluster_features_match_kmeans_assignment(self):
        from sklearn.cluster import KMeans

        rng = np.random.default_rng(6)
        a = np.array([3.0, 0.0, 0.0, 0.0])
        b = np.array([0.0, 3.0, 0.0, 0.0])
        features = np.stack([a if i % 2 == 0 else b for i in range(16)])
        features = features + rng.normal(0, 0.01, features.shape)
        img = pca_rgb(features, (4, 4)).reshape(16, 3)
        pc1 = img[:, 0] > 0.5
        km = KMeans(n_clusters=2, n_init=5, random_state=0).fit_predict(features)
        agreement = max(np.mean(pc1 == km), np.mean(pc1 != km))
        assert agreement == 1.0

    def test_duplicated_tokens_get_identical_colors(self):
        rng = np.random.default_rng(7)
        base = rng.random((8, 5))
        doubled = np.concatenate([base, base], axis=0)
        img = pca_rgb(doubled, (4, 4)).reshape(16, 3)
        np.testing.assert_allclose(img[:8], img[8:], atol=1e-10)

    def test_too_few_tokens_rejected(self):
        with pytest.raises(ValueError):
            pca_rgb(np.zeros((2, 4)), (1, 2))
