import numpy as np
import pytest

import siam.tensor as T
from siam.data import VideoBatch
from siam.errors import ShapeError, UsageError
from siam.model import (DaMiBlock, Decoder, Encoder, InitStream, MIXER_KINDS,
                        SiamConfig, SiamModel, SpatialMixer,
                        SpatioTemporalMixer, TemporalMixer, build_model,
                        rollout, set_identity_residuals)
from siam.tensor import Tape, Tensor

from conftest import analytic_gradients, fd_gradient, max_rel_err

CFG = SiamConfig(t_in=3, t_out=3, frame_shape=(1, 16, 16),
                 latent_shape=(10, 8, 8), n_blocks=2,
                 mixer_dims=(10, 10, 30), norm_groups=2,
                 stage_depth=1, dtype="float64")


def video(shape, seed=0):
    return Tensor(np.random.default_rng(seed).random(shape))


class TestConfigValidation:
    def test_good_config_passes(self):
        CFG.validate()

    def test_ratio_must_be_power_of_two(self):
        with pytest.raises(UsageError, match="power of two"):
            SiamConfig(t_in=2, t_out=2, frame_shape=(1, 24, 24),
                       latent_shape=(8, 8, 8), norm_groups=2).validate()

    def test_t_out_must_equal_t_in(self):
        with pytest.raises(UsageError, match="t_out"):
            SiamConfig(t_in=4, t_out=8, frame_shape=(1, 16, 16),
                       latent_shape=(8, 8, 8), norm_groups=2).validate()

    def test_at_least_one_mixer(self):
        with pytest.raises(UsageError, match="at least one"):
            SiamConfig(t_in=2, t_out=2, frame_shape=(1, 16, 16),
                       latent_shape=(8, 8, 8), norm_groups=2,
                       mixer_enabled=(False, False, False)).validate()

    def test_temporal_dim_divisible_by_t(self):
        with pytest.raises(UsageError, match="divisible by t_in"):
            SiamConfig(t_in=3, t_out=3, frame_shape=(1, 16, 16),
                       latent_shape=(8, 8, 8), norm_groups=2,
                       mixer_dims=(8, 10, 32)).validate()

    def test_strict_split_divisibility(self):
        with pytest.raises(UsageError, match="divisible by 5"):
            SiamConfig(t_in=2, t_out=2, frame_shape=(1, 16, 16),
                       latent_shape=(8, 8, 8), norm_groups=2,
                       mixer_dims=(8, 8, 8), strict_channel_split=True
                       ).validate()

    def test_fingerprint_tracks_content(self):
        from dataclasses import replace
        a = CFG.fingerprint()
        assert a == CFG.fingerprint()
        assert a != replace(CFG, n_blocks=3).fingerprint()


class TestEncoderDecoder:
    def test_latent_and_output_shapes(self):
        m = build_model(CFG, seed=0)
        x = video((2, 3, 1, 16, 16))
        z = m.encode(x)
        assert z.shape == (2, 3, 10, 8, 8)
        y = m(x)
        assert y.shape == (2, 3, 1, 16, 16)

    def test_framewise_weight_sharing(self):
        m = build_model(CFG, seed=0)
        x = np.random.default_rng(3).random((1, 3, 1, 16, 16))
        x[0, 2] = x[0, 0]  # two identical frames
        z = m.encode(Tensor(x)).data
        assert np.array_equal(z[0, 0], z[0, 2])

    def test_encoder_commutes_with_frame_permutation(self):
        m = build_model(CFG, seed=1)
        x = np.random.default_rng(5).random((1, 3, 1, 16, 16))
        perm = [2, 0, 1]
        z = m.encode(Tensor(x)).data
        z_perm = m.encode(Tensor(x[:, perm])).data
        assert np.abs(z[:, perm] - z_perm).max() < 1e-12

    def test_input_shape_check(self):
        m = build_model(CFG, seed=0)
        with pytest.raises(ShapeError):
            m.encode(video((1, 3, 1, 8, 8)))


class TestMixers:
    def _init(self):
        return InitStream(0, np.dtype("float64"))

    def test_spatial_residual_identity_zero_terminal_conv(self):
        mixer = SpatialMixer(self._init(), 10, (5, 7, 3), 2)
        mixer.finalize_names()
        # spec recipe: zero the terminal pointwise conv, beta = 0, gamma = 1
        mixer.pw.weight.tensor.data[:] = 0
        mixer.pw.bias.tensor.data[:] = 0
        x = video((3, 10, 8, 8), seed=2)
        y = mixer(x)
        assert np.abs(y.data - x.data).max() <= 1e-12

    def test_spatial_output_shape(self):
        mixer = SpatialMixer(self._init(), 10, (5, 7, 3), 2)
        mixer.finalize_names()
        x = video((4, 10, 8, 8))
        assert mixer(x).shape == x.shape

    def test_spatial_time_equivariance(self):
        mixer = SpatialMixer(self._init(), 10, (5, 7, 3), 2)
        mixer.finalize_names()
        x = np.random.default_rng(0).random((5, 10, 8, 8))
        perm = [4, 2, 0, 3, 1]
        out = mixer(Tensor(x)).data
        out_perm = mixer(Tensor(x[perm])).data
        assert np.abs(out[perm] - out_perm).max() < 1e-12

    def test_st_identity_branch_and_zero_convs(self):
        mixer = SpatioTemporalMixer(self._init(), 10,
                                    ((3, 3, 3), (3, 1, 1), (1, 1, 11),
                                     (1, 11, 1)), 2)
        mixer.finalize_names()
        for conv in mixer.convs:
            conv.weight.tensor.data[:] = 0
            conv.bias.tensor.data[:] = 0
        # gamma = beta = 0 -> core is exactly zero (spec's configured case)
        mixer.norm.gamma.tensor.data[:] = 0
        mixer.norm.beta.tensor.data[:] = 0
        x = video((1, 3, 10, 8, 16), seed=4)
        y = mixer(x)
        assert np.abs(y.data - x.data).max() <= 1e-12

    def test_st_split_sizes_with_remainder(self):
        mixer = SpatioTemporalMixer(self._init(), 32,
                                    ((3, 3, 3), (3, 1, 1), (1, 1, 11),
                                     (1, 11, 1)), 2)
        assert mixer.split_sizes == [8, 6, 6, 6, 6]
        assert sum(mixer.split_sizes) == 32

    def test_st_temporal_branch_sees_temporal_edges(self):
        branches = ((3, 1, 1), (1, 1, 3), (1, 3, 1), (3, 3, 3))
        mixer = SpatioTemporalMixer(self._init(), 10, branches, 2)
        mixer.finalize_names()
        # constant in space, step in time at t=2
        x = np.zeros((1, 4, 10, 8, 8))
        x[:, 2:] = 1.0
        outs = mixer.branch_outputs(Tensor(x))  # [B, C_part, T, H, W] each
        temporal = outs[1].data  # (3,1,1) kernel
        # the temporal branch responds across the step: its frame-1 output
        # (kernel spans the edge) differs from frame 0
        assert np.abs(temporal[:, :, 1] - temporal[:, :, 0]).max() > 1e-6
        # the purely spatial (1,1,k) branch treats frames independently:
        # equal input frames give equal outputs on both sides of the step
        spatial_only = outs[2].data
        assert np.abs(spatial_only[:, :, 1] - spatial_only[:, :, 0]).max() == 0
        assert np.abs(spatial_only[:, :, 3] - spatial_only[:, :, 2]).max() == 0
        # and changing a distant frame cannot alter its output at frame 0
        x2 = x.copy()
        x2[:, 3] = 0.5
        outs2 = mixer.branch_outputs(Tensor(x2))
        assert np.array_equal(outs2[2].data[:, :, 0], spatial_only[:, :, 0])
        assert np.abs(outs2[1].data[:, :, 2]
                      - temporal[:, :, 2]).max() > 1e-6

    def test_temporal_residual_identity_zero_second_layer(self):
        mixer = TemporalMixer(self._init(), t=3, c=10, ratio=4, norm_groups=2)
        mixer.finalize_names()
        mixer.fc2.weight.tensor.data[:] = 0
        mixer.fc2.bias.tensor.data[:] = 0
        mixer.norm.beta.tensor.data[:] = 0  # gamma stays arbitrary
        x = video((1, 3, 10, 8, 8), seed=6)
        y = mixer(x)
        assert np.abs(y.data - x.data).max() <= 1e-12

    def test_temporal_weight_extents(self):
        # r=4, T=10, c=64: W1 is 2560 x 640
        mixer = TemporalMixer(self._init(), t=10, c=64, ratio=4,
                              norm_groups=8)
        assert mixer.fc1.weight.tensor.shape == (2560, 640)
        assert mixer.fc2.weight.tensor.shape == (640, 2560)

    def test_temporal_is_locationwise(self):
        mixer = TemporalMixer(self._init(), t=3, c=10, ratio=2, norm_groups=2)
        mixer.finalize_names()
        x = np.random.default_rng(8).random((1, 3, 10, 4, 4))
        x[..., 2, 3] = x[..., 1, 0]  # duplicate one spatial position
        y = mixer(Tensor(x)).data
        assert np.abs(y[..., 2, 3] - y[..., 1, 0]).max() < 1e-12

    def test_temporal_not_time_equivariant_witness(self):
        mixer = TemporalMixer(self._init(), t=3, c=10, ratio=2, norm_groups=2)
        mixer.finalize_names()
        x = np.random.default_rng(9).random((1, 3, 10, 4, 4))
        perm = [2, 0, 1]
        y = mixer(Tensor(x)).data
        y_perm = mixer(Tensor(x[:, perm])).data
        assert np.abs(y[:, perm] - y_perm).max() > 1e-4


class TestDaMiBlock:
    def test_block_identity_recipe(self):
        blk = DaMiBlock(InitStream(0, np.dtype("float64")), CFG)
        blk.finalize_names()
        set_identity_residuals(blk)
        x = video((2, 3, 10, 8, 8), seed=1)
        y = blk(x)
        assert np.abs(y.data - x.data).max() <= 1e-12

    def test_single_mixer_block_equals_projected_core(self):
        from dataclasses import replace
        cfg = replace(CFG, mixer_enabled=(True, False, False))
        blk = DaMiBlock(InitStream(3, np.dtype("float64")), cfg)
        blk.finalize_names()
        x = video((1, 3, 10, 8, 8), seed=2)
        y = blk(x)
        proj_in, mixer, proj_out = blk.parts["spatial"]
        frames = T.reshape(x, (3, 10, 8, 8))
        manual = T.reshape(proj_out(mixer.core(proj_in(frames))),
                           (1, 3, 10, 8, 8)).data + x.data
        assert np.abs(y.data - manual).max() < 1e-12

    def test_all_six_orders_preserve_shape(self):
        from dataclasses import replace
        from itertools import permutations
        x = video((1, 3, 10, 8, 8))
        for order in permutations(MIXER_KINDS):
            cfg = replace(CFG, mixer_order=order)
            blk = DaMiBlock(InitStream(0, np.dtype("float64")), cfg)
            blk.finalize_names()
            assert blk(x).shape == x.shape

    def test_order_changes_output(self):
        from dataclasses import replace
        x = video((1, 3, 10, 8, 8))
        a = DaMiBlock(InitStream(0, np.dtype("float64")), CFG)
        a.finalize_names()
        cfg_b = replace(CFG, mixer_order=(
            "temporal", "spatiotemporal", "spatial"))
        b = DaMiBlock(InitStream(0, np.dtype("float64")), cfg_b)
        b.finalize_names()
        assert np.abs(a(x).data - b(x).data).max() > 1e-8


class TestModel:
    def test_n_zero_translator_is_identity(self):
        from dataclasses import replace
        m = build_model(replace(CFG, n_blocks=0), seed=0)
        z = video((1, 3, 10, 8, 8))
        assert np.array_equal(m.translate(z).data, z.data)

    def test_parameter_names_form_tree(self):
        m = build_model(CFG, seed=0)
        names = [n for n, _ in m.named_parameters()]
        assert len(names) == len(set(names))
        assert any(n.startswith("blocks.0.spatial.") for n in names)
        assert any(n.startswith("blocks.1.temporal.mixer.fc1") for n in names)
        assert any(n.startswith("encoder.") for n in names)

    def test_model_identity_recipe_end_to_end(self):
        m = build_model(CFG, seed=4)
        set_identity_residuals(m)
        x = video((1, 3, 1, 16, 16))
        z = m.encode(x)
        assert np.abs(m.translate(z).data - z.data).max() <= 1e-12

    def test_untrained_forward_finite(self):
        m = build_model(CFG, seed=0)
        y = m(video((2, 3, 1, 16, 16)))
        assert np.all(np.isfinite(y.data))

    def test_full_block_gradients_match_fd(self):
        blk = DaMiBlock(InitStream(1, np.dtype("float64")), CFG)
        blk.finalize_names()
        x = video((1, 3, 10, 8, 8), seed=3)
        params = [p for _, p in blk.named_parameters()]

        def loss():
            y = blk(x)
            return T.mean_all(T.mul(y, y))

        with Tape() as tape:
            analytic = tape.gradient(loss(), [p.tensor for p in params])
        # h=1e-6 keeps the probes clear of relu kinks (the norm layers
        # centre activations at zero); the acceptance suite runs the
        # h=1e-5 variant on a margin-checked instance
        fds = fd_gradient(loss, [p.tensor for p in params], sample=3,
                          seed=5, h=1e-6)
        assert max_rel_err(analytic, fds) < 1e-5


class TestRollout:
    def test_horizon_equals_t_out_matches_single_forward(self):
        m = build_model(CFG, seed=2)
        vb = VideoBatch(np.random.default_rng(0).random(
            (1, 3, 1, 16, 16)).astype(np.float32))
        pred = np.clip(m(Tensor(np.asarray(vb.data, dtype="float64"))).data,
                       0, 1)
        out = rollout(m, vb, horizon=3)
        assert np.abs(out.data - pred).max() < 1e-12

    def test_two_windows_two_forward_calls(self):
        m = build_model(CFG, seed=2)
        m.forward_count = 0
        vb = VideoBatch(np.random.default_rng(1).random(
            (1, 3, 1, 16, 16)).astype(np.float32))
        out = rollout(m, vb, horizon=6)
        assert out.shape == (1, 6, 1, 16, 16)
        assert m.forward_count == 2

    def test_truncation(self):
        m = build_model(CFG, seed=2)
        vb = VideoBatch(np.random.default_rng(1).random(
            (1, 3, 1, 16, 16)).astype(np.float32))
        assert rollout(m, vb, horizon=4).shape[1] == 4

    def test_determinism(self):
        m = build_model(CFG, seed=2)
        vb = VideoBatch(np.random.default_rng(2).random(
            (2, 3, 1, 16, 16)).astype(np.float32))
        a = rollout(m, vb, horizon=7)
        b = rollout(m, vb, horizon=7)
        assert a.data.tobytes() == b.data.tobytes()

    def test_horizon_validation(self):
        m = build_model(CFG, seed=0)
        vb = VideoBatch(np.zeros((1, 3, 1, 16, 16), dtype=np.float32))
        with pytest.raises(UsageError):
            rollout(m, vb, horizon=0)
