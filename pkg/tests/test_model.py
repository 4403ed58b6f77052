import numpy as np
import pytest

from regnet_calib import encoding
from regnet_calib.decalib import SampleStream
from regnet_calib.encoding import DecalibRange
from regnet_calib.expert import Expert, IdentityExpert, OracleExpert
from regnet_calib.model import ConfigError, NiNBlockSpec, RegNet, RegNetConfig, format_shape_trace
from regnet_calib.nn import gradcheck
from regnet_calib.nn.checkpoint import CheckpointError
from regnet_calib.scene import Rig
from regnet_calib.training import SolverParams, TrainingDiverged, train, validate


def _count(blocks, c_in):
    n = 0
    for b in blocks:
        k = b.k
        for c in b.channels:
            n += k * k * c_in * c + c
            c_in, k = c, 1
    return n, c_in


def test_default_parameter_count_by_hand():
    cfg = RegNetConfig()
    n_rgb, c_rgb = _count(cfg.rgb_stream, 3)
    n_d, c_d = _count(cfg.depth_stream, 1)
    n_f, c_f = _count(cfg.fusion, c_rgb + c_d)
    n_fc = c_f * 256 + 256 + 256 * 8 + 8
    assert RegNet(cfg).n_parameters() == n_rgb + n_d + n_f + n_fc == 319620


def test_shape_trace():
    m = RegNet(RegNetConfig())
    shapes = dict(m.trace_shapes())
    assert shapes["concat"] == (144, 12, 32)
    assert shapes["global_max_pool"] == (64,)
    assert shapes["fc1"] == (256,)
    assert shapes["fc2"] == (8,)
    assert "parameters: 319620" in format_shape_trace(m)


def test_config_validation_messages():
    with pytest.raises(ConfigError, match="more channels"):
        RegNet(RegNetConfig(depth_stream=(NiNBlockSpec(7, 2, (48, 48)),) + RegNetConfig().depth_stream[1:]))
    with pytest.raises(ConfigError, match="rgb stream gives 12x32, depth stream gives 24x64"):
        RegNet(RegNetConfig(depth_stream=RegNetConfig().depth_stream[:2] + (NiNBlockSpec(3, 1, (48, 48)),)))
    with pytest.raises(ConfigError, match="does not match representation"):
        RegNet(RegNetConfig(fc_widths=(256, 7)))
    with pytest.raises(ValueError):
        NiNBlockSpec(4, 1, (8,))


def test_config_dict_roundtrip():
    cfg = RegNetConfig().with_representation("euler")
    assert RegNetConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.fc_widths == (256, 6)


def test_seeded_init_is_deterministic():
    a, b = RegNet(RegNetConfig.small(), seed=3), RegNet(RegNetConfig.small(), seed=3)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].data, b.params[k].data)
    c = RegNet(RegNetConfig.small(), seed=4)
    assert not np.array_equal(a.params["rgb.0.0.weight"].data, c.params["rgb.0.0.weight"].data)


def test_forward_rejects_wrong_input_size():
    m = RegNet(RegNetConfig.small())
    with pytest.raises(ValueError, match="expected rgb 3x16x24"):
        m.predict(np.zeros((3, 10, 10)), np.zeros((1, 10, 10)))


def test_end_to_end_gradient_small_model():
    results = gradcheck.model_check(0, n_entries=12, config=RegNetConfig.small())
    assert all(r.passed for r in results), [str(r) for r in results]


def test_expert_save_load_identical(tmp_path, rng):
    m = RegNet(RegNetConfig.small(), seed=1)
    e = Expert(m, DecalibRange(0.2, 3.0))
    e.save(tmp_path / "e.ckpt")
    e2 = Expert.load(tmp_path / "e.ckpt")
    rgb, depth = rng.normal(size=(3, 16, 24)), rng.normal(size=(1, 16, 24))
    np.testing.assert_array_equal(e.raw(rgb, depth), e2.raw(rgb, depth))
    assert e2.ranges == e.ranges and e2.representation == "dual_quaternion"


def test_checkpoint_shape_mismatch_rejected(tmp_path):
    Expert(RegNet(RegNetConfig.small()), DecalibRange(0.1, 1.0)).save(tmp_path / "e.ckpt")
    big = RegNet(RegNetConfig())
    from regnet_calib.nn import checkpoint

    blobs, _ = checkpoint.load(tmp_path / "e.ckpt")
    with pytest.raises(CheckpointError, match="lacks parameters"):
        big.load_state_dict(blobs)
    with pytest.raises(CheckpointError, match="has shape"):
        RegNet(RegNetConfig.small("euler")).load_state_dict(blobs)


def test_undecodable_output_falls_back_to_identity(rng):
    m = RegNet(RegNetConfig.small())
    m.params["fc2.weight"].data[...] = 0
    m.params["fc2.bias"].data[...] = 0   # zero real part: degenerate rotation
    e = Expert(m, DecalibRange(0.1, 1.0))
    out = e.estimate(rng.normal(size=(3, 16, 24)), rng.normal(size=(1, 16, 24)))
    np.testing.assert_array_equal(out.matrix, np.eye(4))
    assert np.array_equal(IdentityExpert().estimate(None, None).matrix, np.eye(4))
    with pytest.raises(ValueError):
        OracleExpert(Rig().h_gt).estimate(None, None)


@pytest.fixture(scope="module")
def small_samples():
    from regnet_calib.projection import CameraIntrinsics
    from regnet_calib.scene import LidarModel

    rig = Rig(intrinsics=CameraIntrinsics(16.0, 16.0, 11.5, 7.5, 24, 16), lidar=LidarModel(azimuth_step=2.0))
    return SampleStream(DecalibRange(0.3, 5.0), seed=0, scene_seed=4, n_scenes=5, rig=rig).take(5)


def test_training_reduces_loss_on_fixed_samples(small_samples):
    m = RegNet(RegNetConfig.small(), seed=0, dtype=np.float64)
    res = train(m, small_samples, 600, SolverParams(lr=1e-3), log_every=50,
                ranges=DecalibRange(0.3, 5.0))
    first, last = res.loss_trace[0][1], res.loss_trace[-1][1]
    assert last < 0.2 * first
    assert res.steps == 600


def test_training_is_deterministic(small_samples):
    def run():
        m = RegNet(RegNetConfig.small(), seed=0)
        train(m, small_samples, 20, SolverParams(lr=1e-3), log_every=0)
        return m.state_dict()

    a, b = run(), run()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_output_bias_starts_at_identity_encoding(small_samples):
    m = RegNet(RegNetConfig.small(), seed=0)
    train(m, small_samples, 0, log_every=0)
    np.testing.assert_array_equal(m.params["fc2.bias"].data, encoding.identity_vector("dual_quaternion"))


def test_divergence_detected(small_samples, tmp_path):
    m = RegNet(RegNetConfig.small(), seed=0)
    m.params["fc2.weight"].data[...] = np.nan
    with pytest.raises(TrainingDiverged):
        train(m, small_samples, 3, log_every=0, ranges=DecalibRange(0.3, 5.0),
              checkpoint_path=tmp_path / "x.ckpt")
    assert (tmp_path / "x.ckpt.diverged").exists()


def test_validate_reports_positive_error_for_untrained_net(small_samples):
    m = RegNet(RegNetConfig.small(), seed=0)
    mae = validate(Expert(m, DecalibRange(0.3, 5.0)), small_samples)
    assert mae.mean_angle > 0
