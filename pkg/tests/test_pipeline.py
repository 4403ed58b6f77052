import numpy as np
import pytest
from scipy.stats import binomtest

from regnet_calib import se3
from regnet_calib.decalib import make_initial, sample_decalib
from regnet_calib.encoding import DecalibRange
from regnet_calib.experiments import cascade_trials, run_sequence
from regnet_calib.expert import IdentityExpert, OracleExpert
from regnet_calib.metrics import evaluate
from regnet_calib.pipeline import (ExpertRegistry, TemporalFilter, cascade, pose_components,
                                   pose_from_components, refine_once, sign_test_p)
from regnet_calib.scene import generate_scene, make_frame
from regnet_calib.se3 import EulerPose, RigidTransform

R = DecalibRange(0.3, 5.0)


@pytest.fixture(scope="module")
def frame():
    return make_frame(generate_scene(11))


class ScaledOracle:
    """Recovers a fixed fraction of the remaining decalibration."""

    def __init__(self, h_gt, frac, ranges):
        self.h_gt, self.frac, self.ranges = h_gt, frac, ranges

    def estimate(self, rgb, depth, h_current):
        c = pose_components(se3.invert(self.h_gt) @ h_current)
        return pose_from_components(self.frac * c)


def test_oracle_refinement_is_exact(frame):
    phi = sample_decalib(0, R)
    h_init = make_initial(frame.h_gt, phi)
    est = refine_once(OracleExpert(frame.h_gt), h_init, frame.cloud, frame.rgb, frame.intrinsics, frame.h_gt)
    np.testing.assert_allclose(est.h.matrix, frame.h_gt.matrix, atol=1e-12)
    assert est.stages[0].error.mean_angle < 1e-10


def test_identity_expert_keeps_calibration(frame):
    h_init = make_initial(frame.h_gt, sample_decalib(1, R))
    est = cascade([IdentityExpert(R)], h_init, frame.cloud, frame.rgb, frame.intrinsics)
    np.testing.assert_array_equal(est.h.matrix, h_init.matrix)
    assert est.residuals() == []


def test_cascade_errors_shrink_stage_by_stage(frame):
    experts = [ScaledOracle(frame.h_gt, f, r) for f, r in
               ((0.5, R), (0.5, DecalibRange(0.2, 3.0)), (0.5, DecalibRange(0.1, 1.0)))]
    h_init = make_initial(frame.h_gt, sample_decalib(2, R))
    est = cascade(ExpertRegistry(experts), h_init, frame.cloud, frame.rgb, frame.intrinsics,
                  passes_per_stage=2, h_gt=frame.h_gt)
    angles = [a for a, _ in est.residuals()]
    assert est.stage_count == 6
    assert all(b < a for a, b in zip(angles, angles[1:]))


def test_cascade_with_empty_projection_does_not_crash(frame):
    from regnet_calib.projection import PointCloud

    est = cascade([IdentityExpert()], frame.h_gt, PointCloud.empty(), frame.rgb, frame.intrinsics)
    np.testing.assert_array_equal(est.h.matrix, frame.h_gt.matrix)
    with pytest.raises(ValueError, match="empty"):
        cascade([], frame.h_gt, frame.cloud, frame.rgb, frame.intrinsics)


def test_registry_order_enforced():
    a, b = IdentityExpert(DecalibRange(0.3, 5.0)), IdentityExpert(DecalibRange(0.1, 2.0))
    reg = ExpertRegistry([a, b, IdentityExpert(DecalibRange(0.05, 1.0))])
    assert len(reg.online()) == 2
    with pytest.raises(ValueError, match="strictly decrease"):
        ExpertRegistry([b, a])


def _estimates(h_ref, rng, n, noise_deg=0.5, noise_t=0.02):
    out = []
    for _ in range(n):
        c = np.r_[np.radians(rng.normal(0, noise_deg, 3)), rng.normal(0, noise_t, 3)]
        out.append(h_ref @ se3.invert(pose_from_components(c)))
    return out


def test_filter_median_matches_numpy(rng):
    ref = se3.euler_to_transform(EulerPose(0.2, 0.1, -0.3, (0.1, 0.2, 0.3)))
    ests = _estimates(ref, rng, 9)
    f = TemporalFilter("median", reference=ref)
    for e in ests:
        out = f.update(e)
    comps = np.array([pose_components(se3.invert(e) @ ref) for e in ests])
    np.testing.assert_allclose(pose_components(se3.invert(out) @ ref), np.median(comps, axis=0), atol=1e-12)


def test_filter_average_and_window(rng):
    ref = RigidTransform.identity()
    ests = _estimates(ref, rng, 6)
    f = TemporalFilter("average", window=3, reference=ref)
    for e in ests:
        out = f.update(e)
    comps = np.array([pose_components(se3.invert(e) @ ref) for e in ests[-3:]])
    np.testing.assert_allclose(pose_components(se3.invert(out) @ ref), comps.mean(axis=0), atol=1e-12)


def test_filter_of_constant_sequence_is_that_constant(rng):
    h = se3.euler_to_transform(EulerPose(1.0, 0.2, 2.5, (1, 2, 3)))
    f = TemporalFilter("median")    # reference defaults to the first estimate
    for _ in range(5):
        out = f.update(h)
    np.testing.assert_allclose(out.matrix, h.matrix, atol=1e-12)


def test_filter_validation():
    with pytest.raises(ValueError):
        TemporalFilter("mode")
    with pytest.raises(ValueError):
        TemporalFilter(window=0)
    with pytest.raises(ValueError, match="no frames"):
        TemporalFilter().value()


def test_median_ignores_minority_outliers(rng):
    ref = RigidTransform.identity()
    good = _estimates(ref, rng, 21, noise_deg=0.1)
    bad = [se3.euler_to_transform(EulerPose(0.5, -0.5, 0.5, (1, 1, 1)))] * 4
    med, avg = TemporalFilter("median", reference=ref), TemporalFilter("average", reference=ref)
    for e in good + bad:
        m, a = med.update(e), avg.update(e)
    assert evaluate(m, ref).mean_angle < 0.2
    assert evaluate(a, ref).mean_angle > 2.0


def test_sign_test_against_scipy():
    for w, l in ((10, 0), (35, 15), (25, 25), (3, 9), (0, 0)):
        expect = 1.0 if w + l == 0 else binomtest(w, w + l, 0.5, alternative="greater").pvalue
        assert sign_test_p(w, l) == pytest.approx(expect, rel=1e-12)


def test_run_sequence_with_oracle_and_injected_outliers(frame):
    frames = [frame] * 7
    phi = sample_decalib(3, R)
    bad = make_initial(frame.h_gt, se3.euler_to_transform(EulerPose(0.3, 0.3, 0.3, (1, 1, 1))))
    run = run_sequence(["oracle"], frames, phi, estimates_override={0: bad, 4: bad})
    assert run.filtered_error.mean_angle < 1e-9
    assert run.frame_errors[0].mean_angle > 10


def test_cascade_trials_pair_stages(frame):
    trials = cascade_trials([ScaledOracle(frame.h_gt, 0.5, R), "oracle"], [frame], 4, R)
    for t in trials:
        assert t.stages[0].mean_angle < t.before.mean_angle
        assert t.stages[1].mean_angle < 1e-9
