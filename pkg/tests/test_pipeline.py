"""Inference driver: blending, smoothing, scheduling, retargeting, bench."""

import numpy as np
import pytest

from facemotion import (
    ControlSchedule,
    Deformation,
    DeformationKind,
    DimensionError,
    EmotionMode,
    EmotionSpec,
    KalmanParams,
    KeypointSet,
    LipScale,
    NoiseSpec,
    PhonemeEdit,
    PipelineError,
    InvalidPoseError,
    PoseTemplate,
    RegionMask,
    RigidPose,
    ScaleConfig,
    ScheduleError,
    StyleCode,
    Trajectory,
    bench_frame,
    blend_windows,
    builtin_pose_templates,
    build_phoneme_vector,
    compose_keypoints,
    decompose_keypoints,
    kalman_smooth,
    precompute_base,
    retarget,
    run_inference,
)
from facemotion.pipeline import BenchSizes, ControlLoop, KalmanStream, resolve_poses

from conftest import (
    SMALL_DIMS,
    SMALL_LIPS,
    make_audio,
    random_keypoints,
    random_pose,
)


SMALL_REGIONS = {
    "lips": SMALL_LIPS,
    "other": RegionMask("other", tuple(i for i in range(SMALL_DIMS.n_kp) if i not in SMALL_LIPS.indices)),
}


def session_inputs(seed=0, n_frames=12):
    rng = np.random.default_rng(seed)
    identity = random_keypoints(rng, SMALL_DIMS.n_kp)
    audio = make_audio(rng, n_frames, SMALL_DIMS.d_audio)
    return identity, audio


def run(schedule, *, seed=0, n_frames=12, weights, pose_source=None, phonemes=None,
        window=None, overlap=10):
    identity, audio = session_inputs(seed, n_frames)
    return run_inference(
        identity,
        pose_source if pose_source is not None else RigidPose.identity(),
        audio,
        StyleCode(0, 4),
        schedule,
        weights,
        phonemes=phonemes,
        regions=SMALL_REGIONS,
        window=window,
        overlap=overlap,
    )


class TestBlendWindows:
    def test_identical_constant_windows(self):
        w = np.full((5, 2), 3.0)
        out = blend_windows([w, w.copy()], overlap=2)
        assert out.shape == (8, 2)
        assert np.array_equal(out, np.full((8, 2), 3.0))

    def test_zero_overlap_concatenates(self):
        a = np.arange(6, dtype=np.float64).reshape(3, 2)
        b = a + 10
        out = blend_windows([a, b], overlap=0)
        assert np.array_equal(out, np.vstack([a, b]))

    def test_single_overlap_midpoint(self):
        a = np.zeros((3, 1))
        b = np.ones((3, 1))
        out = blend_windows([a, b], overlap=1)
        # alpha_0 = 1/2, so the shared frame lands exactly between
        assert out.shape == (5, 1)
        assert out[2, 0] == 0.5

    def test_length_law(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(1, 6))
            w = int(rng.integers(2, 9))
            ov = int(rng.integers(0, w))
            wins = [rng.normal(size=(w, 3)) for _ in range(n)]
            out = blend_windows(wins, ov)
            assert out.shape[0] == n * w - (n - 1) * ov

    def test_closed_form_weights(self):
        rng = np.random.default_rng(1)
        w, ov = 6, 3
        a = rng.normal(size=(w, 2))
        b = rng.normal(size=(w, 2))
        out = blend_windows([a, b], ov)
        expected = np.empty((2 * w - ov, 2))
        expected[: w - ov] = a[: w - ov]
        for j in range(ov):
            alpha = (j + 1) / (ov + 1)
            expected[w - ov + j] = (1 - alpha) * a[w - ov + j] + alpha * b[j]
        expected[w:] = b[ov:]
        assert np.allclose(out, expected, rtol=1e-15)

    def test_overlap_must_be_below_window(self):
        w = np.zeros((4, 1))
        with pytest.raises(DimensionError):
            blend_windows([w, w], overlap=4)

    def test_empty_windows_rejected(self):
        with pytest.raises(DimensionError):
            blend_windows([], overlap=0)


class TestKalman:
    def test_params_validation(self):
        with pytest.raises(DimensionError):
            KalmanParams(q=-1.0, r=0.01)
        with pytest.raises(DimensionError):
            KalmanParams(q=0.0, r=0.0)

    def test_constant_sequence_unchanged(self):
        frames = [Deformation(np.full((3, 3), 0.7)) for _ in range(10)]
        out = kalman_smooth(frames, KalmanParams())
        for d in out:
            assert np.allclose(d.offsets, 0.7, rtol=1e-15)

    def test_two_step_hand_value(self):
        # q=0: P0=r, predict P=r, K=1/2 regardless of r
        frames = [
            Deformation(np.array([[0.0, 0.0, 0.0]])),
            Deformation(np.array([[1.0, 1.0, 1.0]])),
        ]
        out = kalman_smooth(frames, KalmanParams(q=0.0, r=0.01))
        assert np.allclose(out[0].offsets, 0.0, atol=1e-15)
        assert np.allclose(out[1].offsets, 0.5, atol=1e-15)

    def test_hand_recursion_oracle_100_sequences(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(2, 30))
            q = float(rng.uniform(0.0, 1e-2))
            r = float(rng.uniform(1e-4, 1e-1))
            zs = rng.normal(size=(n, 2, 3))
            frames = [Deformation(z) for z in zs]
            out = kalman_smooth(frames, KalmanParams(q=q, r=r))
            # scalar recursion per coordinate, written independently
            x = zs[0].astype(np.float64).copy()
            p = np.full_like(x, r)
            expect = [x.copy()]
            for t in range(1, n):
                p = p + q
                k = p / (p + r)
                x = x + k * (zs[t] - x)
                p = (1.0 - k) * p
                expect.append(x.copy())
            for got, want in zip(out, expect):
                scale = max(np.max(np.abs(want)), 1.0)
                assert np.max(np.abs(got.offsets - want)) / scale < 1e-12

    def test_shift_equivariance(self):
        rng = np.random.default_rng(3)
        zs = rng.normal(size=(15, 2, 3))
        c = 4.25
        base = kalman_smooth([Deformation(z) for z in zs], KalmanParams())
        shifted = kalman_smooth([Deformation(z + c) for z in zs], KalmanParams())
        for a, b in zip(base, shifted):
            assert np.max(np.abs((b.offsets - a.offsets) - c)) < 1e-12

    def test_huge_process_noise_passthrough(self):
        rng = np.random.default_rng(4)
        zs = rng.normal(size=(20, 1, 3))
        out = kalman_smooth([Deformation(z) for z in zs], KalmanParams(q=1e12, r=1e-2))
        for got, z in zip(out, zs):
            assert np.max(np.abs(got.offsets - z)) < 1e-6

    def test_empty_sequence_rejected(self):
        with pytest.raises(DimensionError):
            kalman_smooth([], KalmanParams())

    def test_stream_matches_batch(self):
        rng = np.random.default_rng(5)
        zs = rng.normal(size=(12, 2, 3))
        params = KalmanParams()
        batch = kalman_smooth([Deformation(z) for z in zs], params)
        stream = KalmanStream(params)
        for z, want in zip(zs, batch):
            got = stream.step(z)
            assert np.array_equal(got, want.offsets)


class TestPoseSources:
    def test_template_cycles(self):
        poses = (RigidPose.identity(), RigidPose(np.eye(3), np.ones(3), 2.0))
        tpl = PoseTemplate("pair", poses)
        assert tpl.pose_at(0) is poses[0]
        assert tpl.pose_at(1) is poses[1]
        assert tpl.pose_at(2) is poses[0]

    def test_static_template(self):
        tpl = PoseTemplate.static()
        assert len(tpl.poses) == 1
        assert tpl.pose_at(99).scale == 1.0

    def test_resolve_from_template(self):
        tpl = PoseTemplate("pair", (RigidPose.identity(), RigidPose(np.eye(3), np.ones(3), 1.0)))
        poses = resolve_poses(tpl, 5)
        assert len(poses) == 5
        assert poses[4] is tpl.poses[0]

    def test_resolve_from_trajectory_requires_length(self):
        rng = np.random.default_rng(6)
        frames = tuple(random_keypoints(rng, 4) for _ in range(3))
        poses = tuple(random_pose(rng) for _ in range(3))
        traj = Trajectory(frames, poses)
        assert len(resolve_poses(traj, 3)) == 3
        with pytest.raises(InvalidPoseError):
            resolve_poses(traj, 5)

    def test_builtin_templates_valid(self):
        tpls = builtin_pose_templates()
        assert set(tpls) == {"static", "nod", "sway"}
        for tpl in tpls.values():
            for pose in tpl.poses:
                # RigidPose constructor re-validates orthonormality
                RigidPose(pose.rotation, pose.translation, pose.scale)

    def test_empty_template_rejected(self):
        with pytest.raises(InvalidPoseError):
            PoseTemplate("empty", ())


class TestRunInference:
    def test_zero_controls_equal_pose_composed(self, small_weights):
        # lip scale fixed 0 + neutral emotion: all deformations vanish
        schedule = ControlSchedule(lip_scale=LipScale.fixed(0.0))
        traj = run(schedule, weights=small_weights)
        identity, _ = session_inputs()
        zero = Deformation.zeros(SMALL_DIMS.n_kp)
        for k in traj.frames:
            expected = compose_keypoints(identity, RigidPose.identity(), zero)
            assert np.array_equal(k.coords, expected.coords)

    def test_deterministic(self, small_weights):
        schedule = ControlSchedule.neutral()
        a = run(schedule, weights=small_weights)
        b = run(schedule, weights=small_weights)
        assert a == b

    def test_emotion_zero_matches_lip_only(self, small_weights):
        lip_only = run(ControlSchedule.neutral(), weights=small_weights)
        spec = EmotionSpec(mode=EmotionMode.GLOBAL, global_emotion=("happy", 0.0))
        with_zero_emotion = run(
            ControlSchedule(lip_scale=LipScale.fixed(1.0), emotion=spec),
            weights=small_weights,
        )
        assert lip_only == with_zero_emotion

    def test_lip_sync_never_leaks_off_mask(self, small_weights):
        # without emotion, non-lip rows of K_d equal K_ori exactly
        schedule = ControlSchedule.neutral()
        traj = run(schedule, weights=small_weights)
        identity, _ = session_inputs()
        non_lip = [i for i in range(SMALL_DIMS.n_kp) if i not in SMALL_LIPS.indices]
        zero = Deformation.zeros(SMALL_DIMS.n_kp)
        for k in traj.frames:
            k_ori = compose_keypoints(identity, RigidPose.identity(), zero)
            assert np.array_equal(k.coords[non_lip], k_ori.coords[non_lip])

    def test_emotion_lands_exactly_on_non_lip_rows(self, small_weights):
        # K_d - (lip-only K_d) restricted to non-lip rows is the emotion field
        lip_only = run(ControlSchedule.neutral(), weights=small_weights)
        spec = EmotionSpec(mode=EmotionMode.GLOBAL, global_emotion=("happy", 1.0))
        emotional = run(
            ControlSchedule(lip_scale=LipScale.fixed(1.0), emotion=spec),
            weights=small_weights,
        )
        diff0 = emotional.frames[0].coords - lip_only.frames[0].coords
        assert np.any(diff0 != 0.0)

    def test_amplitude_scaling_changes_lips_only(self, small_weights):
        neutral = run(ControlSchedule.neutral(), weights=small_weights)
        amp = run(
            ControlSchedule(lip_scale=LipScale.amplitude(ScaleConfig())),
            weights=small_weights,
        )
        non_lip = [i for i in range(SMALL_DIMS.n_kp) if i not in SMALL_LIPS.indices]
        changed = False
        for a, b in zip(neutral.frames, amp.frames):
            assert np.array_equal(a.coords[non_lip], b.coords[non_lip])
            changed = changed or not np.array_equal(a.coords, b.coords)
        assert changed

    def test_kalman_on_zero_deformation_is_noop(self, small_weights):
        plain = run(ControlSchedule(lip_scale=LipScale.fixed(0.0)), weights=small_weights)
        smoothed = run(
            ControlSchedule(lip_scale=LipScale.fixed(0.0), kalman=KalmanParams()),
            weights=small_weights,
        )
        assert plain == smoothed

    def test_kalman_smooths_moving_lips(self, small_weights):
        plain = run(ControlSchedule.neutral(), weights=small_weights)
        smoothed = run(
            ControlSchedule(lip_scale=LipScale.fixed(1.0), kalman=KalmanParams(q=0.0, r=1.0)),
            weights=small_weights,
        )
        assert plain != smoothed

    def test_phoneme_edit_lambda_one_noop(self, small_weights):
        rng = np.random.default_rng(7)
        offsets = np.zeros((SMALL_DIMS.n_kp, 3))
        for i in SMALL_LIPS.indices:
            offsets[i] = rng.normal(size=3)
        vec = build_phoneme_vector(
            [Deformation(offsets, DeformationKind.LIP_SYNC)], SMALL_LIPS, "oo"
        )
        base = run(ControlSchedule.neutral(), weights=small_weights)
        edited = run(
            ControlSchedule(
                lip_scale=LipScale.fixed(1.0),
                phoneme_edits=(PhonemeEdit("oo", 1.0, 0, 12),),
            ),
            weights=small_weights,
            phonemes={"oo": vec},
        )
        assert base == edited

    def test_phoneme_edit_active_range_only(self, small_weights):
        rng = np.random.default_rng(8)
        offsets = np.zeros((SMALL_DIMS.n_kp, 3))
        for i in SMALL_LIPS.indices:
            offsets[i] = rng.normal(size=3)
        vec = build_phoneme_vector(
            [Deformation(offsets, DeformationKind.LIP_SYNC)], SMALL_LIPS, "oo"
        )
        base = run(ControlSchedule.neutral(), weights=small_weights)
        edited = run(
            ControlSchedule(
                lip_scale=LipScale.fixed(1.0),
                phoneme_edits=(PhonemeEdit("oo", 2.5, 4, 8),),
            ),
            weights=small_weights,
            phonemes={"oo": vec},
        )
        for t in range(12):
            same = np.array_equal(base.frames[t].coords, edited.frames[t].coords)
            if 4 <= t < 8:
                assert not same, f"frame {t} should be edited"
            else:
                assert same, f"frame {t} should be untouched"

    def test_unknown_phoneme_rejected(self, small_weights):
        schedule = ControlSchedule(
            lip_scale=LipScale.fixed(1.0),
            phoneme_edits=(PhonemeEdit("nope", 2.0, 0, 4),),
        )
        with pytest.raises(ScheduleError):
            run(schedule, weights=small_weights)

    def test_edit_range_beyond_length_rejected(self, small_weights):
        rng = np.random.default_rng(9)
        offsets = np.zeros((SMALL_DIMS.n_kp, 3))
        offsets[SMALL_LIPS.indices[0]] = rng.normal(size=3)
        vec = build_phoneme_vector(
            [Deformation(offsets, DeformationKind.LIP_SYNC)], SMALL_LIPS, "oo"
        )
        schedule = ControlSchedule(
            lip_scale=LipScale.fixed(1.0),
            phoneme_edits=(PhonemeEdit("oo", 2.0, 0, 99),),
        )
        with pytest.raises(ScheduleError):
            run(schedule, weights=small_weights, phonemes={"oo": vec})

    def test_windowing_matches_single_window(self, small_weights):
        # two different window lengths change the prediction stream
        whole = run(ControlSchedule.neutral(), weights=small_weights, n_frames=12, window=50)
        split = run(ControlSchedule.neutral(), weights=small_weights, n_frames=12, window=8, overlap=2)
        assert whole != split

    def test_pose_template_drives_output(self, small_weights):
        tpl = builtin_pose_templates(period=6, amplitude=0.1)["nod"]
        static = run(ControlSchedule.neutral(), weights=small_weights)
        nod = run(ControlSchedule.neutral(), weights=small_weights, pose_source=tpl)
        assert static != nod
        assert nod.poses is not None

    def test_frame_hook_sees_every_frame(self, small_weights):
        seen = []
        identity, audio = session_inputs()
        run_inference(
            identity,
            RigidPose.identity(),
            audio,
            StyleCode(0, 4),
            ControlSchedule.neutral(),
            small_weights,
            frame_hook=lambda t, k: seen.append(t),
        )
        assert seen == list(range(12))

    def test_lazy_equals_batch(self, small_weights):
        identity, audio = session_inputs()
        args = (identity, RigidPose.identity(), audio, StyleCode(0, 4), small_weights)
        batch_base = precompute_base(*args[:4], weights=small_weights, regions=SMALL_REGIONS)
        lazy_base = precompute_base(*args[:4], weights=small_weights, regions=SMALL_REGIONS, lazy=True)
        schedule = ControlSchedule.neutral()
        batch_loop = ControlLoop(batch_base, schedule)
        lazy_loop = ControlLoop(lazy_base, schedule)
        for t in range(12):
            a = batch_loop.step(t)
            b = lazy_loop.step(t)
            assert np.array_equal(a.coords, b.coords), f"frame {t}"


class TestControlLoop:
    def test_steps_must_be_sequential(self, small_weights):
        identity, audio = session_inputs()
        base = precompute_base(
            identity, RigidPose.identity(), audio, StyleCode(0, 4), weights=small_weights,
            regions=SMALL_REGIONS,
        )
        loop = ControlLoop(base, ControlSchedule.neutral())
        loop.step(0)
        with pytest.raises(PipelineError):
            loop.step(5)

    def test_mid_run_schedule_swap_record_and_diff(self, small_weights):
        identity, audio = session_inputs()

        def fresh_loop():
            base = precompute_base(
                identity, RigidPose.identity(), audio, StyleCode(0, 4), weights=small_weights,
                regions=SMALL_REGIONS,
            )
            return ControlLoop(base, ControlSchedule.neutral())

        # reference: full run under the neutral schedule
        ref = []
        loop = fresh_loop()
        for t in range(12):
            ref.append(loop.step(t))

        spec = EmotionSpec(mode=EmotionMode.GLOBAL, global_emotion=("sad", 2.0))
        swapped_schedule = ControlSchedule(lip_scale=LipScale.fixed(1.0), emotion=spec)
        loop = fresh_loop()
        got = []
        for t in range(12):
            if t == 6:
                loop.set_schedule(swapped_schedule)
            got.append(loop.step(t))

        for t in range(6):
            assert np.array_equal(got[t].coords, ref[t].coords), f"prefix frame {t}"
        assert any(
            not np.array_equal(got[t].coords, ref[t].coords) for t in range(6, 12)
        ), "schedule change had no effect"

    def test_errors_carry_frame_index(self, small_weights):
        identity, audio = session_inputs()
        base = precompute_base(
            identity, RigidPose.identity(), audio, StyleCode(0, 4), weights=small_weights,
            regions=SMALL_REGIONS,
        )
        loop = ControlLoop(base, ControlSchedule.neutral())
        loop.step(0)
        with pytest.raises(PipelineError, match="frame"):
            loop.step(3)


class TestRetarget:
    def test_self_retarget_reproduces_driving(self, small_weights):
        traj = run(ControlSchedule.neutral(), weights=small_weights)
        identity, _ = session_inputs()
        pose = RigidPose.identity()
        driving = [
            (pose, decompose_keypoints(k, pose, identity)) for k in traj.frames
        ]
        again = retarget(driving, identity)
        for a, b in zip(again.frames, traj.frames):
            assert np.allclose(a.coords, b.coords, atol=1e-12)

    def test_identity_pose_zero_delta(self):
        rng = np.random.default_rng(10)
        new_id = random_keypoints(rng, 5)
        driving = [(RigidPose.identity(), Deformation.zeros(5)) for _ in range(4)]
        traj = retarget(driving, new_id)
        for k in traj.frames:
            assert np.array_equal(k.coords, new_id.coords)

    def test_per_frame_compose_oracle(self):
        rng = np.random.default_rng(11)
        new_id = random_keypoints(rng, 6)
        driving = [
            (random_pose(rng), Deformation(rng.normal(size=(6, 3)))) for _ in range(8)
        ]
        traj = retarget(driving, new_id)
        for (pose, delta), frame in zip(driving, traj.frames):
            expected = compose_keypoints(new_id, pose, delta)
            assert np.array_equal(frame.coords, expected.coords)

    def test_inverse_composition_recovers_delta(self):
        rng = np.random.default_rng(12)
        new_id = random_keypoints(rng, 6)
        driving = [
            (random_pose(rng), Deformation(rng.normal(size=(6, 3)))) for _ in range(20)
        ]
        traj = retarget(driving, new_id)
        for (pose, delta), frame in zip(driving, traj.frames):
            back = decompose_keypoints(frame, pose, new_id)
            assert np.max(np.abs(back.offsets - delta.offsets)) < 1e-9

    def test_empty_driving_rejected(self):
        rng = np.random.default_rng(13)
        with pytest.raises(DimensionError):
            retarget([], random_keypoints(rng, 4))

    def test_malformed_pair_rejected(self):
        rng = np.random.default_rng(14)
        new_id = random_keypoints(rng, 4)
        with pytest.raises(DimensionError):
            retarget([(RigidPose.identity(),)], new_id)


class TestBench:
    def test_zero_frames_empty_report(self):
        report = bench_frame(sizes=BenchSizes(n_frames=0, warmup=0, dims=SMALL_DIMS))
        assert report.rows == ()
        assert report.to_text()  # header still renders

    def test_report_has_both_stages(self):
        report = bench_frame(sizes=BenchSizes(n_frames=10, warmup=2, dims=SMALL_DIMS))
        names = [r.stage for r in report.rows]
        assert names == ["control", "full"]
        text = report.to_text()
        assert "control" in text and "full" in text
        for row in report.rows:
            assert row.median_ms > 0
            assert row.p95_ms >= row.median_ms


class TestTrajectory:
    def test_uniform_n_kp_enforced(self):
        rng = np.random.default_rng(15)
        with pytest.raises(DimensionError):
            Trajectory((random_keypoints(rng, 3), random_keypoints(rng, 4)))

    def test_pose_track_length_must_match(self):
        rng = np.random.default_rng(16)
        frames = tuple(random_keypoints(rng, 3) for _ in range(2))
        with pytest.raises(DimensionError):
            Trajectory(frames, (RigidPose.identity(),))

    def test_equality_and_len(self):
        rng = np.random.default_rng(17)
        frames = tuple(random_keypoints(rng, 3) for _ in range(4))
        a = Trajectory(frames)
        b = Trajectory(frames)
        assert a == b
        assert len(a) == 4
        assert a.n_kp == 3
