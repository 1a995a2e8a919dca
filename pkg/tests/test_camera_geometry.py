import numpy as np
import pytest

from src.camera_geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    ProjectionMatrix,
    ViewTransform,
    apply_view_transform,
    compose_projection,
    lemma1_residual,
    oracle_view_transform,
    project,
)
from src.errors import DegenerateCameraError, DegenerateDepthError, DegeneratePairError
from src.skeleton import PoseSequence
from src.synth_gait import CameraRig, render_views


def front_camera(distance=6.0):
    return compose_projection(
        CameraIntrinsics.from_focal(1000.0),
        CameraExtrinsics.looking((0.0, 1.0, -distance), 0.0),
    )


def test_principal_ray_hits_principal_point():
    p = project(np.array([0.0, 1.0, 0.0]), front_camera())
    assert np.allclose(p[:2] / p[2], [512.0, 384.0])
    assert p[2] == pytest.approx(6.0)


def test_world_x_maps_to_image_left_for_front_camera():
    p = project(np.array([1.0, 1.0, 0.0]), front_camera())
    assert p[0] / p[2] == pytest.approx(512.0 - 1000.0 / 6.0)


def test_camera_centre_is_null_vector():
    m = front_camera()
    assert np.allclose(m.center, [0.0, 1.0, -6.0])


def test_reflection_is_rejected():
    extr = CameraExtrinsics(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(DegenerateCameraError):
        compose_projection(CameraIntrinsics.from_focal(1000.0), extr)


def test_singular_intrinsics_rejected():
    with pytest.raises(DegenerateCameraError):
        CameraIntrinsics(np.zeros((3, 3)))


def test_oracle_identity_for_identical_cameras():
    m = front_camera()
    q = oracle_view_transform(m, m)
    assert np.allclose(q.q, np.eye(3), atol=1e-10)
    assert q.residual < 1e-8


def test_oracle_rejects_rank_deficient_source():
    m = ProjectionMatrix(np.zeros((3, 4)))
    with pytest.raises(DegeneratePairError):
        oracle_view_transform(m, front_camera())


def test_cocentered_transform_is_exact(walk, cocentered_rig):
    renders = render_views(walk, cocentered_rig)
    m_a = cocentered_rig.views[0].projection()
    m_b = cocentered_rig.views[-1].projection()
    q = oracle_view_transform(m_a, m_b)
    moved = apply_view_transform(q, renders[0])
    assert q.residual / np.linalg.norm(m_b.matrix) < 1e-10
    assert np.max(np.abs(moved.xy - renders[-1].xy)) < 1e-8


def test_oracle_round_trip_on_cocentered_rig(walk, cocentered_rig):
    renders = render_views(walk, cocentered_rig)
    m_a = cocentered_rig.views[0].projection()
    m_b = cocentered_rig.views[2].projection()
    forward = oracle_view_transform(m_a, m_b)
    backward = oracle_view_transform(m_b, m_a)
    back = apply_view_transform(backward, apply_view_transform(forward, renders[0]))
    assert np.max(np.abs(back.xy - renders[0].xy)) < 1e-8


def test_oracle_satisfies_normal_equations(acceptance_rig):
    for i, j in [(0, 1), (0, 4), (3, 7)]:
        m_a = acceptance_rig.views[i].projection().matrix
        m_b = acceptance_rig.views[j].projection().matrix
        q = oracle_view_transform(ProjectionMatrix(m_a), ProjectionMatrix(m_b))
        gradient = (q.q @ m_a - m_b) @ m_a.T
        assert np.max(np.abs(gradient)) < 1e-10 * np.linalg.norm(m_a) ** 2


@pytest.mark.parametrize("scale", [2.0, 0.5, 1e3, -1.0, -7.5])
def test_transform_is_projectively_scale_invariant(walk, acceptance_rig, scale):
    seq = render_views(walk, acceptance_rig)[0]
    q = oracle_view_transform(acceptance_rig.views[0].projection(), acceptance_rig.views[1].projection())
    expected = apply_view_transform(q, seq)
    scaled = apply_view_transform(ViewTransform(scale * q.q), seq)
    assert np.allclose(scaled.coords, expected.coords, rtol=1e-12, atol=1e-9)


def test_conjugation_preserves_action():
    frame = CameraIntrinsics.from_focal(1000.0).matrix
    rng = np.random.default_rng(3)
    q = ViewTransform(np.eye(3) + 0.01 * rng.normal(size=(3, 3)))
    pixel = q.conjugate(frame)
    x = np.array([600.0, 300.0, 1.0])
    assert np.allclose(pixel.q @ x, frame @ (q.q @ (np.linalg.inv(frame) @ x)))


def test_transform_to_zero_depth_raises():
    seq = PoseSequence(np.array([[[2.0, 3.0, 1.0]]]))
    q = ViewTransform(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, -2.0]]))
    with pytest.raises(DegenerateDepthError):
        apply_view_transform(q, seq)


def test_singular_transform_rejected():
    with pytest.raises(DegeneratePairError):
        ViewTransform(np.diag([1.0, 1.0, 0.0]))


def test_lemma_report_covers_ordered_pairs(walk, acceptance_rig):
    report = lemma1_residual(acceptance_rig, walk)
    k = len(acceptance_rig.views)
    assert len(report) == k * (k - 1)
    assert list(report.columns) == [
        "view_a", "view_b", "residual", "relative_residual", "mean_error_px", "max_error_px",
    ]
    assert (report["max_error_px"] >= report["mean_error_px"]).all()


def test_lemma_report_exact_on_cocentered_rig(walk, cocentered_rig):
    report = lemma1_residual(cocentered_rig, walk)
    assert report["max_error_px"].max() < 1e-8


def test_lemma_error_shrinks_with_camera_distance(walk):
    errors = []
    for radius in (2.0, 5.0, 10.0, 50.0):
        rig = CameraRig.preset("acceptance", radius=radius)
        errors.append(lemma1_residual(rig, walk)["mean_error_px"].mean())
    assert all(a > b for a, b in zip(errors, errors[1:]))


def test_lemma_report_empty_for_single_view(walk):
    rig = CameraRig.circle((0.0,))
    assert lemma1_residual(rig, walk).empty
