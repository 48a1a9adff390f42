import numpy as np
import pytest

from app.geometry import Pose6
from app.shapes import ShapeKind, ShapePrimitive


@pytest.mark.parametrize(
    "shape, volume",
    [
        (ShapePrimitive.sphere(0.1), 4.0 / 3.0 * np.pi * 0.1**3),
        (ShapePrimitive.capsule(0.045, 0.3, 384), np.pi * 0.045**2 * 0.3 + 4.0 / 3.0 * np.pi * 0.045**3),
        (ShapePrimitive.cylinder(0.05, 0.2, 256), np.pi * 0.05**2 * 0.2),
        (ShapePrimitive.box(0.1, 0.2, 0.3), 0.1 * 0.2 * 0.3),
    ],
)
def test_meshes_are_watertight_and_within_budget(shape, volume):
    surface = shape.surface_mesh
    assert surface.is_watertight
    assert surface.is_winding_consistent
    assert len(surface.faces) <= shape.tessellation
    # positive signed volume means outward winding
    assert surface.volume == pytest.approx(volume, rel=0.1)
    vertices, faces = shape.mesh
    assert faces.shape == (len(surface.faces), 3)
    assert faces.max() < len(vertices)


def test_capsule_mesh_runs_along_x():
    lo, hi = ShapePrimitive.capsule(0.05, 0.3, 256).surface_mesh.bounds
    np.testing.assert_allclose(hi - lo, [0.4, 0.1, 0.1], rtol=0.05)


def test_sphere_nearest_point():
    s = ShapePrimitive.sphere(0.1)
    pose = Pose6([1.0, 0.0, 0.0])
    p = s.nearest_surface_point(pose, np.array([[1.0, 0.0, 0.5]]))
    np.testing.assert_allclose(p, [[1.0, 0.0, 0.1]], atol=1e-12)


def test_capsule_nearest_point_side_and_cap():
    c = ShapePrimitive.capsule(0.05, 0.3)
    pose = Pose6()
    side = c.nearest_surface_point(pose, np.array([[0.05, 0.0, -0.2]]))
    np.testing.assert_allclose(side, [[0.05, 0.0, -0.05]], atol=1e-12)
    cap = c.nearest_surface_point(pose, np.array([[0.5, 0.0, 0.0]]))
    np.testing.assert_allclose(cap, [[0.2, 0.0, 0.0]], atol=1e-12)


def test_cylinder_nearest_point_inside_goes_to_closest_face():
    c = ShapePrimitive.cylinder(0.1, 0.4)
    p = c.nearest_point_local(np.array([[0.19, 0.0, 0.0], [0.0, 0.0, 0.05]]))
    np.testing.assert_allclose(p, [[0.2, 0.0, 0.0], [0.0, 0.0, 0.1]], atol=1e-12)


def test_box_nearest_point_respects_pose():
    b = ShapePrimitive.box(0.2, 0.2, 0.2)
    pose = Pose6([0.0, 0.0, 1.0], [0.0, 0.0, np.pi / 4])
    p = b.nearest_surface_point(pose, np.array([[0.0, 0.0, 2.0]]))
    np.testing.assert_allclose(p, [[0.0, 0.0, 1.1]], atol=1e-12)


def test_symmetry_axes():
    assert ShapePrimitive.sphere(1.0).unobservable_axes == (3, 4, 5)
    assert ShapePrimitive.capsule(0.1, 0.2).unobservable_axes == (3,)
    assert ShapePrimitive.box(1, 1, 1).unobservable_axes == ()


def test_capsule_roll_leaves_nearest_point_unchanged(rng):
    c = ShapePrimitive.capsule(0.05, 0.3)
    pts = rng.normal(scale=0.3, size=(20, 3))
    a = c.nearest_surface_point(Pose6([0.1, 0.0, 0.2], [0.0, 0.2, 0.3]), pts)
    b = c.nearest_surface_point(Pose6([0.1, 0.0, 0.2], [1.3, 0.2, 0.3]), pts)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_invalid_dimensions_rejected():
    with pytest.raises(ValueError):
        ShapePrimitive(ShapeKind.CAPSULE, (0.1,))
    with pytest.raises(ValueError):
        ShapePrimitive.sphere(-1.0)
