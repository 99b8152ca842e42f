import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spheremap.errors import EmptyInput
from spheremap.geometry import (PointCloud, cartesian_to_spherical,
                                center_to_origin, estimate_normals_from_mesh,
                                rotate_about_x, rotate_about_z,
                                spherical_to_cartesian)


def _cloud(positions):
    positions = np.asarray(positions, dtype=np.float64)
    n = positions / np.linalg.norm(positions, axis=1, keepdims=True)
    return PointCloud(positions, n)


def test_empty_cloud_rejected():
    with pytest.raises(EmptyInput):
        PointCloud(np.empty((0, 3)), np.empty((0, 3)))


def test_known_directions():
    sph = cartesian_to_spherical(np.array([
        [0.0, 0.0, 1.0],   # +z pole
        [1.0, 0.0, 0.0],   # +x equator
        [0.0, 1.0, 0.0],   # +y equator
        [0.0, 0.0, -2.0],  # -z pole, rho 2
    ]))
    np.testing.assert_allclose(sph[0], [1.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(sph[1], [1.0, 90.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(sph[2], [1.0, 90.0, 90.0], atol=1e-12)
    np.testing.assert_allclose(sph[3], [2.0, 180.0, 0.0], atol=1e-12)


def test_origin_maps_to_zero():
    np.testing.assert_array_equal(
        cartesian_to_spherical(np.zeros((1, 3))), np.zeros((1, 3)))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(1e-6, 179.999999), st.floats(-180.0, 180.0))
def test_round_trip_property(rho, theta, phi):
    sph = np.array([[rho, theta, phi]])
    back = cartesian_to_spherical(spherical_to_cartesian(sph))
    assert abs(back[0, 0] - rho) / rho < 1e-9
    assert abs(back[0, 1] - theta) < 1e-7


def test_round_trip_bulk(rng):
    n = 10_000
    sph = np.stack([
        rng.uniform(0.1, 5.0, n),
        rng.uniform(0.001, 179.999, n),
        rng.uniform(-180.0, 180.0, n),
    ], axis=1)
    xyz = spherical_to_cartesian(sph)
    back = cartesian_to_spherical(xyz)
    again = spherical_to_cartesian(back)
    rel = np.abs(again - xyz).max() / np.abs(xyz).max()
    assert rel < 1e-9


def test_center_to_origin():
    cloud = _cloud([[2.0, 1.0, 1.0], [4.0, 3.0, 1.0]])
    centered = center_to_origin(cloud)
    np.testing.assert_allclose(centered.positions.mean(axis=0), 0.0, atol=1e-15)
    np.testing.assert_array_equal(centered.normals, cloud.normals)


def test_rotations_orthonormal_and_inverse():
    cloud = _cloud([[1.0, 2.0, 3.0], [0.5, -1.0, 2.0]])
    for rot in (rotate_about_x, rotate_about_z):
        there = rot(cloud, 37.0)
        back = rot(there, -37.0)
        np.testing.assert_allclose(back.positions, cloud.positions, atol=1e-12)
        np.testing.assert_allclose(
            np.linalg.norm(there.positions, axis=1),
            np.linalg.norm(cloud.positions, axis=1), atol=1e-12)


def test_rotate_z_moves_azimuth_only():
    cloud = _cloud([[1.0, 0.0, 0.5]])
    sph0 = cartesian_to_spherical(cloud.positions)
    sph1 = cartesian_to_spherical(rotate_about_z(cloud, 90.0).positions)
    assert abs(sph1[0, 1] - sph0[0, 1]) < 1e-12  # theta unchanged
    assert abs(((sph1[0, 2] - sph0[0, 2]) % 360.0) - 90.0) < 1e-12


def test_rotate_x_right_handed():
    # +y rotates into +z for a +90 degree turn about x
    cloud = _cloud([[0.0, 1.0, 0.0]])
    out = rotate_about_x(cloud, 90.0)
    np.testing.assert_allclose(out.positions[0], [0.0, 0.0, 1.0], atol=1e-12)


def _octahedron():
    vertices = np.array([
        [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
    ], dtype=np.float64)
    faces = np.array([
        [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
        [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
    ])
    return vertices, faces


def test_mesh_normals_point_outward_on_octahedron():
    vertices, faces = _octahedron()
    cloud = estimate_normals_from_mesh(vertices, faces)
    # every vertex normal must align with its radial direction
    radial = vertices / np.linalg.norm(vertices, axis=1, keepdims=True)
    dots = np.einsum("ij,ij->i", cloud.normals, radial)
    assert (dots > 0.9).all()
    np.testing.assert_allclose(np.linalg.norm(cloud.normals, axis=1), 1.0,
                               atol=1e-12)


def test_mesh_normals_sphere_accuracy():
    # dense lat-long sphere: area-weighted normals approach radial directions
    nt, np_ = 24, 48
    theta = np.linspace(0.001, np.pi - 0.001, nt)
    phi = np.linspace(-np.pi, np.pi, np_, endpoint=False)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    vertices = np.stack([np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp),
                         np.cos(tt)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(nt - 1):
        for j in range(np_):
            a = i * np_ + j
            b = i * np_ + (j + 1) % np_
            c = (i + 1) * np_ + j
            d = (i + 1) * np_ + (j + 1) % np_
            faces.append([a, b, c])
            faces.append([b, d, c])
    cloud = estimate_normals_from_mesh(vertices, np.array(faces))
    radial = vertices / np.linalg.norm(vertices, axis=1, keepdims=True)
    dots = np.einsum("ij,ij->i", cloud.normals, radial)
    assert dots.min() > 0.99
