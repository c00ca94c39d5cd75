import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from glovehand.grasp import (Contact, InfeasibleSqueezeError, ObjectInertia, Wrench, build_grasp_matrix,
                             force_decompose, joining_line_fields, object_wrench, select_interaction_forces)
from glovehand.se3 import null_space_basis, skew


def c(r, n=None):
    r = np.asarray(r, dtype=float)
    if n is None:
        n = -r / np.linalg.norm(r) if np.linalg.norm(r) > 0 else np.array([0.0, 0.0, 1.0])
    return Contact(r, n)


def ring(p=3, radius=1.0, phase=0.0):
    ang = phase + 2 * np.pi * np.arange(p) / p
    return [c([radius * np.cos(a), radius * np.sin(a), 0.0]) for a in ang]


def random_contacts(seed, p):
    r = np.random.default_rng(seed)
    return [c(r.normal(size=3)) for _ in range(p)]


def test_single_contact_at_origin():
    G = build_grasp_matrix([Contact([0, 0, 0], [0, 0, 1])]).G
    np.testing.assert_array_equal(G, np.vstack([np.eye(3), np.zeros((3, 3))]))


def test_antipodal_pair_blocks():
    G = build_grasp_matrix([c([1, 0, 0]), c([-1, 0, 0])]).G
    assert G.shape == (6, 6)
    np.testing.assert_array_equal(G[3:, :3], skew([1, 0, 0]))
    np.testing.assert_array_equal(G[3:, 3:], skew([-1, 0, 0]))


def test_three_contacts_shape():
    assert build_grasp_matrix(ring()).G.shape == (6, 9)


def test_contact_needs_unit_normal():
    with pytest.raises(ValueError):
        Contact([1, 0, 0], [2, 0, 0])


def test_object_wrench_examples():
    sph = ObjectInertia.solid_sphere(1.0, 0.1)
    np.testing.assert_array_equal(object_wrench(sph, np.zeros(3), np.zeros(3)).vector(), np.zeros(6))
    w = object_wrench(ObjectInertia.solid_sphere(0.5, 0.1), [0, 0, 2], np.zeros(3))
    np.testing.assert_allclose(w.force, [0, 0, 1])
    gyro = ObjectInertia(1.0, np.diag([1.0, 2.0, 3.0]), [1.0, 1.0, 0.0])
    np.testing.assert_allclose(object_wrench(gyro, np.zeros(3), np.zeros(3)).moment, [0, 0, 1])


def test_inertia_validation():
    with pytest.raises(ValueError):
        ObjectInertia(0.0, np.eye(3))
    with pytest.raises(ValueError):
        ObjectInertia(1.0, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])
    with pytest.raises(ValueError):
        ObjectInertia(1.0, -np.eye(3))


def test_force_decompose_antipodal():
    contacts = [c([1, 0, 0]), c([-1, 0, 0])]
    grasp = build_grasp_matrix(contacts)
    sol = force_decompose(grasp, Wrench([0, 0, 2], [0, 0, 0]))
    # independent oracle: least squares on the 6x6 system
    ref, *_ = np.linalg.lstsq(grasp.G, [0, 0, 2, 0, 0, 0], rcond=None)
    np.testing.assert_allclose(sol.particular, [[0, 0, 1], [0, 0, 1]], atol=1e-12)
    np.testing.assert_allclose(sol.particular.reshape(-1), ref, atol=1e-12)


def test_zero_wrench_any_alpha(rng):
    contacts = ring()
    grasp = build_grasp_matrix(contacts)
    sol = force_decompose(grasp, Wrench(np.zeros(3), np.zeros(3)))
    np.testing.assert_array_equal(sol.particular, 0.0)
    for _ in range(10):
        F = sol.null_basis @ rng.normal(size=sol.null_basis.shape[1])
        assert np.linalg.norm(grasp.G @ F) <= 1e-12


@given(st.integers(3, 5), st.integers(0, 2**31 - 1))
def test_random_alpha_reproduces_wrench(p, seed):
    r = np.random.default_rng(seed)
    grasp = build_grasp_matrix(random_contacts(seed, p))
    W = r.normal(size=6)
    sol = force_decompose(grasp, Wrench.from_vector(W))
    F = sol.particular.reshape(-1) + sol.null_basis @ r.normal(size=sol.null_basis.shape[1])
    np.testing.assert_allclose(grasp.G @ F, W, atol=1e-9)


@given(st.integers(3, 6), st.integers(0, 2**31 - 1))
def test_null_dimension_3p_minus_6(p, seed):
    N = null_space_basis(build_grasp_matrix(random_contacts(seed, p)).G)
    assert N.shape[1] == 3 * p - 6


def test_null_dimension_two_contacts():
    N = null_space_basis(build_grasp_matrix([c([1, 0, 0]), c([-0.5, 0.3, 0.2])]).G)
    assert N.shape[1] == 1


@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_power_balance(p, seed):
    r = np.random.default_rng(seed)
    contacts = random_contacts(seed, p)
    G = build_grasp_matrix(contacts).G
    w, v = r.normal(size=3), r.normal(size=3)
    F = r.normal(size=(p, 3))
    lhs = sum(f @ (v + np.cross(w, ci.r)) for f, ci in zip(F, contacts))
    W = G @ F.reshape(-1)
    assert lhs == pytest.approx(W[:3] @ v + W[3:] @ w, abs=1e-9)


def test_joining_lines_in_null_space():
    contacts = random_contacts(5, 4)
    E = joining_line_fields(contacts)
    assert E.shape == (12, 6)
    assert np.linalg.norm(build_grasp_matrix(contacts).G @ E) <= 1e-12


def test_select_fmin_zero_is_noop():
    contacts = ring()
    sol = force_decompose(build_grasp_matrix(contacts), Wrench([0, 0, 1], [0, 0, 0]))
    out = select_interaction_forces(sol, contacts, 0.0)
    np.testing.assert_array_equal(out.alpha, 0.0)
    np.testing.assert_array_equal(out.total(), sol.total())


def test_antipodal_squeeze():
    contacts = [c([1, 0, 0]), c([-1, 0, 0])]
    grasp = build_grasp_matrix(contacts)
    W = np.array([0.0, 0.0, 0.4, 0.0, 0.0, 0.0])
    sol = force_decompose(grasp, Wrench.from_vector(W))
    out = select_interaction_forces(sol, contacts, 1.0)
    added = out.interaction()
    # closed form: unit push inward along the x axis at both tips
    np.testing.assert_allclose(added, [[-1, 0, 0], [1, 0, 0]], atol=1e-12)
    np.testing.assert_allclose(grasp.G @ out.total().reshape(-1), W, atol=1e-12)


def test_equilateral_ring_squeeze():
    contacts = ring(3, 0.05)
    grasp = build_grasp_matrix(contacts)
    sol = force_decompose(grasp, Wrench([0.0, 0.0, 0.3], [0.0, 0.0, 0.0]))
    out = select_interaction_forces(sol, contacts, 0.5)
    normals = np.array([ci.inward_normal for ci in contacts])
    assert np.all(np.einsum("ij,ij->i", out.total(), normals) >= 0.5 - 1e-12)
    assert np.linalg.norm(grasp.G @ out.interaction().reshape(-1)) <= 1e-9


def test_infeasible_squeeze():
    # both normals point the same way: no joining-line squeeze can help
    contacts = [Contact([1, 0, 0], [0, 0, 1]), Contact([-1, 0, 0], [0, 0, 1])]
    sol = force_decompose(build_grasp_matrix(contacts), Wrench(np.zeros(3), np.zeros(3)))
    with pytest.raises(InfeasibleSqueezeError):
        select_interaction_forces(sol, contacts, 1.0)


def test_select_argument_checks():
    contacts = ring()
    sol = force_decompose(build_grasp_matrix(contacts), Wrench(np.zeros(3), np.zeros(3)))
    with pytest.raises(ValueError):
        select_interaction_forces(sol, contacts, -1.0)
    with pytest.raises(ValueError):
        select_interaction_forces(sol, contacts[:1], 1.0)
