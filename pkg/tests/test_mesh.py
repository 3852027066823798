import numpy as np
import pytest

from models.mesh import (
    EDGE_TAGS,
    GAMMA_PROFILE,
    GAMMA_R_MINUS,
    GAMMA_R_PLUS,
    LOWER,
    PERIODIC_LEFT,
    PERIODIC_RIGHT,
    UPPER,
    dump_mesh,
    generate_mesh,
    refine,
)

from conftest import make_domain, make_mesh


def test_flat_mesh_covers_cell(flat_mesh):
    assert np.all(flat_mesh.signed_areas() > 0)
    assert flat_mesh.signed_areas().sum() == pytest.approx(2 * np.pi * 1.5)
    assert flat_mesh.h <= 0.3 * np.sqrt(2) + 1e-12
    assert set(flat_mesh.edge_tags) == {GAMMA_PROFILE, GAMMA_R_PLUS, PERIODIC_LEFT, PERIODIC_RIGHT}


def test_profile_vertices_lie_on_profile(sine_mesh):
    on_profile = sine_mesh.vertices[sine_mesh.vertices_on(GAMMA_PROFILE)]
    assert np.allclose(on_profile[:, 1], sine_mesh.profile(on_profile[:, 0]), atol=1e-12)
    top = sine_mesh.vertices[sine_mesh.vertices_on(GAMMA_R_PLUS)]
    assert np.allclose(top[:, 1], 1.5)


def test_sine_mesh_area_matches_domain(sine_mesh):
    domain = make_domain("sine(0.3)", R=1.5, h=0.3)
    assert sine_mesh.signed_areas().sum() == pytest.approx(domain.area(), rel=1e-10)


def test_periodic_pairs_match_heights(sine_mesh):
    for right, left in sine_mesh.periodic_pairs.items():
        x_right, x_left = sine_mesh.vertices[right], sine_mesh.vertices[left]
        assert x_right[0] == pytest.approx(2 * np.pi)
        assert x_left[0] == pytest.approx(0.0)
        assert x_right[1] == pytest.approx(x_left[1])


def test_two_sided_mesh_regions(two_sided_mesh):
    areas = two_sided_mesh.signed_areas()
    assert areas[two_sided_mesh.triangles_in(UPPER)].sum() == pytest.approx(2 * np.pi * 2.0)
    assert areas[two_sided_mesh.triangles_in(LOWER)].sum() == pytest.approx(2 * np.pi * 2.0)
    bottom = two_sided_mesh.vertices[two_sided_mesh.vertices_on(GAMMA_R_MINUS)]
    assert np.allclose(bottom[:, 1], -2.0)
    assert set(two_sided_mesh.edge_tags) == set(EDGE_TAGS)


def test_generate_mesh_rejects_bad_spacing():
    with pytest.raises(ValueError):
        generate_mesh(make_domain(), 0.0)


def test_refine_quarters_triangles(flat_mesh):
    fine = refine(flat_mesh)
    assert fine.n_triangles == 4 * flat_mesh.n_triangles
    assert fine.h == pytest.approx(flat_mesh.h / 2)
    assert fine.signed_areas().sum() == pytest.approx(flat_mesh.signed_areas().sum())
    assert np.all(fine.signed_areas() > 0)
    for tag in EDGE_TAGS:
        assert len(fine.edges_with_tag(tag)) == 2 * len(flat_mesh.edges_with_tag(tag))


def test_refine_keeps_periodic_pairs_consistent():
    fine = refine(make_mesh("sine(0.3)", R=1.5, h=0.5))
    assert len(fine.periodic_pairs) == len(fine.vertices_on(PERIODIC_RIGHT))
    for right, left in fine.periodic_pairs.items():
        assert fine.vertices[right, 1] == pytest.approx(fine.vertices[left, 1])


def test_mesh_arrays_are_read_only(flat_mesh):
    with pytest.raises(ValueError):
        flat_mesh.vertices[0, 0] = 1.0


def test_dump_mesh_sections(tmp_path, flat_mesh):
    path = dump_mesh(flat_mesh, str(tmp_path / "meshes" / "cell.msh"))
    lines = open(path).read().splitlines()
    for section in ("$Vertices", "$Triangles", "$Pairs", "$Tags"):
        assert section in lines
    index = lines.index("$Triangles")
    assert int(lines[index + 1]) == flat_mesh.n_triangles
    assert lines[-1] == "$EndTags"
