import pytest

from invborn import (
    WaveMode,
    assemble,
    build_ball_grid,
    build_sphere_boundary,
    linearized_operator,
)


def make_ops(kind="diffuse", k=1.0, a=1.0, omega=2.0, h=0.45, n_src=6, n_det=6):
    grid = build_ball_grid(a, h)
    boundary = build_sphere_boundary(omega, n_src, n_det)
    return assemble(WaveMode(kind, k), grid, boundary)


@pytest.fixture(scope="session")
def small_ops():
    """Coarse diffuse problem (56 voxels, 6 x 6 pairs): fast enough for per-test use."""
    return make_ops(h=0.45, n_src=6, n_det=6)


@pytest.fixture(scope="session")
def small_linop(small_ops):
    return linearized_operator(small_ops)
