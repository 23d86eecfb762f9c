import pytest

from mesh_manager import BasinMeshManager, CylinderMeshManager


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the full-length studies")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-length runs, skipped unless --runslow is given")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# --- Shared systems ---

def _prepared(manager):
    manager.load_and_prepare()
    return manager


@pytest.fixture(scope="session")
def basin_system():
    """Closed basin L=2 m, h=1 m, 8x4 cells, P=4."""
    return _prepared(BasinMeshManager(L=2.0, h=1.0, nx=8, nz=4, order=4)).get_system()


@pytest.fixture(scope="session")
def cylinder_manager():
    """Curved quarter cylinder R=1 m in 2.5 m of water, P=4."""
    return _prepared(CylinderMeshManager(R=1.0, h=2.5, L=3.0, beta=4, order=4))


@pytest.fixture(scope="session")
def cylinder_system(cylinder_manager):
    return cylinder_manager.get_system()
