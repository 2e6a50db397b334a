import numpy as np
import pytest

from roomlayout import kernels, synth

BACKENDS = [kernels.python_backend] + ([kernels.compiled_backend] if kernels.compiled_backend else [])
BACKEND_IDS = ["python"] + (["cython"] if kernels.compiled_backend else [])


@pytest.fixture(params=BACKENDS, ids=BACKEND_IDS)
def backend(request):
    return request.param


@pytest.fixture
def use_backend(monkeypatch, backend):
    """Route every module-level kernel call through ``backend``."""
    monkeypatch.setattr(kernels, "KdTree", backend.KdTree)
    monkeypatch.setattr(kernels, "tsdf_integrate", backend.tsdf_integrate)
    return backend


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def model_db(tmp_path_factory):
    return synth.make_model_database(tmp_path_factory.mktemp("models"), per_category=3, seed=0)


@pytest.fixture(scope="session")
def box_room():
    """Noiseless 4 x 3 x 2.5 m room, no furniture."""
    return synth.generate_scene(synth.SceneSpec(points_per_surface=2000, seed=1))


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
