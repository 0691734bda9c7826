import pytest


@pytest.fixture(scope="session")
def default_scenario():
    from drivesense.scenario import ScenarioSpec, generate_scenario

    return generate_scenario(ScenarioSpec())


@pytest.fixture(scope="session")
def scenario_dir(tmp_path_factory, default_scenario):
    from drivesense.scenario import write_scenario

    out = tmp_path_factory.mktemp("scenario")
    paths = write_scenario(default_scenario, out)
    return out, paths
