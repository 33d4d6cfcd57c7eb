import logging
import os

import pytest
import structlog

from app import demand_model as dm
from app.commands.common import corridor_from, cost_params_from, demand_from, policy_from, vehicles_from
from app.config import build_run_config
from app.providers.preset_provider import get_preset

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def preset_config(name, **sections):
    overrides = [{k: v} for k, v in sections.items()]
    return build_run_config(get_preset(name), overrides=overrides)


class Scenario:
    """Model objects for one preset corridor."""

    def __init__(self, name, kind="uniform"):
        config = preset_config(name, demand={"kind": kind})
        self.config = config
        self.corridor = corridor_from(config)
        self.demand = demand_from(config)
        self.params = cost_params_from(config)
        self.H = config.costs.headway_h
        self.vehicles = {v.name: v for v in vehicles_from(config)}
        self.policy = policy_from(config)

    def with_kind(self, kind):
        if kind == "triangular":
            return dm.triangular(self.demand.total_demand, self.corridor.route_length)
        return dm.uniform(self.demand.total_demand, self.corridor.route_length)


@pytest.fixture(scope="session")
def cta126():
    return Scenario("cta126")


@pytest.fixture(scope="session")
def cta84():
    return Scenario("cta84")


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture(autouse=True)
def _restore_logging():
    # commands replace the root handlers with one bound to the test's stderr
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers = handlers
    root.setLevel(level)
    structlog.reset_defaults()
