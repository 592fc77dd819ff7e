# Bundled scenario library
import os
from typing import List

from app.scenario import ScenarioConfig, load_scenario

SCENARIO_DIR = os.path.dirname(os.path.abspath(__file__))


def list_scenarios() -> List[str]:
    """Names of the bundled scenarios, without the .conf extension"""
    return sorted(name[:-5] for name in os.listdir(SCENARIO_DIR) if name.endswith('.conf'))


def load_scenario_text(name: str) -> str:
    """Text of a bundled scenario name or of a path on disk"""
    candidates = [name, os.path.join(SCENARIO_DIR, name)]
    if not name.endswith('.conf'):
        # Fallback for bundled names without extension
        candidates.append(os.path.join(SCENARIO_DIR, name + '.conf'))
    for path in candidates:
        if os.path.isfile(path):
            with open(path, 'r', encoding='utf-8') as f:
                return f.read()
    raise FileNotFoundError(f"no scenario named {name!r} (bundled: {', '.join(list_scenarios())})")


def load_scenario_file(name: str) -> ScenarioConfig:
    return load_scenario(load_scenario_text(name))
