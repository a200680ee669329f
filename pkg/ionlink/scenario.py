"""Scenario files: one JSON document describing a complete link."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import caseswitcher
from pydantic import BaseModel, Field, ValidationError, validator

from ionlink._models import (
    DetectorModel,
    ExcitationConfig,
    FiberConfig,
    IonConfig,
    NoiseToggles,
    RateConfig,
    ReadoutErrors,
    SourceConfig,
    TimingBudget,
)
from ionlink.errors import MissingSeedError

logger = logging.getLogger(__name__)

MAX_SEED = 2**64 - 1


class Scenario(BaseModel):
    """Every parameter of a simulated ion-photon link."""

    name: str = ""
    seed: int | None = Field(None, ge=0, le=MAX_SEED)
    shots: int = Field(10_000, ge=0)
    bootstrap_resamples: int = Field(0, ge=0)
    source: SourceConfig = Field(default_factory=SourceConfig)
    fiber: FiberConfig = Field(default_factory=FiberConfig)
    detector: DetectorModel = Field(default_factory=DetectorModel)
    readout: ReadoutErrors = Field(default_factory=ReadoutErrors)
    ion: IonConfig = Field(default_factory=IonConfig)
    timing: TimingBudget = Field(default_factory=TimingBudget)
    rates: RateConfig = Field(default_factory=RateConfig)
    noise: NoiseToggles = Field(default_factory=NoiseToggles)
    excitation: ExcitationConfig = Field(default_factory=ExcitationConfig)

    @validator("name")
    def _snake_name(cls, value: str) -> str:
        return caseswitcher.to_snake(value) if value else value

    def require_seed(self, command: str) -> int:
        """Seed of a stochastic command."""
        if self.seed is None:
            raise MissingSeedError(command)
        return self.seed


def load_scenario(path: Path) -> Scenario:
    """Parse a scenario file, naming it after the file when unnamed.

    :param path: JSON scenario file.
    :return: The validated scenario.
    """
    path = Path(path)
    scenario = Scenario.parse_file(path)
    if not scenario.name:
        scenario = scenario.copy(update={"name": caseswitcher.to_snake(path.stem)})
    logger.info('Loaded scenario "%s" from %s', scenario.name, path)
    return scenario


def shipped_scenario(name: str) -> Path:
    """Path of a scenario distributed with the package."""
    return Path(__file__).parent / "scenarios" / f"{caseswitcher.to_snake(name)}.json"


def validate_file(path: Path, stochastic: bool = False) -> list[str]:
    """Report schema and invariant violations without running anything.

    :param path: Scenario file.
    :param stochastic: Whether the scenario will drive a stochastic command.
    :return: One message per violation; empty when the file is valid.
    """
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        return [f"invalid JSON: {e}"]
    try:
        scenario = Scenario.parse_obj(data)
    except ValidationError as e:
        return [
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
            for err in e.errors()
        ]
    problems = []
    if stochastic and scenario.seed is None:
        problems.append("seed: required for stochastic commands")
    errors = scenario.readout
    if errors.eps_d2 * scenario.shots >= 1.0 and errors.eps_d2 > 0.0:
        problems.append("readout.eps_d2: leaked bright counts are not negligible")
    return problems
