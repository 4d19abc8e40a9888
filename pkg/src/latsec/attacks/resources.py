"""What each attack class needs from the attacker.

Three axes: model knowledge, disclosure (read access to signals) and
disruption (write access to actuator and/or sensor channels).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class AttackResources:
    needs_model: bool
    needs_disclosure: bool
    needs_actuator_disruption: bool
    needs_sensor_disruption: bool

    def to_dict(self) -> dict:
        return asdict(self)


REPLAY = AttackResources(needs_model=False, needs_disclosure=True,
                         needs_actuator_disruption=False, needs_sensor_disruption=True)
REPLAY_WITH_INJECTION = AttackResources(needs_model=False, needs_disclosure=True,
                                        needs_actuator_disruption=True,
                                        needs_sensor_disruption=True)
ZDA_LINEAR = AttackResources(needs_model=True, needs_disclosure=False,
                             needs_actuator_disruption=True, needs_sensor_disruption=False)
# the nonlinear branch test needs a state estimate at the attack start
ZDA_NONLINEAR = AttackResources(needs_model=True, needs_disclosure=True,
                                needs_actuator_disruption=True, needs_sensor_disruption=False)
COVERT_LINEAR = AttackResources(needs_model=True, needs_disclosure=False,
                                needs_actuator_disruption=True, needs_sensor_disruption=True)
COVERT_TRACKING = AttackResources(needs_model=True, needs_disclosure=True,
                                  needs_actuator_disruption=True, needs_sensor_disruption=True)
COVERT_NONLINEAR = AttackResources(needs_model=True, needs_disclosure=True,
                                   needs_actuator_disruption=True, needs_sensor_disruption=True)


def check_resources(kind: str, res: AttackResources) -> None:
    """Raise if ``res`` contradicts the structural rules for ``kind``."""
    if kind == "replay" and res.needs_model:
        raise ValueError("replay attacks must not require model knowledge")
    if kind.startswith("zda") and res.needs_sensor_disruption:
        raise ValueError("zero-dynamics attacks act on the actuator channel only")
    if kind.startswith("covert") and not (res.needs_actuator_disruption
                                          and res.needs_sensor_disruption):
        raise ValueError("covert attacks need both disruption channels")
