"""Per-step reward as a fixed, ordered case table over the step's event flags.

The cases overlap, so evaluation order matters and is frozen here: terminal
events first, then the combined traffic conditions, then free movement, then
bare nonzero speed, then the default.  ``compute_reward`` returns the value
of the first case whose predicate holds.

Note the nonzero-speed case (+0.04) is listed for completeness of the case
table but is shadowed by the earlier cases for every consistent flag
combination: by the time it is reached, braking and waiting are both false,
so any moving state was already caught by the free-movement case.
"""

from __future__ import annotations

from dataclasses import dataclass

R_COLLISION = -10.0
R_DESTINATION = 10.0
R_BRAKE_AND_WAIT = -0.05
R_BRAKE_XOR_WAIT = 0.025
R_FREE_MOVEMENT = 0.05
R_NONZERO_SPEED = 0.04
R_DEFAULT = -0.02


class InconsistentFlagsError(ValueError):
    """Raised for flag combinations the simulator can never produce."""


@dataclass(frozen=True)
class EventFlags:
    """Boolean events observed during one environment step."""

    collided: bool = False
    reached_destination: bool = False
    braking: bool = False
    waiting_at_light: bool = False
    speed_nonzero: bool = False

    def validate(self) -> None:
        if self.collided and self.reached_destination:
            raise InconsistentFlagsError("collided and reached_destination are mutually exclusive")


# (name, predicate, value), evaluated top to bottom; first match wins.
REWARD_CASES: tuple[tuple[str, object, float], ...] = (
    ("collision", lambda f: f.collided, R_COLLISION),
    ("destination", lambda f: f.reached_destination, R_DESTINATION),
    ("brake_and_wait", lambda f: f.braking and f.waiting_at_light, R_BRAKE_AND_WAIT),
    ("brake_xor_wait", lambda f: f.braking != f.waiting_at_light, R_BRAKE_XOR_WAIT),
    (
        "free_movement",
        lambda f: f.speed_nonzero and not f.braking and not f.waiting_at_light,
        R_FREE_MOVEMENT,
    ),
    ("nonzero_speed", lambda f: f.speed_nonzero, R_NONZERO_SPEED),
    ("default", lambda f: True, R_DEFAULT),
)


def compute_reward(flags: EventFlags) -> float:
    """Reward for one step: value of the first matching case in REWARD_CASES."""
    flags.validate()
    for _name, predicate, value in REWARD_CASES:
        if predicate(flags):
            return value
    raise AssertionError("default case is unconditional")
