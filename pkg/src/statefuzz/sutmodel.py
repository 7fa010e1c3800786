"""Simulated system under test: a dual-layer vehicle state machine.

Two layers evolve together. The application layer walks a mission script
(PRE_ARM through DONE) while the autopilot layer tracks the flight mode
(STABILIZED, OFFBOARD, ...). The composed pair is what tests target and
what traces record.

The module also hosts the fault registry. A fault is a behavioral override
keyed by an id (F1..F11) that is either seeded into a config or not; the
transition core consults the registry at every injected control action and
at the few environment-conditioned points the registry describes. F9-F11
describe rotorcraft semantics that are always on (loiter and throttle-toggle
requests realize as POSCTL); they are listed so configs may name them, but
seeding them changes nothing.

Times are simulated milliseconds. Nothing here reads a wall clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from random import Random
from typing import Optional

from .errors import ConfigError, IllegalEvent, UnknownFault

# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


class AppState(str, Enum):
    PRE_ARM = "PRE_ARM"
    TAKEOFF = "TAKEOFF"
    FLYING_TO_WAYPOINT = "FLYING_TO_WAYPOINT"
    HOVERING = "HOVERING"
    LANDING = "LANDING"
    DISARMING = "DISARMING"
    HUMAN_CONTROL = "HUMAN_CONTROL"
    RETURNING = "RETURNING"
    DONE = "DONE"


class AutopilotMode(str, Enum):
    STABILIZED = "STABILIZED"
    OFFBOARD = "OFFBOARD"
    POSCTL = "POSCTL"
    ALTCTL = "ALTCTL"
    LAND = "LAND"
    RTL = "RTL"
    AUTO_LOITER = "AUTO.LOITER"
    AUTO_LAND = "AUTO.LAND"


class RcAction(str, Enum):
    """Control actions a test may inject (RC input events)."""

    ALTCTL = "ALTCTL"
    POSCTL = "POSCTL"
    STABILIZED = "STABILIZED"
    OFFBOARD = "OFFBOARD"
    AUTO_LOITER = "AUTO.LOITER"
    AUTO_LAND = "AUTO.LAND"
    AUTO_RTL = "AUTO.RTL"
    THROTTLE_TOGGLED = "THROTTLE_TOGGLED"


#: sentinel action name for baseline (no-injection) tests
NO_ACTION = "NONE"

#: app states a fuzz spec may target
TARGETABLE_STATES = (
    AppState.TAKEOFF,
    AppState.FLYING_TO_WAYPOINT,
    AppState.HOVERING,
    AppState.LANDING,
    AppState.DISARMING,
    AppState.RETURNING,
)

#: autopilot modes a fuzz spec may pair with app states
CONSTRAINT_MODES = (
    AutopilotMode.STABILIZED,
    AutopilotMode.OFFBOARD,
    AutopilotMode.POSCTL,
    AutopilotMode.ALTCTL,
    AutopilotMode.LAND,
    AutopilotMode.RTL,
)

THROTTLE_LEVELS = ("low", "mid", "high")
GEOFENCE_SETTINGS = ("none", "WARN", "RETURN", "LAND")
INTENSITY_LEVELS = ("none", "low", "medium", "high")

_INTENSITY_RANK = {lvl: i for i, lvl in enumerate(INTENSITY_LEVELS)}

#: what mode the autopilot actually enters for each honored action.
#: AUTO.LOITER and THROTTLE_TOGGLED realize as POSCTL on this airframe;
#: that mapping is exactly what the naive oracle variant gets wrong.
REALIZED_MODE = {
    RcAction.ALTCTL: AutopilotMode.ALTCTL,
    RcAction.POSCTL: AutopilotMode.POSCTL,
    RcAction.STABILIZED: AutopilotMode.STABILIZED,
    RcAction.OFFBOARD: AutopilotMode.OFFBOARD,
    RcAction.AUTO_LOITER: AutopilotMode.POSCTL,
    RcAction.AUTO_LAND: AutopilotMode.LAND,
    RcAction.AUTO_RTL: AutopilotMode.RTL,
    RcAction.THROTTLE_TOGGLED: AutopilotMode.POSCTL,
}

#: honored manual-family requests hand the vehicle to the operator
_TAKEOVER_MODES = {
    AutopilotMode.ALTCTL,
    AutopilotMode.POSCTL,
    AutopilotMode.STABILIZED,
}


# ---------------------------------------------------------------------------
# fault registry
# ---------------------------------------------------------------------------


class FaultId(str, Enum):
    F1 = "F1"   # land request dropped while hovering
    F2 = "F2"   # manual POSCTL dropped during the stabilized phase of takeoff
    F3 = "F3"   # offboard reactivation streams a stale setpoint (jerk/thrash)
    F4 = "F4"   # POSCTL deferred during fence-triggered return, until landed
    F5 = "F5"   # return-to-launch request dropped during takeoff
    F6 = "F6"   # heavy gps noise drives climb/land mode thrashing
    F7 = "F7"   # manual POSCTL dropped after a geofence warning
    F8 = "F8"   # disarm hangs after touching down in STABILIZED
    F9 = "F9"   # throttle toggle realizes as POSCTL (airframe semantics, always on)
    F10 = "F10"  # loiter request realizes as POSCTL while flying (always on)
    F11 = "F11"  # loiter request realizes as POSCTL while landing (always on)


FAULT_NOTES = {
    FaultId.F1: "AUTO.LAND requests are dropped while the app is HOVERING",
    FaultId.F2: "POSCTL requests are dropped while TAKEOFF is still STABILIZED",
    FaultId.F3: "OFFBOARD reactivation from LAND/RTL uses a stale setpoint",
    FaultId.F4: "POSCTL during a fence-triggered RTL is deferred until touchdown",
    FaultId.F5: "AUTO.RTL requests are dropped during TAKEOFF",
    FaultId.F6: "with gps noise 'high' the mode thrashes between LAND and OFFBOARD",
    FaultId.F7: "POSCTL requests are dropped once a geofence WARN has fired",
    FaultId.F8: "disarm times out when touchdown happens in STABILIZED",
    FaultId.F9: "THROTTLE_TOGGLED realizes as POSCTL (not a mode no-op)",
    FaultId.F10: "AUTO.LOITER realizes as POSCTL while flying",
    FaultId.F11: "AUTO.LOITER realizes as POSCTL while landing",
}


class Decision(str, Enum):
    """What a seeded fault does to an injected control action."""

    IGNORE = "IGNORE"
    DEFER = "DEFER"
    CORRUPT = "CORRUPT"
    PASS_THROUGH = "PASS_THROUGH"


@dataclass(frozen=True)
class InjectionRequest:
    """The context a fault override sees when an action arrives."""

    action: RcAction
    app_state: AppState
    mode: AutopilotMode
    warn_active: bool = False
    fence_failsafe_active: bool = False


def inject_fault_behavior(fault: FaultId | str, request: InjectionRequest) -> Decision:
    """Decide how a single seeded fault treats an injected action.

    Pure and deterministic. Raises UnknownFault for ids outside the registry.
    """
    try:
        fault = FaultId(fault)
    except ValueError:
        raise UnknownFault(f"no such fault id: {fault!r}") from None

    a, s, m = request.action, request.app_state, request.mode
    if fault is FaultId.F1 and a is RcAction.AUTO_LAND and s is AppState.HOVERING:
        return Decision.IGNORE
    if (
        fault is FaultId.F2
        and a is RcAction.POSCTL
        and s is AppState.TAKEOFF
        and m is AutopilotMode.STABILIZED
    ):
        return Decision.IGNORE
    if (
        fault is FaultId.F3
        and a is RcAction.OFFBOARD
        and m in (AutopilotMode.LAND, AutopilotMode.RTL)
    ):
        return Decision.CORRUPT
    if (
        fault is FaultId.F4
        and a is RcAction.POSCTL
        and m is AutopilotMode.RTL
        and request.fence_failsafe_active
    ):
        return Decision.DEFER
    if fault is FaultId.F5 and a is RcAction.AUTO_RTL and s is AppState.TAKEOFF:
        return Decision.IGNORE
    if fault is FaultId.F7 and a is RcAction.POSCTL and request.warn_active:
        return Decision.IGNORE
    # F6 and F8 are environment/phase conditioned, not action overrides.
    # F9-F11 are the always-on realized-mode mapping.
    return Decision.PASS_THROUGH


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SutConfig:
    """Tunable system parameters plus the seeded fault set.

    latency_window_ms bounds the internal STABILIZED-to-OFFBOARD switch
    during TAKEOFF; each flight samples the switch latency uniformly from
    it. Signal-loss thresholds are seconds; the application-level one must
    fire before the autopilot-level one.
    """

    latency_window_ms: tuple[float, float] = (1500.0, 4500.0)
    app_signal_loss_s: float = 20.0
    autopilot_signal_loss_s: float = 60.0
    geofence_action: str = "RETURN"
    gps_degrade_level: str = "high"
    compass_degrade_level: str = "high"
    seeded_faults: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        lo, hi = self.latency_window_ms
        if not (0.0 <= lo < hi):
            raise ConfigError(
                f"latency window must satisfy 0 <= lo < hi, got {self.latency_window_ms}"
            )
        if not (0.0 < self.app_signal_loss_s < self.autopilot_signal_loss_s):
            raise ConfigError(
                "application signal-loss threshold must be positive and below "
                f"the autopilot threshold ({self.app_signal_loss_s} vs "
                f"{self.autopilot_signal_loss_s})"
            )
        if self.geofence_action not in GEOFENCE_SETTINGS[1:]:
            raise ConfigError(
                f"geofence action must be one of {GEOFENCE_SETTINGS[1:]}, "
                f"got {self.geofence_action!r}"
            )
        for lvl in (self.gps_degrade_level, self.compass_degrade_level):
            if lvl not in INTENSITY_LEVELS:
                raise ConfigError(f"unknown sensitivity level {lvl!r}")
        for fid in self.seeded_faults:
            if fid not in FaultId._value2member_map_:
                raise UnknownFault(f"cannot seed unknown fault {fid!r}")

    def faults(self) -> tuple[FaultId, ...]:
        return tuple(FaultId(f) for f in self.seeded_faults)

    def has(self, fault: FaultId) -> bool:
        return fault.value in self.seeded_faults

    def to_dict(self) -> dict:
        return {
            "latency_window_ms": list(self.latency_window_ms),
            "app_signal_loss_s": self.app_signal_loss_s,
            "autopilot_signal_loss_s": self.autopilot_signal_loss_s,
            "geofence_action": self.geofence_action,
            "gps_degrade_level": self.gps_degrade_level,
            "compass_degrade_level": self.compass_degrade_level,
            "seeded_faults": sorted(self.seeded_faults),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SutConfig":
        known = {
            "latency_window_ms",
            "app_signal_loss_s",
            "autopilot_signal_loss_s",
            "geofence_action",
            "gps_degrade_level",
            "compass_degrade_level",
            "seeded_faults",
        }
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kwargs = dict(raw)
        if "latency_window_ms" in kwargs:
            lo, hi = kwargs["latency_window_ms"]
            kwargs["latency_window_ms"] = (float(lo), float(hi))
        if "seeded_faults" in kwargs:
            kwargs["seeded_faults"] = tuple(kwargs["seeded_faults"])
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# events and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tick:
    """Advance simulated time. dt_ms defaults to the 10 ms grid; the test
    executor issues partial ticks to hit exact injection instants."""

    dt_ms: float = 10.0


@dataclass(frozen=True)
class RcInput:
    action: RcAction


@dataclass(frozen=True)
class EnvChange:
    """Mid-flight environment change: field is one of
    'signal' (lost|restored), 'gps_noise', 'compass_interference', 'wind'."""

    env_field: str
    value: str


Event = Tick | RcInput | EnvChange


@dataclass(frozen=True)
class TelemetryRecord:
    t_ms: float
    kind: str           # state | mode | injection | failsafe | exception | note
    detail: str


@dataclass(frozen=True)
class FailsafeEvent:
    t_ms: float
    kind: str           # GEOFENCE | SIGNAL_APP | SIGNAL_AUTOPILOT | DEGRADED_GPS | DEGRADED_COMPASS
    detail: str


# ---------------------------------------------------------------------------
# flight kinematics constants (desk scale)
# ---------------------------------------------------------------------------

TICK_MS = 10.0
PREARM_MS = 500.0
TAKEOFF_ALT_M = 10.0
CLIMB_RATE_MPS = 0.8          # 10 m climb -> takeoff lasts 12.5 s
DESCENT_RATE_MPS = 2.0
MANUAL_SINK_MPS = 1.0         # low-throttle sink while a human holds
MANUAL_CLIMB_MPS = 0.8        # high-throttle drift while a human holds
HOVER_PAUSE_MS = 3000.0
HOLD_WINDOW_MS = 10000.0      # observation window after a takeover
DISARM_MS = 1000.0
DISARM_TIMEOUT_MS = 5000.0
SIM_CEILING_MS = 600_000.0
JERK_JUMP_M = 8.0             # setpoint discontinuity that counts as a jerk
OSC_WINDOW_MS = 5000.0        # a mode must return within this window to count
THRASH_PERIOD_MS = 500.0

WIND_DRIFT_CAP_M = {"none": 0.0, "low": 0.5, "medium": 1.5, "high": 3.0}
WIND_DRIFT_RATE_MPS = {"none": 0.0, "low": 0.15, "medium": 0.45, "high": 0.9}
GPS_JITTER_M = {"none": 0.0, "low": 0.1, "medium": 0.3, "high": 0.8}


def _dist3(a: tuple[float, float, float], b: tuple[float, float, float]) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def _point_in_polygon(x: float, y: float, poly: tuple[tuple[float, float], ...]) -> bool:
    """Ray-cast point-in-polygon; boundary points count as inside."""
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                inside = not inside
            elif x == xi:
                return True
    return inside


# ---------------------------------------------------------------------------
# snapshot
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SutSnapshot:
    """One instant of the composed system, including its mission context.

    Carries everything the transition function needs, so step() is a pure
    function of (snapshot, event, config, rng).
    """

    t_ms: float
    app_state: AppState
    mode: AutopilotMode
    position: tuple[float, float, float]
    armed: bool
    # mission context (static per flight)
    waypoints: tuple[tuple[float, float, float], ...]
    cruise_speed: float
    geofence_polygon: Optional[tuple[tuple[float, float], ...]]
    # environment (per-test vector; signal may flip mid-flight)
    throttle: str = "mid"
    geofence: str = "none"
    wind: str = "none"
    gps_noise: str = "none"
    compass_interference: str = "none"
    signal_lost_since: Optional[float] = None
    # dynamic bookkeeping
    legs_done: int = 0
    mode_switch_at: Optional[float] = None
    warn_active: bool = False
    fence_failsafe_active: bool = False
    deferred_action: Optional[RcAction] = None

    def with_time(self, t_ms: float) -> "SutSnapshot":
        return replace(self, t_ms=t_ms)


# ---------------------------------------------------------------------------
# simulation engine
# ---------------------------------------------------------------------------


class Vehicle:
    """Mutable flight simulation behind the public step()/executor.

    One instance is one flight. The executor drives it with advance_to(),
    apply_rc() and apply_env(); the public step() wraps a single event in
    a fresh instance so its snapshot-in/snapshot-out contract stays pure.
    """

    def __init__(
        self,
        waypoints: tuple[tuple[float, float, float], ...],
        cruise_speed: float,
        geofence_polygon: Optional[tuple[tuple[float, float], ...]],
        config: SutConfig,
        env: dict,
        rng: Random,
    ) -> None:
        self.cfg = config
        self.rng = rng
        self.waypoints = tuple(tuple(float(c) for c in w) for w in waypoints)
        self.cruise = float(cruise_speed)
        self.fence = (
            tuple(tuple(float(c) for c in p) for p in geofence_polygon)
            if geofence_polygon
            else None
        )

        self.t = 0.0
        self.app = AppState.PRE_ARM
        self.mode = AutopilotMode.STABILIZED
        self.pos = (0.0, 0.0, 0.0)
        self.armed = False

        self.throttle = env.get("throttle", "mid")
        self.geofence = env.get("geofence", "none")
        self.wind = env.get("wind", "none")
        self.gps_noise = env.get("gps_noise", "none")
        self.compass = env.get("compass_interference", "none")
        self.signal_lost_since: Optional[float] = None

        self.legs_done = 0
        self.mode_switch_at: Optional[float] = None
        lo, hi = config.latency_window_ms
        self.switch_latency = lo + (hi - lo) * rng.random()

        self.hold_point: Optional[tuple[float, float, float]] = None
        self.hold_until: Optional[float] = None
        self.manual_airborne = False
        self.manual_landing = False
        self.phase_deadline: Optional[float] = None   # hover pause / disarm timer
        self.disarm_deadline: Optional[float] = None  # disarm-hang watchdog
        self.land_target: Optional[tuple[float, float]] = None
        self.resume_target: Optional[tuple[float, float, float]] = None

        self.warn_active = False
        self.fence_breached = False
        self.fence_failsafe_active = False
        self.deferred_action: Optional[RcAction] = None
        self.diverted = False
        self.app_ls_fired = False
        self.ap_ls_fired = False
        self.gps_degraded_noted = False
        self.compass_degraded_noted = False
        self.f6_pending = config.has(FaultId.F6) and self.gps_noise == "high"
        self.thrash_flips_left = 0
        self.thrash_next_at = 0.0
        self.thrash_pair = (AutopilotMode.LAND, AutopilotMode.OFFBOARD)

        self.wind_dev = 0.0
        self.path_deviation_max = 0.0
        self.jerk_flag = False
        self.oscillation_count = 0
        self._mode_history: list[tuple[float, AutopilotMode]] = [(0.0, self.mode)]

        self.finished = False
        self.mission_completed = False
        self.records: list[TelemetryRecord] = []
        self.failsafe_events: list[FailsafeEvent] = []
        self.exceptions: list[str] = []
        self.trace: list[tuple[float, AppState, AutopilotMode]] = [(0.0, self.app, self.mode)]

    # -- bookkeeping ------------------------------------------------------

    def _note(self, kind: str, detail: str) -> None:
        self.records.append(TelemetryRecord(self.t, kind, detail))

    def _trace_point(self) -> None:
        if self.trace and self.trace[-1][0] == self.t:
            self.trace[-1] = (self.t, self.app, self.mode)
        else:
            self.trace.append((self.t, self.app, self.mode))

    def _set_app(self, state: AppState) -> None:
        if state is self.app:
            return
        if state in (AppState.HUMAN_CONTROL, AppState.RETURNING):
            self.diverted = True
        self.app = state
        self._note("state", state.value)
        self._trace_point()

    def _set_mode(self, mode: AutopilotMode) -> None:
        if mode is self.mode:
            return
        # an A -> B -> A return inside the window counts as one oscillation
        if len(self._mode_history) >= 2:
            t_prev, m_prev = self._mode_history[-2]
            if m_prev is mode and self.t - t_prev <= OSC_WINDOW_MS:
                self.oscillation_count += 1
        self._mode_history.append((self.t, mode))
        self.mode = mode
        self._note("mode", mode.value)
        self._trace_point()

    def _failsafe(self, kind: str, detail: str) -> None:
        self.failsafe_events.append(FailsafeEvent(self.t, kind, detail))
        self._note("failsafe", f"{kind}:{detail}")

    def _finish(self, reason: str) -> None:
        self.finished = True
        self._set_app(AppState.DONE)
        self._note("note", f"flight ended: {reason}")

    # -- deviation / sensors ----------------------------------------------

    def _sample_deviation(self, dt_s: float) -> None:
        cap = WIND_DRIFT_CAP_M[self.wind]
        if self.wind_dev < cap:
            self.wind_dev = min(cap, self.wind_dev + WIND_DRIFT_RATE_MPS[self.wind] * dt_s)
        dev = self.wind_dev
        if self.hold_point is not None and self.app is AppState.HUMAN_CONTROL:
            # climb and descent are commanded by the sticks; only horizontal
            # displacement from the takeover point is drift
            dx = self.pos[0] - self.hold_point[0]
            dy = self.pos[1] - self.hold_point[1]
            dev = max(dev, math.hypot(dx, dy))
        jit = GPS_JITTER_M[self.gps_noise]
        if jit:
            dev += jit * self.rng.random()
        if dev > self.path_deviation_max:
            self.path_deviation_max = dev

    # -- geofence / failsafes ----------------------------------------------

    def _airborne(self) -> bool:
        return self.armed and self.pos[2] > 0.05

    def _check_geofence(self) -> None:
        if self.fence_breached or self.geofence == "none" or self.fence is None:
            return
        if not self._airborne():
            return
        if _point_in_polygon(self.pos[0], self.pos[1], self.fence):
            return
        self.fence_breached = True
        action = self.geofence
        self._failsafe("GEOFENCE", action)
        if action == "WARN":
            self.warn_active = True
        elif action == "RETURN":
            self.fence_failsafe_active = True
            self.diverted = True
            self._set_mode(AutopilotMode.RTL)
            self._set_app(AppState.RETURNING)
        elif action == "LAND":
            self.fence_failsafe_active = True
            self.diverted = True
            self.land_target = (self.pos[0], self.pos[1])
            self._set_mode(AutopilotMode.LAND)
            self._set_app(AppState.LANDING)

    def _check_signal(self) -> None:
        if self.signal_lost_since is None:
            return
        lost_for = self.t - self.signal_lost_since
        if not self.app_ls_fired and lost_for >= self.cfg.app_signal_loss_s * 1000.0:
            self.app_ls_fired = True
            self._failsafe("SIGNAL_APP", "return")
            if self.app not in (AppState.DONE, AppState.HUMAN_CONTROL):
                self.diverted = True
                self._set_mode(AutopilotMode.RTL)
                self._set_app(AppState.RETURNING)
        if not self.ap_ls_fired and lost_for >= self.cfg.autopilot_signal_loss_s * 1000.0:
            self.ap_ls_fired = True
            self._failsafe("SIGNAL_AUTOPILOT", "rtl")
            if self.mode is not AutopilotMode.RTL:
                self._set_mode(AutopilotMode.RTL)

    def _check_degraded(self) -> None:
        if (
            not self.gps_degraded_noted
            and self.gps_noise != "none"
            and _INTENSITY_RANK[self.gps_noise] >= _INTENSITY_RANK[self.cfg.gps_degrade_level]
        ):
            self.gps_degraded_noted = True
            self._failsafe("DEGRADED_GPS", self.gps_noise)
        if (
            not self.compass_degraded_noted
            and self.compass != "none"
            and _INTENSITY_RANK[self.compass] >= _INTENSITY_RANK[self.cfg.compass_degrade_level]
        ):
            self.compass_degraded_noted = True
            self._failsafe("DEGRADED_COMPASS", self.compass)

    # -- motion -------------------------------------------------------------

    def _move_toward(
        self, target: tuple[float, float, float], speed: float, dt_s: float
    ) -> bool:
        """Advance position toward target; True when reached."""
        d = _dist3(self.pos, target)
        stride = speed * dt_s
        if d <= stride or d == 0.0:
            self.pos = target
            return True
        f = stride / d
        self.pos = (
            self.pos[0] + (target[0] - self.pos[0]) * f,
            self.pos[1] + (target[1] - self.pos[1]) * f,
            self.pos[2] + (target[2] - self.pos[2]) * f,
        )
        return False

    def _integrate(self, dt_ms: float) -> None:
        if dt_ms <= 0.0:
            return
        dt_s = dt_ms / 1000.0
        app = self.app
        if app is AppState.TAKEOFF:
            x, y, z = self.pos
            self.pos = (x, y, min(TAKEOFF_ALT_M, z + CLIMB_RATE_MPS * dt_s))
        elif app is AppState.FLYING_TO_WAYPOINT:
            target = self.resume_target or self.waypoints[self.legs_done]
            self._move_toward(target, self.cruise, dt_s)
        elif app is AppState.RETURNING:
            home = (0.0, 0.0, self.pos[2])
            self._move_toward(home, self.cruise, dt_s)
        elif app is AppState.LANDING:
            x, y, z = self.pos
            if self.land_target is not None:
                x, y = self.land_target
            self.pos = (x, y, max(0.0, z - DESCENT_RATE_MPS * dt_s))
        elif app is AppState.HUMAN_CONTROL:
            x, y, z = self.pos
            if z > 0.0:
                if self.manual_landing:
                    z = max(0.0, z - DESCENT_RATE_MPS * dt_s)
                elif self.throttle == "low":
                    z = max(0.0, z - MANUAL_SINK_MPS * dt_s)
                elif self.throttle == "high":
                    z = z + MANUAL_CLIMB_MPS * dt_s
                self.pos = (x, y, z)

    # -- phase transitions driven by position/time ---------------------------

    def _phase_step(self) -> None:
        app = self.app
        if app is AppState.PRE_ARM:
            if self.t >= PREARM_MS:
                self.armed = True
                self._set_app(AppState.TAKEOFF)
                self.mode_switch_at = self.t + self.switch_latency
                self._note(
                    "note", f"armed; offboard switch scheduled +{self.switch_latency:.1f}ms"
                )
        elif app is AppState.TAKEOFF:
            if self.pos[2] >= TAKEOFF_ALT_M and self.mode is AutopilotMode.OFFBOARD:
                if self.legs_done < len(self.waypoints):
                    self._set_app(AppState.FLYING_TO_WAYPOINT)
                    self._maybe_start_f6()
                else:
                    self._begin_hover()
        elif app is AppState.FLYING_TO_WAYPOINT:
            target = self.resume_target or self.waypoints[self.legs_done]
            if self.pos == target:
                if self.resume_target is not None:
                    self.resume_target = None
                    self._note("note", "stale setpoint reached; resuming plan")
                else:
                    self.legs_done += 1
                    self._note("note", f"waypoint {self.legs_done} reached")
                if self.legs_done >= len(self.waypoints):
                    self._begin_hover()
        elif app is AppState.HOVERING:
            if self.phase_deadline is not None and self.t >= self.phase_deadline:
                self.phase_deadline = None
                self.land_target = (self.pos[0], self.pos[1])
                self._set_mode(AutopilotMode.LAND)
                self._set_app(AppState.LANDING)
        elif app is AppState.RETURNING:
            if self.pos[0] == 0.0 and self.pos[1] == 0.0:
                self.land_target = (0.0, 0.0)
                # an RTL includes its landing phase; the mode only changes
                # when something other than RTL brought us home
                if self.mode is not AutopilotMode.RTL:
                    self._set_mode(AutopilotMode.LAND)
                self._set_app(AppState.LANDING)
        elif app is AppState.LANDING:
            if self.pos[2] <= 0.0:
                self._touchdown()
        elif app is AppState.HUMAN_CONTROL:
            if self.manual_airborne and self.pos[2] <= 0.0:
                self._touchdown()
            elif self.hold_until is not None and self.t >= self.hold_until:
                self.hold_until = None
                self._finish("takeover hold window elapsed")
        elif app is AppState.DISARMING:
            if self.disarm_deadline is not None and self.t >= self.disarm_deadline:
                self.exceptions.append("disarm-timeout")
                self._note("exception", "disarm-timeout")
                self._finish("disarm hang")
            elif self.phase_deadline is not None and self.t >= self.phase_deadline:
                self.armed = False
                self.mission_completed = (
                    self.legs_done >= len(self.waypoints) and not self.diverted
                )
                self._finish("disarmed")

    def _begin_hover(self) -> None:
        self.hold_point = self.pos
        self.phase_deadline = self.t + HOVER_PAUSE_MS
        self._set_app(AppState.HOVERING)

    def _maybe_start_f6(self) -> None:
        if self.f6_pending:
            self.f6_pending = False
            self.thrash_flips_left = 6
            self.thrash_next_at = self.t + THRASH_PERIOD_MS
            self.thrash_pair = (AutopilotMode.LAND, AutopilotMode.OFFBOARD)
            self._note("note", "gps noise destabilizing mode selection")

    def _touchdown(self) -> None:
        if self.deferred_action is not None:
            # the deferred request finally lands once the vehicle is down
            realized = REALIZED_MODE[self.deferred_action]
            self._note("injection", f"deferred {self.deferred_action.value} applied")
            self.deferred_action = None
            self._set_mode(realized)
        self._set_app(AppState.DISARMING)
        if self.cfg.has(FaultId.F8) and self.mode is AutopilotMode.STABILIZED:
            self.disarm_deadline = self.t + DISARM_TIMEOUT_MS
            self.phase_deadline = None
            self._note("note", "disarm requested; no acknowledgment")
        else:
            self.phase_deadline = self.t + DISARM_MS
            self.disarm_deadline = None

    # -- thrash scheduling (F3/F6) -------------------------------------------

    def _fire_thrash(self) -> None:
        a, b = self.thrash_pair
        self._set_mode(a if self.mode is b else b)
        self.thrash_flips_left -= 1
        if self.thrash_flips_left > 0:
            self.thrash_next_at = self.t + THRASH_PERIOD_MS
        else:
            self._set_mode(AutopilotMode.OFFBOARD)

    # -- timers ---------------------------------------------------------------

    def _next_timer(self) -> float:
        t = math.inf
        if self.mode_switch_at is not None:
            t = min(t, self.mode_switch_at)
        if self.thrash_flips_left > 0:
            t = min(t, self.thrash_next_at)
        return t

    def _fire_timers(self) -> None:
        if self.mode_switch_at is not None and self.t >= self.mode_switch_at:
            self.mode_switch_at = None
            if self.app is AppState.TAKEOFF and self.mode is AutopilotMode.STABILIZED:
                self._set_mode(AutopilotMode.OFFBOARD)
        if self.thrash_flips_left > 0 and self.t >= self.thrash_next_at:
            self._fire_thrash()

    # -- public driving surface -------------------------------------------

    def advance_to(self, t_target: float) -> None:
        """Integrate forward to an absolute simulated time."""
        self.advance_until(t_target, stop_state=None)

    def advance_until(self, t_target: float, stop_state: Optional[AppState]) -> None:
        """Integrate forward, stopping early when stop_state is entered.

        The stop check runs after each internal hop, so the clock halts at
        the exact transition instant and the caller can schedule injection
        delays from it.
        """
        while not self.finished and self.t + 1e-9 < t_target:
            next_grid = (math.floor(self.t / TICK_MS) + 1) * TICK_MS
            hop = min(t_target, next_grid, self._next_timer())
            dt = hop - self.t
            self._integrate(dt)
            self.t = hop
            self._fire_timers()
            self._sample_deviation(dt / 1000.0)
            self._check_geofence()
            self._check_signal()
            self._check_degraded()
            self._phase_step()
            if self.t >= SIM_CEILING_MS and not self.finished:
                self.exceptions.append("sim-timeout")
                self._note("exception", "sim-timeout")
                self._finish("simulation ceiling")
            if stop_state is not None and self.app is stop_state:
                return

    def apply_env(self, env_field: str, value: str) -> None:
        if env_field == "signal":
            if value == "lost":
                if self.signal_lost_since is None:
                    self.signal_lost_since = self.t
                    self._note("note", "signal lost")
            elif value == "restored":
                self.signal_lost_since = None
                self.app_ls_fired = False
                self.ap_ls_fired = False
                self._note("note", "signal restored")
            else:
                raise IllegalEvent(f"signal change must be lost|restored, got {value!r}")
        elif env_field == "gps_noise":
            if value not in INTENSITY_LEVELS:
                raise IllegalEvent(f"bad gps_noise level {value!r}")
            self.gps_noise = value
        elif env_field == "compass_interference":
            if value not in INTENSITY_LEVELS:
                raise IllegalEvent(f"bad compass level {value!r}")
            self.compass = value
        elif env_field == "wind":
            if value not in INTENSITY_LEVELS:
                raise IllegalEvent(f"bad wind level {value!r}")
            self.wind = value
        else:
            raise IllegalEvent(f"unknown environment field {env_field!r}")

    def apply_rc(self, action: RcAction) -> bool:
        """Inject one control action now; returns acknowledgment."""
        if self.app in (AppState.PRE_ARM, AppState.DONE):
            raise IllegalEvent(f"RC input is undefined while {self.app.value}")
        request = InjectionRequest(
            action=action,
            app_state=self.app,
            mode=self.mode,
            warn_active=self.warn_active,
            fence_failsafe_active=self.fence_failsafe_active,
        )
        decision = Decision.PASS_THROUGH
        for fid in self.cfg.faults():
            d = inject_fault_behavior(fid, request)
            if d is not Decision.PASS_THROUGH:
                decision = d
                break

        if decision is Decision.IGNORE:
            self._note("injection", f"{action.value} ignored")
            return False
        if decision is Decision.DEFER:
            self.deferred_action = action
            self._note("injection", f"{action.value} deferred until landed")
            return False
        if decision is Decision.CORRUPT:
            # reactivation accepted, but the controller streams the oldest
            # stored setpoint instead of the vehicle's current position
            stale = (0.0, 0.0, TAKEOFF_ALT_M)
            self._note("injection", f"{action.value} honored with stale setpoint")
            self._apply_offboard_resume(initial_setpoint=stale)
            return True

        self._note("injection", f"{action.value} honored")
        self._apply_honored(action)
        return True

    def _apply_honored(self, action: RcAction) -> None:
        realized = REALIZED_MODE[action]
        if realized in _TAKEOVER_MODES:
            self.mode_switch_at = None
            self.hold_point = self.pos
            self.hold_until = self.t + HOLD_WINDOW_MS
            self.manual_airborne = self.pos[2] > 0.0
            self.manual_landing = self.app is AppState.LANDING
            self.phase_deadline = None
            self.disarm_deadline = None
            self._set_mode(realized)
            self._set_app(AppState.HUMAN_CONTROL)
        elif action is RcAction.OFFBOARD:
            self._apply_offboard_resume(initial_setpoint=self.pos)
        elif action is RcAction.AUTO_LAND:
            self._set_mode(AutopilotMode.LAND)
            if self.pos[2] <= 0.0:
                self._note("note", "land request on the ground; no-op")
                return
            self.mode_switch_at = None
            self.land_target = (self.pos[0], self.pos[1])
            self.phase_deadline = None
            self._set_app(AppState.LANDING)
        elif action is RcAction.AUTO_RTL:
            self._set_mode(AutopilotMode.RTL)
            if self.pos[2] <= 0.0:
                self._note("note", "return request on the ground; no-op")
                return
            self.mode_switch_at = None
            self._set_app(AppState.RETURNING)

    def _apply_offboard_resume(self, initial_setpoint: tuple[float, float, float]) -> None:
        jump = _dist3(self.pos, initial_setpoint)
        if jump > JERK_JUMP_M:
            self.jerk_flag = True
            self._note("note", f"setpoint discontinuity {jump:.1f} m")
            self.resume_target = initial_setpoint
            self.thrash_flips_left = 4
            self.thrash_next_at = self.t + THRASH_PERIOD_MS
            self.thrash_pair = (AutopilotMode.LAND, AutopilotMode.OFFBOARD)
        self.mode_switch_at = None
        self._set_mode(AutopilotMode.OFFBOARD)
        if self.app is AppState.TAKEOFF:
            return
        if self.legs_done < len(self.waypoints):
            self._set_app(AppState.FLYING_TO_WAYPOINT)
        else:
            self._begin_hover()

    # -- snapshot bridge -----------------------------------------------------

    def snapshot(self) -> SutSnapshot:
        return SutSnapshot(
            t_ms=self.t,
            app_state=self.app,
            mode=self.mode,
            position=self.pos,
            armed=self.armed,
            waypoints=self.waypoints,
            cruise_speed=self.cruise,
            geofence_polygon=self.fence,
            throttle=self.throttle,
            geofence=self.geofence,
            wind=self.wind,
            gps_noise=self.gps_noise,
            compass_interference=self.compass,
            signal_lost_since=self.signal_lost_since,
            legs_done=self.legs_done,
            mode_switch_at=self.mode_switch_at,
            warn_active=self.warn_active,
            fence_failsafe_active=self.fence_failsafe_active,
            deferred_action=self.deferred_action,
        )

    @classmethod
    def from_snapshot(cls, snap: SutSnapshot, config: SutConfig, rng: Random) -> "Vehicle":
        """Rebuild a drivable vehicle around a snapshot.

        Phase timers that the snapshot does not carry (hover pause, disarm
        countdown, takeover hold) restart from the snapshot instant.
        """
        v = cls(
            waypoints=snap.waypoints,
            cruise_speed=snap.cruise_speed,
            geofence_polygon=snap.geofence_polygon,
            config=config,
            env={
                "throttle": snap.throttle,
                "geofence": snap.geofence,
                "wind": snap.wind,
                "gps_noise": snap.gps_noise,
                "compass_interference": snap.compass_interference,
            },
            rng=rng,
        )
        v.t = snap.t_ms
        v.app = snap.app_state
        v.mode = snap.mode
        v.pos = snap.position
        v.armed = snap.armed
        v.signal_lost_since = snap.signal_lost_since
        v.legs_done = snap.legs_done
        v.mode_switch_at = snap.mode_switch_at
        v.warn_active = snap.warn_active
        v.fence_failsafe_active = snap.fence_failsafe_active
        v.deferred_action = snap.deferred_action
        v.fence_breached = snap.warn_active or snap.fence_failsafe_active
        v.diverted = snap.app_state in (AppState.HUMAN_CONTROL, AppState.RETURNING)
        v.records = []
        v.trace = [(snap.t_ms, snap.app_state, snap.mode)]
        v._mode_history = [(snap.t_ms, snap.mode)]
        if snap.app_state is AppState.HOVERING:
            v.hold_point = snap.position
            v.phase_deadline = snap.t_ms + HOVER_PAUSE_MS
        elif snap.app_state is AppState.DISARMING:
            v.phase_deadline = snap.t_ms + DISARM_MS
        elif snap.app_state is AppState.HUMAN_CONTROL:
            v.hold_point = snap.position
            v.hold_until = snap.t_ms + HOLD_WINDOW_MS
            v.manual_airborne = snap.position[2] > 0.0
        return v


# ---------------------------------------------------------------------------
# public transition surface
# ---------------------------------------------------------------------------


def step(
    snapshot: SutSnapshot, event: Event, config: SutConfig, rng: Random
) -> tuple[SutSnapshot, list[TelemetryRecord]]:
    """Apply one event to a snapshot; returns (next snapshot, records).

    Total over the event alphabet; the input snapshot is never mutated.
    RC input while PRE_ARM or DONE raises IllegalEvent — tests never target
    those states, so reaching that raise means the harness mis-scheduled.
    """
    vehicle = Vehicle.from_snapshot(snapshot, config, rng)
    if isinstance(event, Tick):
        vehicle.advance_to(snapshot.t_ms + event.dt_ms)
        if vehicle.t < snapshot.t_ms + event.dt_ms:
            vehicle.t = snapshot.t_ms + event.dt_ms  # finished early; clock still moves
    elif isinstance(event, RcInput):
        vehicle.apply_rc(event.action)
    elif isinstance(event, EnvChange):
        vehicle.apply_env(event.env_field, event.value)
    else:
        raise IllegalEvent(f"unknown event {event!r}")
    return vehicle.snapshot(), list(vehicle.records)


def check_failsafes(snapshot: SutSnapshot, config: SutConfig) -> list[FailsafeEvent]:
    """Report which loss-of-signal contingencies are due at this instant.

    Pure: evaluates the snapshot's signal timer against both thresholds
    without advancing anything. Geofence and sensor degradation are
    position/environment conditioned and fire inside the tick loop.
    """
    events: list[FailsafeEvent] = []
    if snapshot.signal_lost_since is not None:
        lost_for = snapshot.t_ms - snapshot.signal_lost_since
        if lost_for >= config.app_signal_loss_s * 1000.0:
            events.append(FailsafeEvent(snapshot.t_ms, "SIGNAL_APP", "return"))
        if lost_for >= config.autopilot_signal_loss_s * 1000.0:
            events.append(FailsafeEvent(snapshot.t_ms, "SIGNAL_AUTOPILOT", "rtl"))
    return events
