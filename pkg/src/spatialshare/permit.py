"""Permission state machine gating spatial sharing on zone verdicts.

Asymmetric hysteresis: any single adverse observation (restricted or buffer
zone, unreliable fix, stale stream) suspends sharing in the same step, while
recovery demands a run of consecutive clean fixes. When several suspension
causes hold at once the most severe one labels the state
(Restricted > Buffer > NoFix).
"""

from dataclasses import dataclass, replace
from enum import Enum

from .errors import OrderingError, ValidationError
from .locate import FixQuality, PositionFix
from .twin import ZoneClass, ZoneVerdict

DEFAULT_UPGRADE_K = 5
DEFAULT_DROPOUT_TIMEOUT_MS = 2000


class PermitMode(str, Enum):
    SHARING_ALLOWED = "SharingAllowed"
    SUSPENDED_BUFFER = "SuspendedBuffer"
    SUSPENDED_RESTRICTED = "SuspendedRestricted"
    SUSPENDED_NO_FIX = "SuspendedNoFix"


class EventKind(str, Enum):
    GRANTED = "Granted"
    SUSPENDED = "Suspended"
    RESUMED = "Resumed"
    APPROACH_WARNING = "ApproachWarning"


class EventReason(str, Enum):
    ENTERED_RESTRICTED = "entered_restricted"
    ENTERED_BUFFER = "entered_buffer"
    FIX_UNRELIABLE = "fix_unreliable"
    DROPOUT_TIMEOUT = "dropout_timeout"
    CLEAN_FIXES = "clean_fixes"
    NEAR_RESTRICTED = "near_restricted"


_SEVERITY = {
    PermitMode.SUSPENDED_RESTRICTED: 3,
    PermitMode.SUSPENDED_BUFFER: 2,
    PermitMode.SUSPENDED_NO_FIX: 1,
}

_SUSPEND_REASON = {
    PermitMode.SUSPENDED_RESTRICTED: EventReason.ENTERED_RESTRICTED,
    PermitMode.SUSPENDED_BUFFER: EventReason.ENTERED_BUFFER,
    PermitMode.SUSPENDED_NO_FIX: EventReason.FIX_UNRELIABLE,
}


@dataclass(frozen=True)
class TransitionConfig:
    """Recovery and staleness constants; no constants exist upstream, so the
    defaults are chosen for 10 Hz fixes (0.5 s of clean fixes to re-allow)."""

    upgrade_k: int = DEFAULT_UPGRADE_K
    dropout_timeout: int = DEFAULT_DROPOUT_TIMEOUT_MS
    warn_distance: float = 2.0

    def __post_init__(self):
        if self.upgrade_k < 1:
            raise ValidationError("upgrade_k", f"must be >= 1, got {self.upgrade_k}")
        if self.dropout_timeout <= 0:
            raise ValidationError(
                "dropout_timeout", f"must be > 0, got {self.dropout_timeout}"
            )
        if self.warn_distance < 0:
            raise ValidationError("warn_distance", f"must be >= 0, got {self.warn_distance}")


@dataclass(frozen=True)
class PermissionEvent:
    kind: EventKind
    reason: EventReason
    timestamp: int


@dataclass(frozen=True)
class PermissionState:
    """Snapshot of the gate. ``consecutive_permitted`` counts clean fixes
    accumulated toward recovery and is zero outside recovery."""

    mode: PermitMode
    consecutive_permitted: int
    since: int
    last_fix_at: int | None = None
    has_shared: bool = False
    in_warn_band: bool = False

    @classmethod
    def initial(cls, timestamp: int) -> "PermissionState":
        # Fail-closed start: nothing has been observed yet.
        return cls(PermitMode.SUSPENDED_NO_FIX, 0, since=timestamp)


def _suspension_target(fix: PositionFix, verdict: ZoneVerdict | None) -> PermitMode | None:
    """Most severe suspension cause implied by one observation, or None."""
    causes = []
    if fix.quality is not FixQuality.GOOD:
        causes.append(PermitMode.SUSPENDED_NO_FIX)
    if verdict is not None:
        if verdict.zone_class is ZoneClass.RESTRICTED:
            causes.append(PermitMode.SUSPENDED_RESTRICTED)
        elif verdict.zone_class is ZoneClass.BUFFER:
            causes.append(PermitMode.SUSPENDED_BUFFER)
    if not causes:
        return None
    return max(causes, key=_SEVERITY.__getitem__)


def update_permission(
    state: PermissionState,
    fix: PositionFix,
    verdict: ZoneVerdict | None,
    cfg: TransitionConfig,
) -> tuple[PermissionState, list[PermissionEvent]]:
    """Apply one fix/verdict observation.

    Downgrades take effect on this single observation; re-allowing requires
    ``cfg.upgrade_k`` consecutive Good+Permitted fixes. One approach warning
    fires per entry into the warn band while sharing stays allowed.
    """
    if state.last_fix_at is not None and fix.timestamp <= state.last_fix_at:
        raise OrderingError(
            f"fix at t={fix.timestamp} not after previous fix at t={state.last_fix_at}"
        )
    if fix.quality is FixQuality.NONE and verdict is not None:
        raise ValidationError("verdict", "a quality-None fix carries no position to classify")

    events: list[PermissionEvent] = []
    target = _suspension_target(fix, verdict)

    if target is not None:
        new_state = replace(
            state,
            mode=target,
            consecutive_permitted=0,
            since=fix.timestamp if target is not state.mode else state.since,
            last_fix_at=fix.timestamp,
            in_warn_band=False,
        )
        if target is not state.mode:
            events.append(
                PermissionEvent(EventKind.SUSPENDED, _SUSPEND_REASON[target], fix.timestamp)
            )
        return new_state, events

    # Good quality and Permitted verdict from here on.
    if state.mode is PermitMode.SHARING_ALLOWED:
        new_state = replace(state, last_fix_at=fix.timestamp)
    else:
        streak = state.consecutive_permitted + 1
        if streak >= cfg.upgrade_k:
            kind = EventKind.RESUMED if state.has_shared else EventKind.GRANTED
            events.append(PermissionEvent(kind, EventReason.CLEAN_FIXES, fix.timestamp))
            new_state = replace(
                state,
                mode=PermitMode.SHARING_ALLOWED,
                consecutive_permitted=0,
                since=fix.timestamp,
                last_fix_at=fix.timestamp,
                has_shared=True,
                in_warn_band=False,
            )
        else:
            return (
                replace(state, consecutive_permitted=streak, last_fix_at=fix.timestamp),
                events,
            )

    assert verdict is not None
    if new_state.mode is PermitMode.SHARING_ALLOWED:
        if verdict.nearest_restricted_distance <= cfg.warn_distance:
            if not new_state.in_warn_band:
                events.append(
                    PermissionEvent(
                        EventKind.APPROACH_WARNING,
                        EventReason.NEAR_RESTRICTED,
                        fix.timestamp,
                    )
                )
                new_state = replace(new_state, in_warn_band=True)
        else:
            new_state = replace(new_state, in_warn_band=False)
    return new_state, events


def on_clock(
    state: PermissionState, now: int, cfg: TransitionConfig
) -> tuple[PermissionState, list[PermissionEvent]]:
    """Suspend on fix-stream staleness. Existing suspensions are never
    relabeled downward: a restriction outranks a dropout."""
    if now < state.since:
        raise OrderingError(f"clock at t={now} behind state since t={state.since}")
    if state.mode is not PermitMode.SHARING_ALLOWED:
        return state, []
    reference = state.last_fix_at if state.last_fix_at is not None else state.since
    if now - reference > cfg.dropout_timeout:
        new_state = replace(
            state,
            mode=PermitMode.SUSPENDED_NO_FIX,
            consecutive_permitted=0,
            since=now,
            in_warn_band=False,
        )
        return new_state, [
            PermissionEvent(EventKind.SUSPENDED, EventReason.DROPOUT_TIMEOUT, now)
        ]
    return state, []
