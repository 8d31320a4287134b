"""Two-layer sharing policy: local allowlist, enterprise ceiling, tailoring.

Decisions form a two-point lattice (Deny < Allow) composed by meet, so the
user-local allowlist can only narrow what the enterprise ceiling permits,
never widen it. The server side re-verifies everything the local layer let
through and then tailors the frame per recipient role. Unknown or unlabeled
content is denied under every configuration.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import (
    MetadataMismatchError,
    StalePolicyError,
    UnknownObjectError,
    ValidationError,
)
from .scene import (
    MASKED,
    Classification,
    ObjectAnnotation,
    SceneObject,
    ShareFrame,
    frame_delta,
    validate_frame,
)
from .twin import ZoneClass


class Decision(str, Enum):
    DENY = "Deny"
    ALLOW = "Allow"


def meet(a: Decision, b: Decision) -> Decision:
    """Lattice meet: Allow only when both sides allow."""
    return Decision.ALLOW if a is Decision.ALLOW and b is Decision.ALLOW else Decision.DENY


@dataclass(frozen=True)
class LocalPolicy:
    """User allowlist. The default is Deny and is not configurable."""

    allowed_labels: frozenset[str] = frozenset()
    allowed_object_ids: frozenset[int] = frozenset()


@dataclass(frozen=True)
class CeilingPolicy:
    """Organizational upper bound: tightening any field never enlarges the
    effective allow set."""

    max_allowed_labels: frozenset[str] = frozenset()
    max_classification: Classification = Classification.PUBLIC
    zone_overrides: dict[ZoneClass, Decision] = field(default_factory=dict)


@dataclass(frozen=True)
class RecipientRole:
    recipient_id: str
    role: str
    clearance: Classification
    label_grants: frozenset[str] = frozenset()


class OverrideStatus(str, Enum):
    PENDING = "Pending"
    APPROVED = "Approved"
    DENIED = "Denied"


@dataclass(frozen=True)
class OverrideRequest:
    request_id: str
    object_id: int
    requested_by: str
    zone_class: ZoneClass
    status: OverrideStatus = OverrideStatus.PENDING
    decided_at: int | None = None


@dataclass(frozen=True)
class OverrideState:
    """Session-scoped grants produced by approved overrides (object ids only)."""

    approved_object_ids: frozenset[int] = frozenset()


@dataclass(frozen=True)
class CompiledPolicy:
    """Effective predicate over (object id, label, classification).

    ``digest`` is a stable hash of the full rule set (including the zone
    class it was compiled for), used for cache staleness and audit
    correlation.
    """

    local_labels: frozenset[str]
    local_object_ids: frozenset[int]
    override_object_ids: frozenset[int]
    ceiling_labels: frozenset[str]
    max_classification: Classification
    zone_class: ZoneClass
    forced: Decision | None
    digest: str

    def decide(
        self, object_id: int, label: str | None, classification: Classification | None
    ) -> Decision:
        if not label or classification is None:
            return Decision.DENY
        if self.forced is Decision.DENY:
            return Decision.DENY
        locally_allowed = (
            label in self.local_labels
            or object_id in self.local_object_ids
            or object_id in self.override_object_ids
        )
        within_ceiling = (
            label in self.ceiling_labels
            and classification.rank <= self.max_classification.rank
        )
        return Decision.ALLOW if locally_allowed and within_ceiling else Decision.DENY


def effective_policy(
    local: LocalPolicy,
    ceiling: CeilingPolicy,
    zone_class: ZoneClass,
    overrides: OverrideState | None = None,
) -> CompiledPolicy:
    """Compile the meet of local allowlist, ceiling, and zone override."""
    override_ids = overrides.approved_object_ids if overrides else frozenset()
    forced = ceiling.zone_overrides.get(zone_class)
    rules = {
        "local_labels": sorted(local.allowed_labels),
        "local_object_ids": sorted(local.allowed_object_ids),
        "override_object_ids": sorted(override_ids),
        "ceiling_labels": sorted(ceiling.max_allowed_labels),
        "max_classification": ceiling.max_classification.value,
        "zone_overrides": {
            cls.value: dec.value for cls, dec in sorted(ceiling.zone_overrides.items())
        },
        "zone_class": zone_class.value,
    }
    digest = hashlib.sha256(
        json.dumps(rules, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    return CompiledPolicy(
        local_labels=frozenset(local.allowed_labels),
        local_object_ids=frozenset(local.allowed_object_ids),
        override_object_ids=frozenset(override_ids),
        ceiling_labels=frozenset(ceiling.max_allowed_labels),
        max_classification=ceiling.max_classification,
        zone_class=zone_class,
        forced=forced,
        digest=digest,
    )


@dataclass
class FilterStats:
    """Instrumentation for the cached filter path."""

    full_evaluations: int = 0
    cache_hits: int = 0


@dataclass(frozen=True)
class FilterMetadata:
    """Travels with a filtered frame: policy digest plus the ids masked out.

    Labels and pixel-area mappings for the surviving objects ride in the
    frame's own object map.
    """

    policy_digest: str
    masked_ids: tuple[int, ...]


def mask_objects(frame: ShareFrame, object_ids: set[int]) -> ShareFrame:
    """Mask the given objects: cells become the MASKED sentinel and their
    map entries disappear."""
    if not object_ids:
        return frame
    grid = frame.grid.copy()
    grid[np.isin(grid, list(object_ids))] = MASKED
    kept = tuple(ann for ann in frame.object_map if ann.object_id not in object_ids)
    return ShareFrame(timestamp=frame.timestamp, grid=grid, object_map=kept)


def apply_local_filter(
    frame: ShareFrame, policy: CompiledPolicy, stats: FilterStats | None = None
) -> tuple[ShareFrame, FilterMetadata]:
    """Mask every object the policy denies; allowed objects pass untouched."""
    if stats is not None:
        stats.full_evaluations += 1
    denied = {
        ann.object_id
        for ann in frame.object_map
        if policy.decide(ann.object_id, ann.label, ann.classification) is Decision.DENY
    }
    filtered = mask_objects(frame, denied)
    metadata = FilterMetadata(
        policy_digest=policy.digest, masked_ids=tuple(sorted(denied))
    )
    return filtered, metadata


def apply_local_filter_cached(
    frame: ShareFrame,
    prev_frame: ShareFrame | None,
    prev_output: tuple[ShareFrame, FilterMetadata] | None,
    policy: CompiledPolicy,
    stats: FilterStats | None = None,
) -> tuple[ShareFrame, FilterMetadata]:
    """Skip recomputation when the frame content did not change.

    The cached output must have been produced under the same policy digest;
    offering a stale one is an error rather than a silent recompute.
    """
    if prev_frame is None or prev_output is None:
        return apply_local_filter(frame, policy, stats)
    prev_filtered, prev_meta = prev_output
    if prev_meta.policy_digest != policy.digest:
        raise StalePolicyError(
            "cached output was computed under a different policy digest"
        )
    if frame_delta(prev_frame, frame):
        if stats is not None:
            stats.cache_hits += 1
        reused = ShareFrame(
            timestamp=frame.timestamp,
            grid=prev_filtered.grid,
            object_map=prev_filtered.object_map,
        )
        return reused, prev_meta
    return apply_local_filter(frame, policy, stats)


def _ceiling_allows(
    ceiling: CeilingPolicy, zone_class: ZoneClass, ann: ObjectAnnotation
) -> bool:
    if ceiling.zone_overrides.get(zone_class) is Decision.DENY:
        return False
    return (
        ann.label in ceiling.max_allowed_labels
        and ann.classification.rank <= ceiling.max_classification.rank
    )


def _role_allows(role: RecipientRole, ann: ObjectAnnotation) -> bool:
    return (
        ann.label in role.label_grants
        and ann.classification.rank <= role.clearance.rank
    )


def global_check_and_tailor(
    frame: ShareFrame,
    metadata: FilterMetadata,
    ceiling: CeilingPolicy,
    recipients: list[RecipientRole],
    zone_class: ZoneClass,
) -> dict[str, ShareFrame]:
    """Server-side re-verification plus per-recipient tailoring.

    The grid and object map are cross-validated first; any disagreement is a
    tamper signal and rejects the whole frame. Every surviving object is
    re-checked against the ceiling (the institution-wide second safeguard),
    then each recipient loses objects outside their grants or clearance.
    """
    try:
        validate_frame(frame)
    except ValidationError as exc:
        raise MetadataMismatchError(f"frame rejected: {exc}") from exc

    over_ceiling = {
        ann.object_id
        for ann in frame.object_map
        if not _ceiling_allows(ceiling, zone_class, ann)
    }
    base = mask_objects(frame, over_ceiling)

    tailored: dict[str, ShareFrame] = {}
    for role in recipients:
        hidden = {
            ann.object_id for ann in base.object_map if not _role_allows(role, ann)
        }
        tailored[role.recipient_id] = mask_objects(base, hidden)
    return tailored


def submit_override(
    state: OverrideState,
    request: OverrideRequest,
    objects: dict[int, SceneObject],
    now: int,
) -> tuple[OverrideState, OverrideRequest]:
    """Decide an override request by the context rules.

    Auto-approved only in a Permitted zone for content classified Internal
    or below; approval extends the session allowlist for that object id
    only. Every outcome is returned for audit logging by the caller.
    """
    if request.object_id not in objects:
        raise UnknownObjectError(f"override references unknown object {request.object_id}")
    obj = objects[request.object_id]
    approved = (
        request.zone_class is ZoneClass.PERMITTED
        and obj.classification.rank <= Classification.INTERNAL.rank
    )
    decided = replace(
        request,
        status=OverrideStatus.APPROVED if approved else OverrideStatus.DENIED,
        decided_at=now,
    )
    if approved:
        state = OverrideState(state.approved_object_ids | {request.object_id})
    return state, decided


@dataclass(frozen=True)
class LintFinding:
    severity: str  # "warning" | "info"
    code: str
    message: str


def lint_policy_config(
    local: LocalPolicy,
    ceiling: CeilingPolicy,
    recipients: list[RecipientRole],
    objects: dict[int, SceneObject],
) -> list[LintFinding]:
    """Report unreachable rules and ceiling-monotonicity hazards."""
    findings: list[LintFinding] = []
    for label in sorted(local.allowed_labels - ceiling.max_allowed_labels):
        findings.append(
            LintFinding(
                "warning",
                "unreachable-local-label",
                f"local allowlist label {label!r} is outside the ceiling and never takes effect",
            )
        )
    for oid in sorted(local.allowed_object_ids):
        obj = objects.get(oid)
        if obj is None:
            findings.append(
                LintFinding(
                    "warning", "dangling-object-rule", f"local allowlist id {oid} matches no object"
                )
            )
        elif obj.classification.rank > ceiling.max_classification.rank:
            findings.append(
                LintFinding(
                    "warning",
                    "unreachable-local-object",
                    f"object {oid} ({obj.label!r}) is classified above the ceiling "
                    f"and can never be shared",
                )
            )
    for role in recipients:
        for label in sorted(role.label_grants - ceiling.max_allowed_labels):
            findings.append(
                LintFinding(
                    "warning",
                    "unreachable-grant",
                    f"recipient {role.recipient_id!r} grant {label!r} is outside the ceiling",
                )
            )
        if role.clearance.rank > ceiling.max_classification.rank:
            findings.append(
                LintFinding(
                    "info",
                    "clearance-capped",
                    f"recipient {role.recipient_id!r} clearance {role.clearance.value} "
                    f"is capped by the ceiling at {ceiling.max_classification.value}",
                )
            )
    for cls, dec in sorted(ceiling.zone_overrides.items()):
        if dec is Decision.ALLOW:
            findings.append(
                LintFinding(
                    "info",
                    "no-op-zone-override",
                    f"zone override {cls.value} -> Allow is a no-op under meet composition",
                )
            )
    for oid in sorted(objects):
        obj = objects[oid]
        if obj.label not in local.allowed_labels and oid not in local.allowed_object_ids:
            findings.append(
                LintFinding(
                    "info",
                    "never-shared",
                    f"object {oid} ({obj.label!r}) is not on the local allowlist "
                    f"and will only appear via an approved override",
                )
            )
    return findings
