"""Pure membership model: ordered member set plus coordinator election.

The registry is a value; every operation returns a new registry along with
an outcome record. Election needs no messages and no randomness: the first
joiner is coordinator, and when the coordinator departs the longest-
connected survivor (minimum join sequence number) succeeds.
"""

from __future__ import annotations

from dataclasses import dataclass

from .protocol import valid_member_id


class DuplicateIdError(Exception):
    """Admission refused: a member with this id is already connected."""

    def __init__(self, member_id: str):
        self.member_id = member_id
        super().__init__(f"duplicate member id: {member_id}")


class UnknownMemberError(Exception):
    def __init__(self, member_id: str):
        self.member_id = member_id
        super().__init__(f"unknown member: {member_id}")


class UnknownTargetError(Exception):
    """Private-message target is not a connected member."""

    def __init__(self, member_id: str):
        self.member_id = member_id
        super().__init__(f"unknown target: {member_id}")


@dataclass(frozen=True)
class Member:
    id: str
    ip: str
    port: int
    join_seq: int
    joined_at: str


@dataclass(frozen=True)
class Registry:
    """Members in ascending join_seq order; coordinator is the oldest one."""

    members: tuple[Member, ...] = ()
    coordinator: str | None = None
    next_seq: int = 0

    def get(self, member_id: str) -> Member | None:
        for member in self.members:
            if member.id == member_id:
                return member
        return None

    def __contains__(self, member_id: str) -> bool:
        return self.get(member_id) is not None

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Admission:
    registry: Registry
    member: Member
    became_coordinator: bool


@dataclass(frozen=True)
class Removal:
    registry: Registry
    removed: Member
    reason: str
    was_coordinator: bool
    new_coordinator: str | None


def add_member(registry: Registry, member_id: str, ip: str, port: int, now: str) -> Admission:
    """Admit a new member; the first one in becomes coordinator."""
    if not valid_member_id(member_id):
        raise ValueError(f"invalid member id: {member_id!r}")
    if member_id in registry:
        raise DuplicateIdError(member_id)
    member = Member(id=member_id, ip=ip, port=port, join_seq=registry.next_seq, joined_at=now)
    became_coordinator = not registry.members
    return Admission(
        registry=Registry(
            members=registry.members + (member,),
            coordinator=member_id if became_coordinator else registry.coordinator,
            next_seq=registry.next_seq + 1,
        ),
        member=member,
        became_coordinator=became_coordinator,
    )


def remove_member(registry: Registry, member_id: str, reason: str) -> Removal:
    """Remove a member; a departing coordinator hands over to the oldest survivor."""
    removed = registry.get(member_id)
    if removed is None:
        raise UnknownMemberError(member_id)
    survivors = tuple(m for m in registry.members if m.id != member_id)
    was_coordinator = registry.coordinator == member_id
    if was_coordinator:
        new_coordinator = survivors[0].id if survivors else None
    else:
        new_coordinator = None
    return Removal(
        registry=Registry(
            members=survivors,
            coordinator=new_coordinator if was_coordinator else registry.coordinator,
            next_seq=registry.next_seq,
        ),
        removed=removed,
        reason=reason,
        was_coordinator=was_coordinator,
        new_coordinator=new_coordinator,
    )


def member_details(registry: Registry) -> tuple[tuple[str, str, int], ...]:
    """Roster projection (id, ip, port) in join order."""
    return tuple((m.id, m.ip, m.port) for m in registry.members)


def resolve_target(registry: Registry, member_id: str) -> Member:
    member = registry.get(member_id)
    if member is None:
        raise UnknownTargetError(member_id)
    return member
