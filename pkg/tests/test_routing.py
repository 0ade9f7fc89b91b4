from gcs import protocol as wire
from gcs.registry import Registry, add_member
from gcs.routing import (
    BAD_FRAME_LIMIT,
    Effects,
    Phase,
    SessionState,
    ToMember,
    TO_ALL,
    TO_SELF,
    handle_bad_frame,
    handle_frame,
    heartbeat_sweep,
    on_disconnect,
)

NOW = "2024-03-01 10:00:00"


def fresh_session(port=6001):
    return SessionState(peer_ip="127.0.0.1", peer_port=port)


def joined_session(member_id, port=6001, **kwargs):
    return SessionState(
        peer_ip="127.0.0.1", peer_port=port, phase=Phase.JOINED, member_id=member_id, **kwargs
    )


def registry_of(*ids):
    registry = Registry()
    for i, member_id in enumerate(ids):
        registry = add_member(registry, member_id, "127.0.0.1", 6001 + i, NOW).registry
    return registry


def frames_to(effects: Effects, destination):
    return [f for d, f in effects.outbound if d == destination]


def log_kinds(effects: Effects):
    return [entry.kind for entry in effects.logs]


class TestJoin:
    def test_first_joiner_welcomed_as_coordinator(self):
        session, effects = handle_frame(fresh_session(), wire.Join("alice"), Registry(), NOW)
        assert session.phase is Phase.JOINED and session.member_id == "alice"
        assert frames_to(effects, TO_SELF) == [wire.Welcome("alice", "alice")]
        assert frames_to(effects, TO_ALL) == [wire.Coord("alice")]
        assert effects.registry.coordinator == "alice"
        assert log_kinds(effects) == ["join", "coord_change"]

    def test_later_joiner_announced_to_others_only(self):
        session, effects = handle_frame(
            fresh_session(6002), wire.Join("bob"), registry_of("alice"), NOW
        )
        assert frames_to(effects, TO_SELF) == [wire.Welcome("bob", "alice")]
        assert frames_to(effects, ToMember("alice")) == [wire.Joined("bob", "127.0.0.1", 6002)]
        assert frames_to(effects, TO_ALL) == []  # no COORD: coordinator unchanged
        assert log_kinds(effects) == ["join"]

    def test_duplicate_id_rejected_then_closed(self):
        session, effects = handle_frame(
            fresh_session(), wire.Join("alice"), registry_of("alice"), NOW
        )
        assert session.phase is Phase.CLOSED
        assert effects.close == "duplicate_id"
        (err,) = frames_to(effects, TO_SELF)
        assert err.code == "duplicate_id"
        assert effects.registry == registry_of("alice")

    def test_join_while_joined_is_bad_frame(self):
        session = joined_session("alice")
        new_session, effects = handle_frame(session, wire.Join("alice2"), registry_of("alice"), NOW)
        (err,) = frames_to(effects, TO_SELF)
        assert err.code == "bad_frame"
        assert new_session.phase is Phase.JOINED


class TestBroadcast:
    def test_fanout_to_all_members_with_timestamp(self):
        session = joined_session("bob")
        _, effects = handle_frame(session, wire.Msg("hi"), registry_of("alice", "bob", "carol"), NOW)
        assert effects.outbound == ((TO_ALL, wire.Bcast(NOW, "bob", "hi")),)
        assert log_kinds(effects) == ["broadcast"]
        assert effects.logs[0].detail == "from=bob len=2"

    def test_msg_before_join_rejected(self):
        _, effects = handle_frame(fresh_session(), wire.Msg("hi"), Registry(), NOW)
        (err,) = frames_to(effects, TO_SELF)
        assert err.code == "not_joined"
        assert log_kinds(effects) == ["error"]


class TestPrivate:
    def test_routed_to_target_only(self):
        session = joined_session("alice")
        _, effects = handle_frame(
            session, wire.Priv("bob", "psst"), registry_of("alice", "bob"), NOW
        )
        assert effects.outbound == ((ToMember("bob"), wire.Privmsg(NOW, "alice", "psst")),)
        assert log_kinds(effects) == ["private"]

    def test_unknown_target(self):
        session = joined_session("alice")
        _, effects = handle_frame(session, wire.Priv("ghost", "hi"), registry_of("alice"), NOW)
        (err,) = frames_to(effects, TO_SELF)
        assert err.code == "unknown_target"

    def test_details_to_coordinator_returns_roster_to_sender(self):
        session = joined_session("bob", port=6002)
        registry = registry_of("alice", "bob")
        _, effects = handle_frame(session, wire.Priv("alice", "/memberdetails"), registry, NOW)
        (members,) = frames_to(effects, TO_SELF)
        assert members == wire.Members((("alice", "127.0.0.1", 6001), ("bob", "127.0.0.1", 6002)))
        assert log_kinds(effects) == ["details"]

    def test_details_to_non_coordinator(self):
        session = joined_session("carol", port=6003)
        registry = registry_of("alice", "bob", "carol")
        _, effects = handle_frame(session, wire.Priv("bob", "/memberdetails"), registry, NOW)
        (err,) = frames_to(effects, TO_SELF)
        assert err.code == "not_coordinator"

    def test_details_to_unknown_target_is_not_coordinator(self):
        session = joined_session("alice")
        _, effects = handle_frame(
            session, wire.Priv("ghost", "/memberdetails"), registry_of("alice"), NOW
        )
        (err,) = frames_to(effects, TO_SELF)
        assert err.code == "not_coordinator"

    def test_details_like_body_with_suffix_is_ordinary_private(self):
        session = joined_session("bob", port=6002)
        registry = registry_of("alice", "bob")
        _, effects = handle_frame(session, wire.Priv("alice", "/memberdetailsX"), registry, NOW)
        assert effects.outbound == ((ToMember("alice"), wire.Privmsg(NOW, "bob", "/memberdetailsX")),)


class TestQuit:
    def test_coordinator_quit_hands_over(self):
        session = joined_session("alice")
        new_session, effects = handle_frame(
            session, wire.Quit(), registry_of("alice", "bob", "carol"), NOW
        )
        assert new_session.phase is Phase.CLOSED
        assert effects.close == "quit"
        assert frames_to(effects, TO_ALL) == [wire.Left("alice", "quit"), wire.Coord("bob")]
        assert effects.registry.coordinator == "bob"
        assert log_kinds(effects) == ["leave", "coord_change"]

    def test_last_member_quit_empties_registry(self):
        session = joined_session("alice")
        _, effects = handle_frame(session, wire.Quit(), registry_of("alice"), NOW)
        assert frames_to(effects, TO_ALL) == [wire.Left("alice", "quit")]
        assert effects.registry.members == ()
        assert log_kinds(effects) == ["leave"]  # nobody to hand over to

    def test_quit_before_join_rejected(self):
        _, effects = handle_frame(fresh_session(), wire.Quit(), Registry(), NOW)
        (err,) = frames_to(effects, TO_SELF)
        assert err.code == "not_joined"


class TestPong:
    def test_matching_nonce_resets_counter(self):
        session = joined_session("alice", missed_pings=2, last_nonce=7)
        new_session, effects = handle_frame(session, wire.Pong(7), registry_of("alice"), NOW)
        assert new_session.missed_pings == 0
        assert effects.outbound == () and effects.logs == ()

    def test_stale_nonce_ignored(self):
        session = joined_session("alice", missed_pings=2, last_nonce=7)
        new_session, _ = handle_frame(session, wire.Pong(6), registry_of("alice"), NOW)
        assert new_session.missed_pings == 2

    def test_pong_before_join_ignored(self):
        session = fresh_session()
        new_session, effects = handle_frame(session, wire.Pong(1), Registry(), NOW)
        assert new_session == session and effects.outbound == ()


class TestBadFrames:
    def test_server_verb_from_client_is_bad_frame(self):
        session = joined_session("alice")
        new_session, effects = handle_frame(
            session, wire.Welcome("x", "y"), registry_of("alice"), NOW
        )
        (err,) = frames_to(effects, TO_SELF)
        assert err.code == "bad_frame"
        assert new_session.bad_frames == 1

    def test_first_offense_is_err_only(self):
        session = joined_session("alice")
        new_session, effects = handle_bad_frame(session, registry_of("alice"), "unknown_verb", NOW)
        assert effects.close is None
        assert new_session.bad_frames == 1

    def test_repetition_disconnects_and_removes_member(self):
        session = joined_session("alice", bad_frames=BAD_FRAME_LIMIT - 1)
        new_session, effects = handle_bad_frame(
            session, registry_of("alice", "bob"), "unknown_verb", NOW
        )
        assert new_session.phase is Phase.CLOSED
        assert effects.close == "error"
        assert wire.Left("alice", "error") in [f for _, f in effects.outbound]
        assert "alice" not in effects.registry


class TestDisconnect:
    def test_abrupt_loss_of_member(self):
        effects = on_disconnect(joined_session("bob"), registry_of("alice", "bob"), "error", NOW)
        assert frames_to(effects, TO_ALL) == [wire.Left("bob", "error")]
        assert effects.registry.coordinator == "alice"
        assert log_kinds(effects) == ["leave"]

    def test_abrupt_loss_of_coordinator_hands_over(self):
        effects = on_disconnect(joined_session("alice"), registry_of("alice", "bob"), "timeout", NOW)
        assert frames_to(effects, TO_ALL) == [wire.Left("alice", "timeout"), wire.Coord("bob")]
        assert log_kinds(effects) == ["leave", "coord_change"]

    def test_loss_before_join_logs_only(self):
        effects = on_disconnect(fresh_session(), registry_of("alice"), "error", NOW)
        assert effects.outbound == ()
        assert log_kinds(effects) == ["leave"]
        assert "awaiting_join" in effects.logs[0].detail


class TestHeartbeatSweep:
    def test_pings_joined_sessions_with_fresh_nonces(self):
        sessions = {1: joined_session("alice"), 2: joined_session("bob", port=6002), 3: fresh_session(6003)}
        result = heartbeat_sweep(sessions, misses_allowed=2, nonce_start=10)
        assert result.pings == ((1, 10), (2, 11))
        assert result.next_nonce == 12
        assert result.sessions[1].missed_pings == 1
        assert result.sessions[1].last_nonce == 10
        assert result.sessions[3] == sessions[3]  # awaiting_join untouched
        assert result.condemned == ()

    def test_condemnation_after_budget_exceeded(self):
        session = joined_session("alice", missed_pings=2)
        result = heartbeat_sweep({1: session}, misses_allowed=2, nonce_start=1)
        assert result.condemned == (1,)
        assert result.pings == ()  # no point pinging the condemned

    def test_responsive_client_never_accumulates(self):
        session = joined_session("alice")
        for sweep_round in range(10):
            result = heartbeat_sweep({1: session}, misses_allowed=2, nonce_start=sweep_round)
            session = result.sessions[1]
            assert session.missed_pings == 1
            # the client answers with the matching nonce before the next sweep
            session, _ = handle_frame(session, wire.Pong(session.last_nonce), Registry(), NOW)
            assert session.missed_pings == 0
