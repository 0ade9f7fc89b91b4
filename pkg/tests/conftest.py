import string

from hypothesis import settings, strategies as st

from gcs import protocol as wire

settings.register_profile("default", deadline=None)
settings.load_profile("default")

ID_ALPHABET = string.ascii_letters + string.digits + "_-"

member_ids = st.text(alphabet=ID_ALPHABET, min_size=1, max_size=32)

# Bodies: any unicode except CR/LF (and surrogates, which UTF-8 cannot carry).
bodies = st.text(
    alphabet=st.characters(blacklist_characters="\r\n", blacklist_categories=("Cs",)),
    min_size=1,
    max_size=80,
)

timestamps = st.integers(min_value=0, max_value=2**31).map(wire.format_timestamp)

ips = st.tuples(*(st.integers(0, 255) for _ in range(4))).map(
    lambda octets: ".".join(map(str, octets))
)

ports = st.integers(min_value=0, max_value=65535)

nonces = st.integers(min_value=0, max_value=wire.MAX_NONCE)

roster_entries = st.lists(st.tuples(member_ids, ips, ports), max_size=5).map(tuple)

frames = st.one_of(
    member_ids.map(wire.Join),
    bodies.map(wire.Msg),
    st.builds(wire.Priv, member_ids, bodies),
    st.just(wire.Quit()),
    nonces.map(wire.Pong),
    st.builds(wire.Welcome, member_ids, member_ids),
    st.builds(wire.Joined, member_ids, ips, ports),
    st.builds(wire.Left, member_ids, st.sampled_from(wire.LEFT_REASONS)),
    member_ids.map(wire.Coord),
    st.builds(wire.Bcast, timestamps, member_ids, bodies),
    st.builds(wire.Privmsg, timestamps, member_ids, bodies),
    roster_entries.map(wire.Members),
    st.builds(wire.Err, st.sampled_from(wire.ERR_CODES), bodies),
    nonces.map(wire.Ping),
)
