"""Group communication system: coordinator-based chat over TCP.

Subpackages split along the protocol boundary: `protocol` (wire grammar),
`registry` (membership model), `routing` + `server` (the centralized
server), `client_core` + `cli_client` (clients), `sim_harness`
(deterministic in-memory testing), `web_gateway` (WebSocket bridge).
"""

__version__ = "0.1.0"
