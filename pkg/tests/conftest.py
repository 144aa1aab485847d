import logging

import pytest

from knowspace.server import KnowledgeSpaceServer, ServerConfig

logging.getLogger("knowspace").setLevel(logging.ERROR)


@pytest.fixture
def make_server():
    """Factory for live background servers, all torn down after the test."""
    servers = []

    def start(config: ServerConfig | None = None, context=None) -> KnowledgeSpaceServer:
        server = KnowledgeSpaceServer(config or ServerConfig(port=0), context=context)
        server.start_background()
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.shutdown()
        server.server_close()


@pytest.fixture
def live_server(make_server):
    return make_server(ServerConfig(port=0, enable_fulltext=True))
