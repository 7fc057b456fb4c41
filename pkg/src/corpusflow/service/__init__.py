"""Multi-user workspace server: REST + event stream over the core engine."""

from .app import create_app
from .state import ServerConfig, ServerState

__all__ = ["create_app", "ServerConfig", "ServerState"]
