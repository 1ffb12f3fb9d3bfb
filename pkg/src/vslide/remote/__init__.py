from .client import RemoteSlideReader, VspClient
from .gateway import GatewayServer, http_gateway
from .server import Catalog, TileDealer, serve

__all__ = [
    "Catalog",
    "TileDealer",
    "serve",
    "VspClient",
    "RemoteSlideReader",
    "GatewayServer",
    "http_gateway",
]
