"""Importing this package registers every stub-server route on `app`."""
from xchem.server.routes import chat, embed, health, prometheus, swagger  # noqa: F401
