"""Entrypoint for services package.

Only configuration is re-exported here: the domain package imports
``config_schema`` and must not pull in the experiment layer.
"""

from src.services.config_service import ConfigService

__all__ = ["ConfigService"]
