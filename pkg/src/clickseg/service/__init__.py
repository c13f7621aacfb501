"""Annotation service: model registry, event-sourced sessions, HTTP app."""

from .registry import ModelRegistry
from .sessions import SessionStore, segment_once
from .app import create_app

__all__ = ["ModelRegistry", "SessionStore", "segment_once", "create_app"]
