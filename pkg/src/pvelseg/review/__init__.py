"""Silver-to-gold annotation review: filesystem store plus HTTP service."""

from .store import AnnotationStore, ConflictError, TransitionError, UnknownImageError
from .service import create_app, serve

__all__ = [
    "AnnotationStore", "ConflictError", "TransitionError", "UnknownImageError",
    "create_app", "serve",
]
