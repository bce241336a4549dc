from pelvimark.review.store import ReviewStore, StoredState
from pelvimark.review.export import export_training_pool

__all__ = ["ReviewStore", "StoredState", "export_training_pool"]
