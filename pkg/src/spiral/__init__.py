"""Document annotation service with an iterative model-improvement loop.

Ingests documents, rasterizes pages, takes layout/OCR/artifact results from
authenticated model workers, lets humans review and correct everything, and
exports the corrected annotations as training data. A metrics engine
quantifies each model generation; the bundled harness demonstrates the
review-retrain loop end to end with deterministic mock workers.
"""

from .api import build_app, create_app
from .config import AppConfig, load_config
from .service import AnnotationService

__version__ = "0.1.0"

__all__ = ["AnnotationService", "AppConfig", "build_app", "create_app", "load_config"]
