"""floodwatch: replay-capable flood alerting over social-media corpora.

The package turns an archived post stream into alerts and maps in five
stages: keyword-count monitoring with a growth trigger, image filtering
down to usable photographic evidence, offline gazetteer geolocation,
TF-IDF coverage expansion over text-only posts, and region-aggregated
reports. A FastAPI service wraps the stages; the bundled CLI is a thin
client for it.
"""

__version__ = "0.1.0"

from .corpus import MediaRef, Post, TimeWindow, read_corpus, write_corpus
from .lexicon import Dictionary, Query, build_query, load_dictionary
from .monitor import (CountSeries, TriggerConfig, TriggerDecision,
                      count_series, detect_trigger)

__all__ = [
    "__version__",
    "MediaRef", "Post", "TimeWindow", "read_corpus", "write_corpus",
    "Dictionary", "Query", "build_query", "load_dictionary",
    "CountSeries", "TriggerConfig", "TriggerDecision",
    "count_series", "detect_trigger",
]
