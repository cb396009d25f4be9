from .parallel import chunk_bounds, concat_chunks, map_chunks
from .rng import RngStream, derive_stream, stream_key, stream_keys
from .stats import (SummaryStats, Verdict, binomial_stats, combine_verdicts, merge,
                    one_sided_check, summarize, within_stderr)

__all__ = [
    "RngStream", "derive_stream", "stream_key", "stream_keys",
    "SummaryStats", "Verdict", "summarize", "merge", "binomial_stats",
    "one_sided_check", "within_stderr", "combine_verdicts",
    "map_chunks", "concat_chunks", "chunk_bounds",
]
