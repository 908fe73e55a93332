"""Philips Hue bridge honeypot toolkit.

Thin Python surface over the C++ core: bridge emulation, request routing,
log classification, signature matching, correlation, and the seeded attack
corpus generators.
"""

from ._core import (
    Bridge,
    analyze_logs,
    classify,
    correlate_files,
    gen_corpus,
    generate_username,
    is_http,
    make_shared_id,
    match_signatures,
    parse_command,
    percent_1dp,
    route,
    __version__,
)

__all__ = [
    "Bridge",
    "analyze_logs",
    "classify",
    "correlate_files",
    "gen_corpus",
    "generate_username",
    "is_http",
    "make_shared_id",
    "match_signatures",
    "parse_command",
    "percent_1dp",
    "route",
    "__version__",
]
