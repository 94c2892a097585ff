from __future__ import annotations

from collections import Counter
from typing import Any, Dict, List


def summarize_results(results: List[Any]) -> Dict[str, Any]:
    """Compact summary of per-file result dicts (`success`, `path`, `error`)."""
    flat: List[Dict[str, Any]] = [r for r in results if isinstance(r, dict)]

    counts = Counter()
    errors = Counter()

    for r in flat:
        if r.get("success") is True:
            counts["success"] += 1
        if r.get("success") is False:
            counts["failed"] += 1
            errors[r.get("error") or "unknown"] += 1

    return {
        "counts": dict(sorted(counts.items())),
        "top_errors": errors.most_common(10),
        "total": len(flat),
    }


def public_results(results: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Result dicts without in-memory payloads, ready for JSON."""
    return [
        {k: v for k, v in r.items() if k not in ("exception", "frame", "series")}
        for r in results
    ]
