import json
from pathlib import Path
from typing import Any, Dict, Optional


def write_manifest(path: str | Path, payload: Dict[str, Any]) -> str:
    """JSON run report; keys sorted so identical runs give identical bytes."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return str(p)


def safe_relpath(base: Path, target: Optional[str | Path]) -> Optional[str]:
    if target is None:
        return None
    t = Path(target)
    try:
        return str(t.relative_to(base))
    except ValueError:
        return str(t)


def report_path(output: str | Path) -> Path:
    """`out/data.m3rd` -> `out/data.report.json`."""
    p = Path(output)
    if p.suffix:
        return p.with_name(f"{p.stem}.report.json")
    return p / "report.json"
