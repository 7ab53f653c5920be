"""
Schemas module for the Endo Key-frame Tool.
Committed JSON schemas for the tool call and the score/select report.
"""

import json
import os
from typing import Any, Dict

SCHEMA_DIR = os.path.dirname(os.path.abspath(__file__))


def load_schema(name: str) -> Dict[str, Any]:
    """Load a committed schema by file stem, e.g. 'report_schema'."""
    with open(os.path.join(SCHEMA_DIR, f"{name}.json"), "r", encoding="utf-8") as f:
        return json.load(f)
