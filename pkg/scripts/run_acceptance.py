"""Run the full-scale acceptance suite; one PASS/FAIL line per criterion is printed at the end.

Usage: python scripts/run_acceptance.py [-k c1]
"""
import sys
from pathlib import Path

import pytest

if __name__ == "__main__":
    root = Path(__file__).resolve().parents[1]
    sys.exit(pytest.main([str(root / "tests" / "test_acceptance.py"), "-v", *sys.argv[1:]]))
