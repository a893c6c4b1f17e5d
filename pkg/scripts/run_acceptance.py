"""Run only the acceptance suite and print its per-criterion summary."""

import os
import sys

import pytest

if __name__ == "__main__":
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    sys.exit(pytest.main(["-q", "-m", "acceptance", os.path.join(root, "tests", "test_acceptance.py"), *sys.argv[1:]]))
