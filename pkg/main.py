#!/usr/bin/env python3
"""
Repository-root entry point: forwards to the CLI in backend/app/main.py.

    python main.py synth --out-dir runs/synth --seed 1
"""

import os
import sys

# Add backend directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "backend"))

from app.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
