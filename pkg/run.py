#!/usr/bin/env python3
"""
EBCO Application Launcher
Entry point for the synth, train, explain, optimize and compare commands.
"""

import sys

from core.cli import main

if __name__ == "__main__":
    sys.exit(main())
