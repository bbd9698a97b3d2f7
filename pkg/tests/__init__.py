#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Prepare environment for running `pytest`

see copyright/license in README.md
"""

import os.path
import pathlib
import sys

_BASE_DIR: pathlib.Path = pathlib.Path(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

sys.path.insert(0, str(_BASE_DIR))
sys.path.insert(0, str(_BASE_DIR / "src"))
