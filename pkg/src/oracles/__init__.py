# src/oracles/__init__.py
