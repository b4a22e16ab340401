# src/solvers/__init__.py
