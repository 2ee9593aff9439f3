"""Integration tests: scaled-down training experiments and full command-line runs"""
