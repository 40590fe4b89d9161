"""Module entry point: python -m undephase."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
