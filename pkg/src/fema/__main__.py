"""Allow `python -m fema` as an alias for the `fema` console script."""

from fema.harness.cli import main

if __name__ == "__main__":
    main()
