"""Allow running as `python -m tbhorizon`."""

from tbhorizon.cli import main

main()
