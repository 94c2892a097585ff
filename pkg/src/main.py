#!/usr/bin/env python3

import sys

from cli import M3RCLI


def main() -> None:
    try:
        cli = M3RCLI()
        sys.exit(cli.run())
    except KeyboardInterrupt:
        print("\nOperation cancelled by user", file=sys.stderr)
        sys.exit(130)


if __name__ == "__main__":
    main()
