"""Command-line entry point: python main.py {solve,bench,train,check} [options]."""
import sys

from commands import run


def main() -> int:
    try:
        return run()
    except SystemExit as e:
        # argparse exits with 64 on bad flags and 0 on --help
        return e.code if isinstance(e.code, int) else 1


if __name__ == "__main__":
    sys.exit(main())
