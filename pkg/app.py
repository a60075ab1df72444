import sys

from histoad.app import main  # pragma: no cover

if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
