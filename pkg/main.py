import sys

from mocap_text.cli import run

if __name__ == "__main__":
    sys.exit(run())
