#!/usr/bin/env python3
"""Materialize the bundled synthetic datasets as text files.

Writes ``<root>/<name>/{edges,features,labels,masks}.txt`` for each
requested dataset.  Generation is fully seeded: rerunning reproduces
identical files, and existing directories are left untouched unless
``--force`` is given.
"""

import argparse
import sys
from pathlib import Path

from gradflow.datagen import STANDIN_SPECS, write_standins


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", type=Path, default=Path("data"),
                        help="directory to write datasets under "
                             "(default: ./data)")
    parser.add_argument("--only", nargs="+", metavar="NAME",
                        choices=sorted(STANDIN_SPECS),
                        help="restrict to these datasets "
                             f"(default: all of {', '.join(sorted(STANDIN_SPECS))})")
    parser.add_argument("--force", action="store_true",
                        help="regenerate even if the directory exists")
    args = parser.parse_args(argv)
    written = write_standins(args.root, names=args.only, force=args.force)
    for path in written:
        print(f"wrote {path}")
    if not written:
        print("nothing to do (all datasets present; use --force to rebuild)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
