"""Run every attack scenario against a fresh archive and print the outcome table.

Run with ``python demos/attack_tour.py [seed]``.
"""

import logging
import sys

from voicearc.harness import SCENARIOS, run_all


def main() -> None:
    # Each rejection is logged by the archive; the table below says the same.
    logging.getLogger("voicearc").setLevel(logging.ERROR)
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    outcomes = run_all(seed)
    for o in outcomes:
        print(o.line())
    failed = [o.scenario for o in outcomes if not o.passed]
    print(f"\n{len(outcomes) - len(failed)}/{len(SCENARIOS)} scenarios behaved as expected")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
