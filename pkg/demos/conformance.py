"""Monte-Carlo conformance of the building blocks.

Prints the aggregation, agreement and estimator reports.  The mean shows up
in the aggregation report as a negative control: its error follows the
Byzantine offset, which is what the harness should detect.
"""

import argparse

from byzpg.conformance import run_suite

ap = argparse.ArgumentParser()
ap.add_argument("--trials", type=int, default=1000)
args = ap.parse_args()

for suite, kw in (("aggregation", {"trials": args.trials}), ("agreement", {"trials": args.trials}),
                  ("estimators", {})):
    print(f"== {suite}")
    for line in run_suite(suite, **kw).lines():
        print(line)
