"""Solve an MPS file with HiGHS and write the ``name value`` solution format.

Usage: ``python -m flexcfe.milp.highs_adapter model.mps model.sol [--gap G] [--time-limit S]``
"""

from __future__ import annotations

import argparse
import sys


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="highs_adapter")
    parser.add_argument("mps")
    parser.add_argument("sol")
    parser.add_argument("--gap", type=float, default=1e-9, help="relative MIP gap")
    parser.add_argument("--time-limit", type=float, default=None)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", args.gap)
    h.setOptionValue("mip_abs_gap", 1e-7)
    h.setOptionValue("threads", args.threads)
    h.setOptionValue("random_seed", 0)
    if args.time_limit:
        h.setOptionValue("time_limit", args.time_limit)
    if h.readModel(args.mps) == highspy.HighsStatus.kError:
        print(f"cannot read {args.mps}", file=sys.stderr)
        return 1
    h.run()
    status = h.getModelStatus()
    ms = highspy.HighsModelStatus
    with open(args.sol, "w") as fh:
        if status == ms.kOptimal:
            names = h.getLp().col_names_
            values = h.getSolution().col_value
            fh.write(f"objective {h.getInfo().objective_function_value!r}\n")
            for name, value in zip(names, values):
                fh.write(f"{name} {value!r}\n")
        elif status in (ms.kInfeasible, ms.kUnboundedOrInfeasible):
            # F-CFE objectives are bounded below, so the ambiguous status means infeasible
            fh.write("infeasible\n")
        elif status == ms.kUnbounded:
            fh.write("unbounded\n")
        elif status in (ms.kTimeLimit, ms.kIterationLimit, ms.kSolutionLimit):
            fh.write("limit\n")
        else:
            print(f"unexpected HiGHS status {h.modelStatusToString(status)}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
