#!/usr/bin/env python3
"""Stand-in "real" corpus for smoke training without licensed mocap data.

Poses come from a narrow band around the middle of every admissible range,
so the critics have a distinct target the generator must move towards.

    python3 tools/make_stand_in_corpus.py -o real.dhaug --count 4096
    dhaug train --data real.dhaug --out-dir run
"""

import argparse

import dhaug


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-o", "--out", required=True)
    ap.add_argument("--count", type=int, default=4096, help="sequences (poses when --frames 1)")
    ap.add_argument("--frames", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--band", type=float, default=0.05, help="fraction of each range to sample")
    ap.add_argument("--binary", action="store_true")
    args = ap.parse_args()
    n = dhaug.stand_in_corpus(args.out, args.count, args.frames, args.seed, args.band, args.binary)
    print(f"wrote {n} records to {args.out}")


if __name__ == "__main__":
    main()
