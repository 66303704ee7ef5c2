"""Codec ranking on generated shapefile collections, optionally against Global Map sizes.

    python scripts/table1_trend.py --sets 12 --seeds 0 1 2
    python scripts/table1_trend.py --global-map /data/globalmap
"""

from __future__ import annotations

import argparse
import json
from collections import Counter

from foggis.compression import ALL_CODECS, MIN_SIZE, Codec, benchmark
from foggis.reference import TAR_NOTE, compare_directory
from foggis.synth import redundant_corpus


def rank_sets(n_sets: int, seed: int, scale: int) -> list[dict]:
    rows = []
    for name, files in redundant_corpus(n_sets, seed=seed, scale=scale):
        rep = benchmark(files, ALL_CODECS, MIN_SIZE, name=name)
        sizes = {e.codec.value: e.compressed_size for e in rep.entries}
        real = {c: s for c, s in sizes.items() if c != Codec.STORE.value}
        rows.append({"set": name, "seed": seed, "original": rep.original_size, **sizes,
                     "smallest": min(real, key=real.get)})
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--sets", type=int, default=12)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--scale", type=int, default=1, help="feature-count multiplier per tile")
    ap.add_argument("--global-map", metavar="DIR")
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()

    rows = [r for s in args.seeds for r in rank_sets(args.sets, s, args.scale)]
    wins = Counter(r["smallest"] for r in rows)
    out = {"rows": rows, "smallest_counts": dict(wins), "targz_share": wins["tar.gz"] / len(rows)}
    if args.global_map:
        out["global_map"] = [c.to_dict() for c in compare_directory(args.global_map)]
        out["note"] = TAR_NOTE

    if args.json:
        print(json.dumps(out, indent=2))
        return
    cols = ["original"] + [c.value for c in ALL_CODECS]
    print(f"{'set':<8}{'seed':>5}" + "".join(f"{c:>10}" for c in cols) + "  smallest")
    for r in rows:
        print(f"{r['set']:<8}{r['seed']:>5}" + "".join(f"{r.get(c, '-'):>10}" for c in cols) + f"  {r['smallest']}")
    print(f"\ntar.gz smallest on {wins['tar.gz']}/{len(rows)} sets ({100 * out['targz_share']:.1f}%)")
    for c in out.get("global_map", []):
        print(f"{c['theme']:<28}{c['codec']:>7}  ref {c['reference_mb']:>7} MB  "
              f"measured {c['measured_mb']:>9} MB  {100 * c['rel_error']:+.1f}%  {'ok' if c['within'] else 'OUT'}")
    if "note" in out:
        print(f"\nnote: {out['note']}")


if __name__ == "__main__":
    main()
