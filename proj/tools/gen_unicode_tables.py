#!/usr/bin/env python3
"""Generate unicode_tables.hpp: simple-lowercase deltas and alphanumeric ranges.

Derived from the Python runtime's unicodedata (category L*/N* counts as
alphanumeric). Lowercase mappings keep only single-code-point results, plus
U+0130 which maps to plain 'i'. Output is committed; rerun only to bump the
Unicode version.
"""

import sys
import unicodedata

MAX_CP = 0x110000


def is_alnum(cp: int) -> bool:
    cat = unicodedata.category(chr(cp))
    return cat.startswith("L") or cat.startswith("N")


def lower_map(cp: int) -> int:
    ch = chr(cp)
    lo = ch.lower()
    if len(lo) == 1 and lo != ch:
        return ord(lo)
    if cp == 0x0130:  # LATIN CAPITAL LETTER I WITH DOT ABOVE -> 'i'
        return 0x0069
    return cp


def alnum_ranges():
    ranges = []
    start = None
    for cp in range(MAX_CP):
        if is_alnum(cp):
            if start is None:
                start = cp
        else:
            if start is not None:
                ranges.append((start, cp - 1))
                start = None
    if start is not None:
        ranges.append((start, MAX_CP - 1))
    return ranges


def lower_entries():
    return [(cp, lower_map(cp)) for cp in range(MAX_CP) if lower_map(cp) != cp]


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "unicode_tables.hpp"
    ranges = alnum_ranges()
    lowers = lower_entries()
    with open(out, "w") as f:
        f.write("// Generated by tools/gen_unicode_tables.py (Unicode %s). Do not edit.\n"
                % unicodedata.unidata_version)
        f.write("#pragma once\n\n#include <cstdint>\n#include <cstddef>\n\n")
        f.write("namespace priming::detail {\n\n")
        f.write("struct CpRange { char32_t lo; char32_t hi; };\n")
        f.write("struct CpMap { char32_t from; char32_t to; };\n\n")
        f.write("inline constexpr CpRange kAlnumRanges[] = {\n")
        for i, (lo, hi) in enumerate(ranges):
            sep = "\n" if (i + 1) % 6 == 0 else " "
            f.write("{0x%X,0x%X},%s" % (lo, hi, sep))
        f.write("\n};\n")
        f.write("inline constexpr std::size_t kAlnumRangeCount = %d;\n\n" % len(ranges))
        f.write("inline constexpr CpMap kLowerMap[] = {\n")
        for i, (a, b) in enumerate(lowers):
            sep = "\n" if (i + 1) % 6 == 0 else " "
            f.write("{0x%X,0x%X},%s" % (a, b, sep))
        f.write("\n};\n")
        f.write("inline constexpr std::size_t kLowerMapCount = %d;\n\n" % len(lowers))
        f.write("}  // namespace priming::detail\n")
    print("wrote %s: %d alnum ranges, %d lowercase mappings" % (out, len(ranges), len(lowers)))


if __name__ == "__main__":
    main()
