#!/usr/bin/env python3
"""Emit src/unicode_tables.inc: code point ranges for letters (L*), numbers (N*)
and whitespace, as used by the GPT-2 pre-tokenization pattern."""
import os
import sys
import unicodedata

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))


def ranges(pred):
    out = []
    start = None
    for cp in range(sys.maxunicode + 1):
        ok = pred(cp)
        if ok and start is None:
            start = cp
        elif not ok and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, sys.maxunicode))
    return out


def emit(f, name, rs):
    f.write(f"constexpr CodepointRange {name}[] = {{\n")
    for i in range(0, len(rs), 4):
        f.write("    " + " ".join(f"{{0x{a:X}, 0x{b:X}}}," for a, b in rs[i:i + 4]) + "\n")
    f.write("};\n\n")


def main():
    letters = ranges(lambda cp: unicodedata.category(chr(cp)).startswith("L"))
    numbers = ranges(lambda cp: unicodedata.category(chr(cp)).startswith("N"))
    spaces = ranges(lambda cp: chr(cp).isspace())
    path = os.path.join(ROOT, "src", "unicode_tables.inc")
    with open(path, "w") as f:
        f.write(f"// Generated by tools/scripts/gen_unicode_tables.py (Unicode {unicodedata.unidata_version}).\n")
        f.write("// Do not edit by hand.\n\n")
        emit(f, "kLetterRanges", letters)
        emit(f, "kNumberRanges", numbers)
        emit(f, "kSpaceRanges", spaces)
    print(path, len(letters), len(numbers), len(spaces))


if __name__ == "__main__":
    main()
