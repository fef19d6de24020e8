#!/usr/bin/env python3
"""Regenerate data/emoji_names.tsv from the `emoji` package (CLDR short names).

Only single-codepoint emoji are kept (U+FE0F presentation selectors stripped).
Usage: python3 tools/gen_emoji_table.py > data/emoji_names.tsv
"""
import emoji

rows = {}
for seq, info in emoji.EMOJI_DATA.items():
    cps = [ord(c) for c in seq if ord(c) != 0xFE0F]
    if len(cps) != 1:
        continue
    cp = cps[0]
    name = info["en"]
    if cp not in rows or len(seq) < len(rows[cp][1]):
        rows[cp] = (name, seq)

print(f"# emoji {emoji.__version__} single-codepoint CLDR names: codepoint<TAB>name")
for cp in sorted(rows):
    print(f"{cp:04X}\t{rows[cp][0]}")
