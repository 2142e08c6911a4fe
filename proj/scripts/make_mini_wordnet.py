#!/usr/bin/env python3
"""Cut a small WordNet 3.0 subset for the bundled stub corpus vocabulary.

Usage: make_mini_wordnet.py <wordnet-dict-dir> <out-dir> <vocab-file>

Every synset that contains a vocabulary lemma is copied verbatim from
data.<pos>. The index files are regenerated so that each lemma appearing in a
copied synset lists exactly the copied synsets it belongs to; this keeps the
subset closed (every index offset resolves, synonymy stays symmetric).
"""
import collections
import pathlib
import sys

POS_FILES = {"noun": "n", "verb": "v", "adj": "a", "adv": "r"}


def read_data(path):
    header, records = [], {}
    with open(path, encoding="latin-1") as fh:
        for line in fh:
            if line.startswith("  "):
                header.append(line)
                continue
            offset = line.split(" ", 1)[0]
            records[offset] = line
    return header, records


def lemmas_of(line):
    fields = line.split()
    count = int(fields[3], 16)
    out = []
    for k in range(count):
        word = fields[4 + 2 * k]
        if "(" in word:
            word = word[: word.index("(")]
        out.append(word.lower())
    return out


def main():
    src, dst, vocab_file = map(pathlib.Path, sys.argv[1:4])
    vocab = {w.strip().lower() for w in vocab_file.read_text().split() if w.strip()}
    dst.mkdir(parents=True, exist_ok=True)
    for name, pos in POS_FILES.items():
        header, records = read_data(src / f"data.{name}")
        index_src = {}
        with open(src / f"index.{name}", encoding="latin-1") as fh:
            for line in fh:
                if line.startswith("  "):
                    continue
                fields = line.split()
                index_src[fields[0]] = fields
        wanted = set()
        for lemma in vocab:
            fields = index_src.get(lemma)
            if not fields:
                continue
            synset_cnt = int(fields[2])
            wanted.update(fields[-synset_cnt:])
        kept = sorted(wanted)
        members = collections.defaultdict(list)
        for off in kept:
            for lemma in lemmas_of(records[off]):
                if off not in members[lemma]:
                    members[lemma].append(off)
        with open(dst / f"data.{name}", "w", encoding="latin-1") as fh:
            fh.writelines(header[:3])
            for off in kept:
                fh.write(records[off])
        with open(dst / f"index.{name}", "w", encoding="latin-1") as fh:
            fh.writelines(header[:3])
            for lemma in sorted(members):
                offs = members[lemma]
                fh.write(f"{lemma} {pos} {len(offs)} 0 {len(offs)} 0 {' '.join(offs)}  \n")


if __name__ == "__main__":
    main()
