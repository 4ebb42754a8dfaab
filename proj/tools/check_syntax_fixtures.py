#!/usr/bin/env python3
"""Cross-checks the hand-labeled syntax corpus against CPython's own parser.

For every snippet marked valid_syntax, the fenced code blocks (or the whole
text when no fence exists) must parse with `ast`, and the labels must match
ast.Try/TryStar nodes, calls to the `print` builtin name, and COMMENT tokens
from `tokenize`. Snippets marked invalid must fail to parse.
"""
import argparse
import ast
import io
import json
import pathlib
import sys
import tokenize


def code_blocks(text):
    lines = text.splitlines(keepends=True)
    blocks, current, inside, fenced = [], None, False, False
    for line in lines:
        if line.lstrip().startswith("```"):
            fenced = True
            if inside:
                blocks.append("".join(current))
                inside = False
            else:
                current, inside = [], True
            continue
        if inside:
            current.append(line)
    if inside:
        blocks.append("".join(current))
    return blocks if fenced else [text]


def counts(source):
    tree = ast.parse(source)
    try_types = tuple(t for t in (getattr(ast, "Try", None), getattr(ast, "TryStar", None)) if t)
    tries = [n for n in ast.walk(tree) if isinstance(n, try_types)]
    prints = sum(
        1
        for n in ast.walk(tree)
        if isinstance(n, ast.Call) and isinstance(n.func, ast.Name) and n.func.id == "print"
    )
    comments = sum(
        1 for tok in tokenize.generate_tokens(io.StringIO(source).readline) if tok.type == tokenize.COMMENT
    )
    return len(tries), comments, prints, sorted(len(t.handlers) for t in tries)


def main(corpus_dir, freeze=None):
    corpus = pathlib.Path(corpus_dir)
    labels = json.loads((corpus / "labels.json").read_text())
    failures = 0
    frozen = {}
    for entry in labels:
        text = (corpus / entry["file"]).read_text()
        blocks = code_blocks(text)
        try:
            per_block = [counts(b) for b in blocks]
            parsed = True
        except (SyntaxError, tokenize.TokenError):
            parsed = False
        if parsed != entry["valid_syntax"]:
            print(f"FAIL {entry['file']}: parses={parsed} but valid_syntax={entry['valid_syntax']}")
            failures += 1
            continue
        if not parsed:
            print(f"ok   {entry['file']} (invalid, skipped)")
            continue
        tries = sum(c[0] for c in per_block)
        comments = sum(c[1] for c in per_block)
        prints = sum(c[2] for c in per_block)
        arms = sorted(a for c in per_block for a in c[3])
        frozen[entry["file"]] = {"try_except": tries, "comment": comments, "print": prints, "except_arms": arms}
        expected = (entry["try_except"], entry["comment"], entry["print"], sorted(entry["except_arms"]))
        if (tries, comments, prints, arms) != expected:
            print(f"FAIL {entry['file']}: ast={(tries, comments, prints, arms)} labels={expected}")
            failures += 1
        else:
            print(f"ok   {entry['file']}")
    if freeze:
        record = {"parser": f"CPython {sys.version.split()[0]} ast/tokenize", "snippets": frozen}
        pathlib.Path(freeze).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return 1 if failures else 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("corpus", nargs="?", default=pathlib.Path(__file__).parent.parent / "tests/fixtures/syntax_corpus")
    parser.add_argument("--freeze", help="write the reference counts of the valid snippets to this JSON file")
    args = parser.parse_args()
    sys.exit(main(args.corpus, args.freeze))
