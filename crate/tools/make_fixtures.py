#!/usr/bin/env python3
"""Generate canonical-AST fixture corpora for the hdhgn test suites.

Programs are produced from per-problem solution templates with randomized
identifiers, input idioms and wrappers, then parsed with the standard `ast`
module and serialized in the CanonicalAst JSON-lines schema.

    python3 tools/make_fixtures.py crates/core/tests/fixtures
"""

import ast
import json
import random
import sys
from pathlib import Path

MAX_CONST = 64
VOWELS = "'aeiou'"
BIN_FMT = "'b'"

NAMES = [
    "a", "b", "c", "n", "m", "k", "x", "y", "s", "t", "i", "j", "ans", "res",
    "total", "cnt", "num", "val", "lst", "arr", "nums", "data", "cur", "tmp",
    "acc", "out", "word", "line", "v", "w", "p", "q", "r", "d", "buf", "best",
]


def canonical(tree, source_id, label):
    nodes = []

    def leaf(value):
        text = str(value)[:MAX_CONST]
        nodes.append({"kind": "identifier", "value": text, "fields": []})
        return len(nodes) - 1

    def visit(node):
        idx = len(nodes)
        entry = {"kind": "ast", "value": type(node).__name__, "fields": []}
        nodes.append(entry)
        for name in node._fields:
            value = getattr(node, name, None)
            if value is None:
                continue
            items = value if isinstance(value, list) else [value]
            children = []
            for item in items:
                if item is None:
                    continue
                if isinstance(item, ast.AST):
                    children.append(visit(item))
                else:
                    children.append(leaf(item))
            if children:
                entry["fields"].append([name, children])
        return idx

    root = visit(tree)
    record = {"source_id": source_id}
    if label is not None:
        record["label"] = label
    record["root"] = root
    record["nodes"] = nodes
    return record


class Ctx:
    def __init__(self, rng):
        self.rng = rng
        pool = NAMES[:]
        rng.shuffle(pool)
        self.pool = pool

    def name(self):
        return self.pool.pop()

    def pick(self, *options):
        return self.rng.choice(options)

    def read_int(self):
        return self.pick("int(input())", "int(input().strip())")

    def read_ints(self):
        return self.pick(
            "list(map(int, input().split()))",
            "[int(z) for z in input().split()]",
            "list(map(int, input().strip().split()))",
        )

    def read_two(self, a, b):
        return self.pick(
            f"{a}, {b} = map(int, input().split())",
            f"{a}, {b} = [int(z) for z in input().split()]",
        )

    def show(self, expr):
        return self.pick(f"print({expr})", f"print({expr})", f"print(str({expr}))")

    def yes_no(self, cond):
        return self.pick(
            f"if {cond}:\n    print('Yes')\nelse:\n    print('No')",
            f"print('Yes' if {cond} else 'No')",
        )


def wrap(ctx, body):
    style = ctx.rng.random()
    if style < 0.25:
        inner = "\n".join("    " + ln for ln in body.splitlines())
        tail = ctx.pick("main()", "if __name__ == '__main__':\n    main()")
        body = f"def main():\n{inner}\n{tail}"
    if ctx.rng.random() < 0.25:
        body = "import sys\ninput = sys.stdin.readline\n" + body
    return body


def p_sum(c):
    n, xs, t = c.name(), c.name(), c.name()
    v = c.pick(
        f"{n} = {c.read_int()}\n{xs} = {c.read_ints()}\n{c.show(f'sum({xs})')}",
        f"{n} = {c.read_int()}\n{xs} = {c.read_ints()}\n{t} = 0\nfor e in {xs}:\n    {t} += e\n{c.show(t)}",
        f"{n} = {c.read_int()}\n{t} = 0\nfor _ in range({n}):\n    {t} += {c.read_int()}\n{c.show(t)}",
    )
    return v


def p_max(c):
    xs, b = c.name(), c.name()
    return c.pick(
        f"{xs} = {c.read_ints()}\n{c.show(f'max({xs})')}",
        f"{xs} = {c.read_ints()}\n{b} = {xs}[0]\nfor e in {xs}:\n    if e > {b}:\n        {b} = e\n{c.show(b)}",
        f"{xs} = sorted({c.read_ints()})\n{c.show(f'{xs}[-1]')}",
    )


def p_factorial(c):
    n, r = c.name(), c.name()
    return c.pick(
        f"{n} = {c.read_int()}\n{r} = 1\nfor i in range(1, {n} + 1):\n    {r} *= i\n{c.show(r)}",
        f"import math\n{n} = {c.read_int()}\n{c.show(f'math.factorial({n})')}",
        f"def fact(k):\n    if k <= 1:\n        return 1\n    return k * fact(k - 1)\n{n} = {c.read_int()}\n{c.show(f'fact({n})')}",
        f"{n} = {c.read_int()}\n{r} = 1\nwhile {n} > 1:\n    {r} *= {n}\n    {n} -= 1\n{c.show(r)}",
    )


def p_gcd(c):
    a, b = c.name(), c.name()
    return c.pick(
        f"import math\n{c.read_two(a, b)}\n{c.show(f'math.gcd({a}, {b})')}",
        f"{c.read_two(a, b)}\nwhile {b}:\n    {a}, {b} = {b}, {a} % {b}\n{c.show(a)}",
        f"def g(u, w):\n    return u if w == 0 else g(w, u % w)\n{c.read_two(a, b)}\n{c.show(f'g({a}, {b})')}",
    )


def p_fizzbuzz(c):
    n = c.name()
    return c.pick(
        f"{n} = {c.read_int()}\nfor i in range(1, {n} + 1):\n    if i % 15 == 0:\n        print('FizzBuzz')\n"
        f"    elif i % 3 == 0:\n        print('Fizz')\n    elif i % 5 == 0:\n        print('Buzz')\n    else:\n        print(i)",
        f"{n} = {c.read_int()}\nfor i in range(1, {n} + 1):\n    w = ''\n    if i % 3 == 0:\n        w += 'Fizz'\n"
        f"    if i % 5 == 0:\n        w += 'Buzz'\n    print(w or i)",
    )


def p_reverse(c):
    s, r = c.name(), c.name()
    return c.pick(
        f"{s} = input()\n{c.show(f'{s}[::-1]')}",
        f"{s} = input().strip()\n{c.show(repr('') + f'.join(reversed({s}))')}",
        f"{s} = input()\n{r} = ''\nfor ch in {s}:\n    {r} = ch + {r}\n{c.show(r)}",
    )


def p_palindrome(c):
    s = c.name()
    return c.pick(
        f"{s} = input()\n{c.yes_no(f'{s} == {s}[::-1]')}",
        f"{s} = input().strip()\nok = True\nfor i in range(len({s}) // 2):\n    if {s}[i] != {s}[-1 - i]:\n        ok = False\n{c.yes_no('ok')}",
        f"{s} = input()\n{c.yes_no(f'list({s}) == list(reversed({s}))')}",
    )


def p_vowels(c):
    s, k = c.name(), c.name()
    return c.pick(
        f"{s} = input()\n{c.show(f'sum(1 for ch in {s} if ch in {VOWELS})')}",
        f"{s} = input().lower()\n{k} = 0\nfor ch in {s}:\n    if ch in 'aeiou':\n        {k} += 1\n{c.show(k)}",
        f"{s} = input()\n{c.show(f'len([ch for ch in {s} if ch in {VOWELS}])')}",
    )


def p_fib(c):
    n, a, b = c.name(), c.name(), c.name()
    return c.pick(
        f"{n} = {c.read_int()}\n{a}, {b} = 0, 1\nfor _ in range({n}):\n    {a}, {b} = {b}, {a} + {b}\n{c.show(a)}",
        f"{n} = {c.read_int()}\nf = [0, 1]\nfor i in range(2, {n} + 1):\n    f.append(f[i - 1] + f[i - 2])\n{c.show(f'f[{n}]')}",
        f"def fib(k):\n    if k < 2:\n        return k\n    return fib(k - 1) + fib(k - 2)\n{n} = {c.read_int()}\n{c.show(f'fib({n})')}",
    )


def p_prime(c):
    n = c.name()
    return c.pick(
        f"{n} = {c.read_int()}\nok = {n} > 1\nfor i in range(2, int({n} ** 0.5) + 1):\n    if {n} % i == 0:\n        ok = False\n        break\n{c.yes_no('ok')}",
        f"def is_prime(k):\n    if k < 2:\n        return False\n    i = 2\n    while i * i <= k:\n        if k % i == 0:\n            return False\n        i += 1\n    return True\n"
        f"{n} = {c.read_int()}\n{c.yes_no(f'is_prime({n})')}",
        f"{n} = {c.read_int()}\n{c.yes_no(f'{n} > 1 and all({n} % i for i in range(2, {n}))')}",
    )


def p_sort(c):
    n, xs = c.name(), c.name()
    return c.pick(
        f"{n} = {c.read_int()}\n{xs} = {c.read_ints()}\n{xs}.sort()\nprint(*{xs})",
        f"{n} = {c.read_int()}\n{xs} = sorted({c.read_ints()})\nprint(' '.join(map(str, {xs})))",
        f"{xs} = {c.read_ints()}\nfor i in range(len({xs})):\n    for j in range(len({xs}) - 1 - i):\n"
        f"        if {xs}[j] > {xs}[j + 1]:\n            {xs}[j], {xs}[j + 1] = {xs}[j + 1], {xs}[j]\nprint(*{xs})",
    )


def p_digits(c):
    n, t = c.name(), c.name()
    return c.pick(
        f"{n} = input().strip()\n{c.show(f'sum(int(ch) for ch in {n})')}",
        f"{n} = {c.read_int()}\n{t} = 0\nwhile {n} > 0:\n    {t} += {n} % 10\n    {n} //= 10\n{c.show(t)}",
        f"{n} = input()\n{c.show(f'sum(map(int, {n}))')}",
    )


def p_count_char(c):
    s, ch, k = c.name(), c.name(), c.name()
    return c.pick(
        f"{s} = input()\n{ch} = input()\n{c.show(f'{s}.count({ch})')}",
        f"{s} = input()\n{ch} = input()\n{k} = 0\nfor e in {s}:\n    if e == {ch}:\n        {k} += 1\n{c.show(k)}",
        f"from collections import Counter\n{s} = input()\n{ch} = input()\n{c.show(f'Counter({s})[{ch}]')}",
    )


def p_binary(c):
    n, d = c.name(), c.name()
    return c.pick(
        f"{n} = {c.read_int()}\n{c.show(f'bin({n})[2:]')}",
        f"{n} = {c.read_int()}\n{c.show(f'format({n}, {BIN_FMT})')}",
        f"{n} = {c.read_int()}\n{d} = ''\nwhile {n} > 0:\n    {d} = str({n} % 2) + {d}\n    {n} //= 2\nprint({d} or '0')",
    )


def p_range(c):
    xs = c.name()
    return c.pick(
        f"{xs} = {c.read_ints()}\n{c.show(f'max({xs}) - min({xs})')}",
        f"{xs} = sorted({c.read_ints()})\n{c.show(f'{xs}[-1] - {xs}[0]')}",
        f"{xs} = {c.read_ints()}\nlo = hi = {xs}[0]\nfor e in {xs}:\n    lo = min(lo, e)\n    hi = max(hi, e)\n{c.show('hi - lo')}",
    )


def p_average(c):
    n, xs = c.name(), c.name()
    return c.pick(
        f"{n} = {c.read_int()}\n{xs} = {c.read_ints()}\n{c.show(f'sum({xs}) / {n}')}",
        f"{xs} = {c.read_ints()}\nprint('{{:.6f}}'.format(sum({xs}) / len({xs})))",
        f"import statistics\n{xs} = {c.read_ints()}\n{c.show(f'statistics.mean({xs})')}",
    )


def p_triangle(c):
    a, b, d = c.name(), c.name(), c.name()
    return c.pick(
        f"{a}, {b}, {d} = map(int, input().split())\n{c.yes_no(f'{a} + {b} > {d} and {b} + {d} > {a} and {a} + {d} > {b}')}",
        f"s = sorted({c.read_ints()})\n{c.yes_no('s[0] + s[1] > s[2]')}",
    )


def p_leap(c):
    y = c.name()
    return c.pick(
        f"{y} = {c.read_int()}\n{c.yes_no(f'{y} % 4 == 0 and ({y} % 100 != 0 or {y} % 400 == 0)')}",
        f"import calendar\n{y} = {c.read_int()}\n{c.yes_no(f'calendar.isleap({y})')}",
        f"{y} = {c.read_int()}\nif {y} % 400 == 0:\n    print('Yes')\nelif {y} % 100 == 0:\n    print('No')\n"
        f"elif {y} % 4 == 0:\n    print('Yes')\nelse:\n    print('No')",
    )


def p_powmod(c):
    a, b = c.name(), c.name()
    mod = c.pick("10 ** 9 + 7", "1000000007", "998244353")
    return c.pick(
        f"{c.read_two(a, b)}\n{c.show(f'pow({a}, {b}, {mod})')}",
        f"MOD = {mod}\n{c.read_two(a, b)}\nr = 1\nwhile {b} > 0:\n    if {b} & 1:\n        r = r * {a} % MOD\n"
        f"    {a} = {a} * {a} % MOD\n    {b} >>= 1\n{c.show('r')}",
    )


def p_evens(c):
    xs, k = c.name(), c.name()
    return c.pick(
        f"{xs} = {c.read_ints()}\n{c.show(f'len([e for e in {xs} if e % 2 == 0])')}",
        f"{xs} = {c.read_ints()}\n{k} = 0\nfor e in {xs}:\n    if e % 2 == 0:\n        {k} += 1\n{c.show(k)}",
        f"{xs} = {c.read_ints()}\n{c.show(f'sum(1 for e in {xs} if not e & 1)')}",
    )


PROBLEMS = [
    ("sum_of_numbers", p_sum),
    ("maximum", p_max),
    ("factorial", p_factorial),
    ("gcd", p_gcd),
    ("fizzbuzz", p_fizzbuzz),
    ("reverse_string", p_reverse),
    ("palindrome", p_palindrome),
    ("count_vowels", p_vowels),
    ("fibonacci", p_fib),
    ("primality", p_prime),
    ("sort_numbers", p_sort),
    ("digit_sum", p_digits),
    ("count_char", p_count_char),
    ("binary_repr", p_binary),
    ("value_range", p_range),
    ("average", p_average),
    ("triangle", p_triangle),
    ("leap_year", p_leap),
    ("power_mod", p_powmod),
    ("count_evens", p_evens),
]


def write_corpus(path, classes, per_class, seed):
    rng = random.Random(seed)
    labels = [name for name, _ in classes]
    counts = [0] * len(classes)
    with open(path, "w") as fh:
        for label, (name, gen) in enumerate(classes):
            for k in range(per_class):
                src = wrap(Ctx(rng), gen(Ctx(rng)))
                tree = ast.parse(src)
                rec = canonical(tree, f"{name}/s{k:04d}.py", label)
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
                counts[label] += 1
    manifest = {
        "labels": labels,
        "counts": counts,
        "parse_failures": 0,
        "parser": f"cpython-ast {sys.version_info.major}.{sys.version_info.minor}",
    }
    Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def write_snippets(path, snippets):
    with open(path, "w") as fh:
        for sid, src in snippets:
            rec = canonical(ast.parse(src), sid, None)
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures")
    out.mkdir(parents=True, exist_ok=True)
    write_snippets(out / "a_equals_1.jsonl", [("a_equals_1", "a = 1")])
    write_snippets(out / "two_statement_body.jsonl", [("assign_then_print", "a = 1\nprint(a)")])
    write_corpus(out / "desk_corpus.jsonl", PROBLEMS, 100, seed=20230701)
    write_corpus(out / "overfit_corpus.jsonl", PROBLEMS[:8], 10, seed=8)


if __name__ == "__main__":
    main()
