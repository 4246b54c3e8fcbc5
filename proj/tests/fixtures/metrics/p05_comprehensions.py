def read_numbers():
    """Parse a whitespace separated list of integers."""
    return [int(tok) for tok in input().split() if tok.lstrip("-").isdigit()]


def summarize(values):
    evens = {v for v in values if v % 2 == 0}
    squares = {v: v * v for v in values if v > 0 if v < 100}
    pairs = [(a, b) for a in values for b in values if a < b]
    total = sum(x for x in values)
    return len(evens), len(squares), len(pairs), total


print(*summarize(read_numbers()))
