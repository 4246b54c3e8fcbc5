import sys


def valid(row, col, size):
    return 0 <= row < size and 0 <= col < size


def main():
    data = sys.stdin.read().split()
    size = int(data[0]) if data else 0
    hits = 0
    for r in range(size):
        for c in range(size):
            if valid(r + 1, c, size) and (r == c or r + c == size - 1) and not r % 3:
                hits += 1
    assert hits >= 0
    print(hits)


main()
