from collections.abc import Generator, Iterable, Iterator, Sequence
from itertools import cycle, islice
from typing import TypeVar

# Utilities based on the `itertools` recipes of the same names.
# See: https://docs.python.org/3/library/itertools.html#itertools-recipes
T = TypeVar("T")


def batched(iterable: Iterable[T], size: int) -> Generator[list[T], None, None]:
    """Yield successive chunks of at most ``size`` elements.

    >>> list(batched('ABCDEFG', 3))
    ```[['A', 'B', 'C'], ['D', 'E', 'F'], ['G']]```

    :param iterable: The iterable to chunk.
    :param size: The maximum chunk size, at least 1.
    :yield: Lists of up to `size` elements.
    """
    if size < 1:
        raise ValueError(f"Batch size must be at least 1, got {size}.")
    it: Iterator[T] = iter(iterable)
    while chunk := list(islice(it, size)):
        yield chunk


def roundrobin(*sequences: Sequence[T]) -> Generator[T, None, None]:
    """Visit the sequences in turn until all of them are exhausted.

    >>> list(roundrobin('ABC', 'D', 'EF'))
    ```['A', 'D', 'E', 'B', 'F', 'C']```
    """
    remaining = len(sequences)
    nexts = cycle(iter(sequence).__next__ for sequence in sequences)
    while remaining:
        try:
            for next_item in nexts:
                yield next_item()
        except StopIteration:
            remaining -= 1
            nexts = cycle(islice(nexts, remaining))


def paired_longest(
    first: Sequence[T], second: Sequence[T]
) -> Generator[tuple[T | None, T | None], None, None]:
    """Pair items by position, cycling the shorter sequence.

    An empty sequence contributes None.

    >>> list(paired_longest('ABC', 'D'))
    ```[('A', 'D'), ('B', 'D'), ('C', 'D')]```
    """
    length = max(len(first), len(second))
    for i in range(length):
        yield (
            first[i % len(first)] if first else None,
            second[i % len(second)] if second else None,
        )
