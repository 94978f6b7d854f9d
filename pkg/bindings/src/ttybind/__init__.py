"""Array-interchange bindings for ttystream datasets.

`open_dataset` turns a cataloged dataset into an iterable of BoundBatch
mappings (field name -> numpy array) ready for a training loop.  All
batching semantics (lane order, shuffling, padding, seeding, worker
parallelism) come from the ttystream loader; this layer only selects
fields and hands out arrays.
"""

from pathlib import Path
from typing import Sequence

import numpy as np

from ttystream import Catalog, LoaderConfig, TrajectoryIterator, TtyrecVersion

__version__ = "0.1.0"

__all__ = ["BoundBatch", "Dataset", "open_dataset", "FIELDS", "V1_FIELDS"]

FIELDS = ("tty_chars", "tty_colors", "tty_cursor", "timestamps",
          "done", "gameids", "keypresses", "scores")

# Version 1 recordings carry no keypress or score channel, so those
# fields are dropped rather than emitted as all-zero placeholders.
V1_FIELDS = tuple(f for f in FIELDS if f not in ("keypresses", "scores"))


class BoundBatch(dict):
    """One [batch, time] slab as a plain mapping of numpy arrays."""

    __slots__ = ()

    @property
    def batch_size(self) -> int:
        return self["done"].shape[0]

    @property
    def seq_length(self) -> int:
        return self["done"].shape[1]


class Dataset:
    """Iterable of BoundBatch over one cataloged dataset.

    Arrays are writable copies owned by the caller; pass copy=False to
    receive the loader's own arrays (one less copy per batch, but the
    caller must not hold them across iterations it intends to compare).
    Use from a single consumer thread; decoding still parallelizes
    across `workers` processes inside the loader.
    """

    def __init__(self, catalog_path: "str | Path", dataset_name: str, *,
                 batch_size: int = 32, seq_length: int = 32,
                 rows: int = 24, cols: int = 80, workers: int = 1,
                 shuffle: bool = False, loop_forever: bool = False,
                 seed: "int | None" = None,
                 gameids: "Sequence[int] | None" = None,
                 where: "str | None" = None, params: Sequence = (),
                 copy: bool = True) -> None:
        path = Path(catalog_path)
        if not path.exists():
            raise FileNotFoundError(f"no catalog at {path}")
        self._catalog = Catalog(path)
        try:
            version = self._catalog.dataset_version(dataset_name)
            config = LoaderConfig(
                dataset_name, batch_size=batch_size, seq_length=seq_length,
                rows=rows, cols=cols, workers=workers, shuffle=shuffle,
                loop_forever=loop_forever, seed=seed, gameids=gameids,
                where=where, params=params)
            self._iter = TrajectoryIterator(self._catalog, config)
        except BaseException:
            self._catalog.close()
            raise
        self._fields = FIELDS if version is TtyrecVersion.V3 else V1_FIELDS
        self._copy = copy

    @property
    def fields(self) -> tuple:
        """Field names each batch will contain, in emission order."""
        return self._fields

    @property
    def seed(self) -> int:
        """Shuffle seed in effect (drawn at open when not supplied)."""
        return self._iter.seed

    @property
    def gameids(self) -> "list[int]":
        """Episodes selected for streaming, in selection order."""
        return self._iter.gameids

    def __iter__(self) -> "Dataset":
        return self

    def __next__(self) -> BoundBatch:
        batch = next(self._iter)
        if self._copy:
            return BoundBatch(
                (f, np.copy(getattr(batch, f))) for f in self._fields)
        return BoundBatch((f, getattr(batch, f)) for f in self._fields)

    def close(self) -> None:
        self._iter.close()
        self._catalog.close()

    def __enter__(self) -> "Dataset":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_dataset(catalog_path: "str | Path", dataset_name: str, *,
                 batch_size: int = 32, seq_length: int = 32,
                 rows: int = 24, cols: int = 80, workers: int = 1,
                 shuffle: bool = False, loop_forever: bool = False,
                 seed: "int | None" = None,
                 gameids: "Sequence[int] | None" = None,
                 where: "str | None" = None, params: Sequence = (),
                 copy: bool = True) -> Dataset:
    """Open a cataloged dataset as an iterable of BoundBatch mappings.

    Mirrors the ttystream loader configuration; errors (UnknownDataset,
    bad configuration values) propagate from there unchanged.
    """
    return Dataset(catalog_path, dataset_name, batch_size=batch_size,
                   seq_length=seq_length, rows=rows, cols=cols,
                   workers=workers, shuffle=shuffle,
                   loop_forever=loop_forever, seed=seed, gameids=gameids,
                   where=where, params=params, copy=copy)
