"""
corpus.py - Transaction corpora: loading, splitting, statistics and the toy dataset

Input files hold one basket per line as whitespace-separated non-negative
integer item ids. Item ids are remapped to dense indices [0, M) in ascending
id order. A corpus can be written to and read back from a canonical
directory (catalog.tsv, baskets.txt, splits.txt, all line-aligned).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.errors import CorpusError, InvalidInputError
from app.core.kernel import Basket
from app.core.rng import make_rng
from app.services.negatives import EmpiricalStats

logger = logging.getLogger(__name__)

CATALOG_FILE = "catalog.tsv"
BASKETS_FILE = "baskets.txt"
SPLITS_FILE = "splits.txt"

DEFAULT_TEST_FRACTION = 0.2
DEFAULT_VALIDATION_FRACTION = 0.1

TOY_BASKETS = ((1, 2), (3, 4))
TOY_COPIES = 1000


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "val"
    TEST = "test"


@dataclass(frozen=True)
class Provenance:
    """Where a corpus came from and what filtering did to it."""

    source: str
    raw_baskets: int = 0
    raw_items: int = 0
    deduplicated: int = 0
    clipped: int = 0
    dropped: int = 0

    def to_dict(self) -> Dict[str, Union[str, int]]:
        return {
            "source": self.source,
            "raw_baskets": self.raw_baskets,
            "raw_items": self.raw_items,
            "deduplicated": self.deduplicated,
            "clipped": self.clipped,
            "dropped": self.dropped,
        }


@dataclass(frozen=True, eq=False)
class Corpus:
    """
    Catalog, baskets and their split assignment.

    catalog[d] is the original id of dense index d. stats are computed on the
    training split only.
    """

    catalog: Tuple[int, ...]
    baskets: Tuple[Basket, ...]
    splits: Tuple[Split, ...]
    stats: EmpiricalStats
    provenance: Provenance = field(default_factory=lambda: Provenance(source="memory"))

    @property
    def num_items(self) -> int:
        return len(self.catalog)

    @cached_property
    def _index(self) -> Dict[int, int]:
        return {original: dense for dense, original in enumerate(self.catalog)}

    def _select(self, split: Split) -> List[Basket]:
        return [b for b, s in zip(self.baskets, self.splits) if s is split]

    @cached_property
    def train(self) -> List[Basket]:
        return self._select(Split.TRAIN)

    @cached_property
    def validation(self) -> List[Basket]:
        return self._select(Split.VALIDATION)

    @cached_property
    def test(self) -> List[Basket]:
        return self._select(Split.TEST)

    def dense_index(self, original_id: int) -> int:
        try:
            return self._index[int(original_id)]
        except KeyError:
            raise InvalidInputError(f"item id {original_id} is not in the catalog")

    def original_ids(self, items: Iterable[int]) -> List[int]:
        return [self.catalog[i] for i in items]

    def summary(self) -> Dict[str, Union[str, int]]:
        return {
            "num_items": self.num_items,
            "baskets": len(self.baskets),
            "train": len(self.train),
            "validation": len(self.validation),
            "test": len(self.test),
            "max_basket_size": infer_rank(self),
            **self.provenance.to_dict(),
        }


def compute_stats(train_baskets: Sequence[Basket], num_items: int) -> EmpiricalStats:
    """Singleton, pair and occurrence statistics of the training baskets."""
    if not train_baskets:
        raise CorpusError("training split is empty")
    return EmpiricalStats.from_baskets(train_baskets, num_items)


def infer_rank(corpus: Corpus) -> int:
    """Largest basket size over every split."""
    return max(len(b) for b in corpus.baskets)


def assign_splits(
    count: int,
    rng: np.random.Generator,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION,
) -> Tuple[Split, ...]:
    """
    Seeded split assignment.

    test_fraction of the baskets go to test; validation_fraction of the
    remainder go to validation; the rest train.
    """
    if not 0.0 <= test_fraction < 1.0:
        raise InvalidInputError(f"test fraction must be in [0, 1), got {test_fraction}")
    if not 0.0 <= validation_fraction < 1.0:
        raise InvalidInputError(f"validation fraction must be in [0, 1), got {validation_fraction}")
    num_test = int(round(test_fraction * count))
    num_validation = int(round(validation_fraction * (count - num_test)))
    order = rng.permutation(count)
    splits = [Split.TRAIN] * count
    for position in order[:num_test]:
        splits[position] = Split.TEST
    for position in order[num_test:num_test + num_validation]:
        splits[position] = Split.VALIDATION
    return tuple(splits)


def build_corpus(
    raw_baskets: Sequence[Sequence[int]],
    rng: np.random.Generator,
    source: str = "memory",
    max_size: Optional[int] = None,
    min_size: int = 2,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION,
    max_items: Optional[int] = None,
) -> Corpus:
    """
    Turn raw id baskets into a Corpus: dedupe, drop, clip, remap, split, count.

    Args:
        raw_baskets: Baskets of original item ids, duplicates allowed
        rng: Stream used for clipping and then for the split
        source: Label recorded in the provenance
        max_size: Baskets larger than this keep a random subset of this size
        min_size: Baskets smaller than this (after dedupe) are dropped
        test_fraction: Share of baskets assigned to test
        validation_fraction: Share of the non-test baskets assigned to validation
        max_items: Refuse catalogs larger than this

    Returns:
        Corpus with dense indices and training statistics
    """
    if max_size is not None and max_size < min_size:
        raise InvalidInputError(f"max_size {max_size} is below min_size {min_size}")

    deduplicated = clipped = dropped = 0
    raw_items = set()
    kept: List[np.ndarray] = []
    for position, raw in enumerate(raw_baskets):
        raw_items.update(raw)
        items = np.unique(np.asarray(raw, dtype=np.int64))
        if items.size < len(raw):
            deduplicated += 1
        if items.size < min_size:
            dropped += 1
            logger.debug(f"Dropped basket {position}: {items.size} items after dedupe")
            continue
        if max_size is not None and items.size > max_size:
            clipped += 1
            logger.debug(f"Clipped basket {position} from {items.size} to {max_size} items")
            items = np.sort(rng.choice(items, size=max_size, replace=False))
        kept.append(items)

    if len(kept) < 2:
        raise CorpusError(f"need at least 2 usable baskets, got {len(kept)}")

    catalog = np.unique(np.concatenate(kept))
    if max_items is not None and catalog.size > max_items:
        raise CorpusError(f"catalog has {catalog.size} items, more than the limit of {max_items}")
    baskets = tuple(Basket(tuple(np.searchsorted(catalog, items).tolist())) for items in kept)
    splits = assign_splits(len(baskets), rng, test_fraction, validation_fraction)
    train = [b for b, s in zip(baskets, splits) if s is Split.TRAIN]

    provenance = Provenance(
        source=source,
        raw_baskets=len(raw_baskets),
        raw_items=len(raw_items),
        deduplicated=deduplicated,
        clipped=clipped,
        dropped=dropped,
    )
    logger.info(
        f"Corpus {source}: {len(baskets)} baskets over {catalog.size} items "
        f"({deduplicated} deduplicated, {clipped} clipped, {dropped} dropped)"
    )
    return Corpus(
        catalog=tuple(int(i) for i in catalog),
        baskets=baskets,
        splits=splits,
        stats=compute_stats(train, int(catalog.size)),
        provenance=provenance,
    )


def read_transactions(path: Union[str, Path]) -> List[List[int]]:
    """Parse a transaction file into lists of original item ids."""
    path = Path(path)
    raw: List[List[int]] = []
    with path.open("rb") as handle:
        for line_number, data in enumerate(handle, start=1):
            try:
                line = data.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CorpusError(f"invalid UTF-8 at byte {exc.start}", line_number=line_number)
            tokens = line.split()
            if not tokens:
                continue
            try:
                items = [int(token) for token in tokens]
            except ValueError:
                raise CorpusError(f"not an integer item id in {line.strip()!r}", line_number=line_number)
            if min(items) < 0:
                raise CorpusError(f"negative item id {min(items)}", line_number=line_number)
            raw.append(items)
    if not raw:
        raise CorpusError(f"{path} contains no baskets")
    return raw


def load_transactions(
    path: Union[str, Path],
    max_size: Optional[int] = None,
    min_size: int = 2,
    rng: Optional[np.random.Generator] = None,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION,
    max_items: Optional[int] = None,
) -> Corpus:
    """Load a whitespace-separated transaction file. See build_corpus for the pipeline."""
    rng = rng if rng is not None else make_rng(0)
    return build_corpus(
        read_transactions(path),
        rng,
        source=str(path),
        max_size=max_size,
        min_size=min_size,
        test_fraction=test_fraction,
        validation_fraction=validation_fraction,
        max_items=max_items,
    )


def toy_corpus(
    rng: np.random.Generator,
    copies: int = TOY_COPIES,
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION,
) -> Corpus:
    """Baskets {1, 2} and {3, 4}, each replicated `copies` times, split 80/20."""
    raw = [list(basket) for basket in TOY_BASKETS for _ in range(copies)]
    return build_corpus(
        raw,
        rng,
        source="toy",
        test_fraction=0.2,
        validation_fraction=validation_fraction,
    )


def save_corpus(corpus: Corpus, directory: Union[str, Path]) -> Path:
    """Write the canonical three-file layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / CATALOG_FILE).write_text(
        "".join(f"{dense}\t{original}\n" for dense, original in enumerate(corpus.catalog)),
        encoding="utf-8",
    )
    (directory / BASKETS_FILE).write_text(
        "".join(" ".join(str(i) for i in basket) + "\n" for basket in corpus.baskets),
        encoding="utf-8",
    )
    (directory / SPLITS_FILE).write_text(
        "".join(f"{split.value}\n" for split in corpus.splits), encoding="utf-8"
    )
    logger.info(f"Saved corpus with {len(corpus.baskets)} baskets to {directory}")
    return directory


def load_corpus(directory: Union[str, Path]) -> Corpus:
    """Read a corpus written by save_corpus; statistics are recomputed from the train split."""
    directory = Path(directory)
    for name in (CATALOG_FILE, BASKETS_FILE, SPLITS_FILE):
        if not (directory / name).exists():
            raise CorpusError(f"{directory} is missing {name}")

    catalog: List[int] = []
    for line_number, line in enumerate((directory / CATALOG_FILE).read_text(encoding="utf-8").splitlines(), 1):
        try:
            dense, original = (int(part) for part in line.split("\t"))
        except ValueError:
            raise CorpusError(f"expected 'index<TAB>id' in {CATALOG_FILE}", line_number=line_number)
        if dense != len(catalog):
            raise CorpusError(f"catalog index {dense} out of order", line_number=line_number)
        catalog.append(original)

    basket_lines = (directory / BASKETS_FILE).read_text(encoding="utf-8").splitlines()
    split_lines = (directory / SPLITS_FILE).read_text(encoding="utf-8").splitlines()
    if len(basket_lines) != len(split_lines):
        raise CorpusError(f"{BASKETS_FILE} and {SPLITS_FILE} are not line-aligned")

    baskets: List[Basket] = []
    splits: List[Split] = []
    for line_number, (basket_line, split_line) in enumerate(zip(basket_lines, split_lines), 1):
        try:
            basket = Basket(tuple(int(i) for i in basket_line.split()))
            basket.validate(len(catalog))
            splits.append(Split(split_line.strip()))
        except (ValueError, InvalidInputError) as exc:
            raise CorpusError(str(exc), line_number=line_number)
        baskets.append(basket)

    train = [b for b, s in zip(baskets, splits) if s is Split.TRAIN]
    return Corpus(
        catalog=tuple(catalog),
        baskets=tuple(baskets),
        splits=tuple(splits),
        stats=compute_stats(train, len(catalog)),
        provenance=Provenance(source=str(directory), raw_baskets=len(baskets), raw_items=len(catalog)),
    )


def resolve_corpus(
    data: str,
    rng: np.random.Generator,
    max_size: Optional[int] = None,
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION,
) -> Corpus:
    """`toy`, a canonical corpus directory, or a transaction file."""
    if data == "toy":
        return toy_corpus(rng, validation_fraction=validation_fraction)
    path = Path(data)
    if path.is_dir():
        return load_corpus(path)
    if not path.exists():
        raise FileNotFoundError(2, "No such file or directory", str(path))
    return load_transactions(path, max_size=max_size, rng=rng, validation_fraction=validation_fraction)
