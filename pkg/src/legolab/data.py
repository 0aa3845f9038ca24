"""Vocabulary, tokenization and dataset materialization.

A sentence of n clauses maps to exactly 5n+2 token ids:
[BOS] + (lhs, '=', op, rhs, ';') per clause + [EOS].
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chains import ALPHABET, Chain, parse_sentence, render_sentence, sample_chain
from .groups import GroupSpec, LegoError, get_group

PAD, CLS, SEP, BOS, EOS = "[PAD]", "[CLS]", "[SEP]", "[BOS]", "[EOS]"


class DatasetError(LegoError):
    """Dataset generation constraint violated."""


@dataclass(frozen=True)
class Vocab:
    token_to_id: dict[str, int]

    @classmethod
    def for_group(cls, group: GroupSpec) -> "Vocab":
        symbols = [PAD, CLS, SEP, BOS, EOS, "=", ";"]
        for sym in (group.root_symbol, *group.set_elements, *group.elements,
                    *ALPHABET):
            if sym not in symbols:
                symbols.append(sym)
        return cls(token_to_id={s: i for i, s in enumerate(symbols)})

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __getitem__(self, token: str) -> int:
        if token not in self.token_to_id:
            raise LegoError(f"out-of-vocabulary symbol: {token!r}")
        return self.token_to_id[token]

    @property
    def id_to_token(self) -> dict[int, str]:
        return {i: t for t, i in self.token_to_id.items()}

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def cls_id(self) -> int:
        return self.token_to_id[CLS]

    @property
    def sep_id(self) -> int:
        return self.token_to_id[SEP]


@dataclass
class TokenSequence:
    ids: list[int]                 # length 5n+2
    clause_anchors: list[int]      # first token of each clause, in chain order
    labels: list[int]              # class index per chain position
    n_tr: int

    @property
    def n(self) -> int:
        return len(self.clause_anchors)


def chain_tokens(chain: Chain) -> list[str]:
    tokens = [BOS]
    for clause in chain.surface_clauses():
        tokens += [clause.lhs, "=", clause.op, clause.rhs, ";"]
    tokens.append(EOS)
    return tokens


def tokenize(text: str, vocab: Vocab, n_tr: int,
             group: GroupSpec) -> TokenSequence:
    """Convert a sentence to ids plus chain-ordered anchors and labels."""
    chain = parse_sentence(text, group)
    if n_tr < 1 or n_tr > chain.n:
        raise LegoError(f"n_tr must lie in [1, {chain.n}], got {n_tr}")
    ids = [vocab[t] for t in chain_tokens(chain)]
    assert len(ids) == 5 * chain.n + 2
    # surface slot of chain clause i, then its lhs token position
    surface_slot = [0] * chain.n
    for slot, chain_idx in enumerate(chain.sentence_order):
        surface_slot[chain_idx] = slot
    anchors = [1 + 5 * surface_slot[i] for i in range(chain.n)]
    class_index = {x: k for k, x in enumerate(group.set_elements)}
    labels = [class_index[y] for y in chain.assignments]
    return TokenSequence(ids=ids, clause_anchors=anchors, labels=labels,
                         n_tr=n_tr)


def sentence_capacity(n: int, group: GroupSpec) -> int:
    """Number of distinct sentences of n clauses."""
    variables = math.perm(len(ALPHABET), n)
    return variables * len(group.elements) ** n * math.factorial(n)


def _record(chain: Chain, seed_index: int) -> dict:
    return {
        "n": chain.n,
        "sentence": render_sentence(chain),
        "chain_vars": chain.chain_vars(),
        "labels": list(chain.assignments),
        "seed_index": seed_index,
    }


def generate_dataset(n: int, group: GroupSpec, seed: int,
                     train_path: str | Path, test_path: str | Path,
                     count_train: int | None = None,
                     count_test: int | None = None) -> tuple[int, int]:
    """Write train/test JSONL splits with no sentence overlap between them."""
    count_train = 10_000 * n if count_train is None else count_train
    count_test = 1_000 * n if count_test is None else count_test
    if count_train <= 0 or count_test <= 0:
        raise DatasetError("split sizes must be positive")
    if count_train + count_test > sentence_capacity(n, group):
        raise DatasetError("requested counts exceed distinct-sentence capacity")

    rng = random.Random(seed)
    train_sentences = set()
    records_train = []
    for i in range(count_train):
        chain = sample_chain(n, group, rng)
        records_train.append(_record(chain, i))
        train_sentences.add(records_train[-1]["sentence"])

    records_test = []
    attempts = 0
    max_attempts = 1000 * count_test
    while len(records_test) < count_test:
        attempts += 1
        if attempts > max_attempts:
            raise DatasetError("could not sample a disjoint test split")
        chain = sample_chain(n, group, rng)
        rec = _record(chain, count_train + len(records_test))
        if rec["sentence"] in train_sentences:
            continue
        records_test.append(rec)

    for path, records in ((train_path, records_train),
                          (test_path, records_test)):
        with open(path, "w") as f:
            for rec in records:
                f.write(json.dumps(rec) + "\n")
    return count_train, count_test


def load_dataset(path: str | Path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def encode_dataset(records: list[dict], vocab: Vocab, group: GroupSpec,
                   n_tr: int) -> dict[str, np.ndarray]:
    """Pack JSONL records into dense id/anchor/label arrays."""
    if not records:
        raise DatasetError("empty dataset")
    n = records[0]["n"]
    ids = np.empty((len(records), 5 * n + 2), dtype=np.int64)
    anchors = np.empty((len(records), n), dtype=np.int64)
    labels = np.empty((len(records), n), dtype=np.int64)
    for r, rec in enumerate(records):
        if rec["n"] != n:
            raise DatasetError("mixed chain lengths in one dataset")
        seq = tokenize(rec["sentence"], vocab, n_tr, group)
        ids[r] = seq.ids
        anchors[r] = seq.clause_anchors
        labels[r] = seq.labels
    return {"ids": ids, "anchors": anchors, "labels": labels}
