"""Episode construction and the sparse replay schedule.

A meta-training episode is ``m`` support batches from the stream plus one
query batch. Every ``R_F``-th episode the query is sampled from memory
instead of the stream, sized so that roughly ``r * R_I`` stored examples are
replayed after each window of ``R_I`` stream examples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .numerics import InputError

STREAM = "STREAM"
MEMORY = "MEMORY"


def replay_frequency(replay_interval: int, batch_size: int, support_size: int) -> int:
    """Episodes between memory-sourced queries: ceil((R_I/b + 1)/(m + 1))."""
    if replay_interval <= 0 or batch_size <= 0 or support_size <= 0:
        raise InputError("schedule values must be positive")
    if replay_interval < batch_size:
        raise InputError("replay interval must be at least one batch")
    return math.ceil((replay_interval / batch_size + 1) / (support_size + 1))


@dataclass(frozen=True)
class ReplaySchedule:
    batch_size: int
    support_size: int          # m support batches per episode
    replay_interval: int       # R_I, in examples
    replay_rate: float         # r, fraction of R_I drawn at each replay

    def __post_init__(self):
        if not 0.0 <= self.replay_rate <= 1.0:
            raise InputError("replay rate must be in [0, 1]")
        if self.support_size < 1:
            raise InputError("support size must be >= 1")
        replay_frequency(self.replay_interval, self.batch_size, self.support_size)
        if self.replay_batch_size < 1:
            raise InputError("replay batch size floor(r * R_I) must be >= 1")

    @property
    def frequency(self) -> int:
        return replay_frequency(self.replay_interval, self.batch_size, self.support_size)

    @property
    def replay_batch_size(self) -> int:
        return math.floor(self.replay_rate * self.replay_interval)

    @property
    def baseline_frequency(self) -> int:
        """Optimizer steps between replays for non-episodic learners: ceil(R_I/b)."""
        return math.ceil(self.replay_interval / self.batch_size)


@dataclass
class Episode:
    """Support batches plus one query batch and the query's provenance.

    ``query`` is None only on a degenerate stream tail (a single leftover
    batch), in which case the outer update is skipped. Task-id fields exist
    for diagnostics and memory tagging; learners never branch on them.
    """

    index: int
    support: list
    query: object | None
    query_source: str
    support_task_ids: list = field(default_factory=list)
    query_task_id: int | None = None
    replay_skipped: bool = False  # replay was due but memory was empty


def next_episode(stream_iter, memory, schedule: ReplaySchedule, index: int,
                 allow_replay: bool = True) -> Episode | None:
    """Build episode ``index`` (1-based) from the stream, or None at stream end.

    ``stream_iter`` yields (batch, task_id) pairs. On a memory-sourced query
    the stream is not advanced for the query. If the stream ends mid-support,
    the last collected batch becomes the query; a lone final batch yields an
    episode with no query.
    """
    support, tids = [], []
    for _ in range(schedule.support_size):
        try:
            batch, tid = next(stream_iter)
        except StopIteration:
            break
        support.append(batch)
        tids.append(tid)
    if not support:
        return None

    replay_due = allow_replay and index % schedule.frequency == 0
    if replay_due and len(memory) > 0:
        query = memory.sample(schedule.replay_batch_size)
        return Episode(index, support, query, MEMORY, tids)

    try:
        query, qtid = next(stream_iter)
        return Episode(index, support, query, STREAM, tids, qtid,
                       replay_skipped=replay_due)
    except StopIteration:
        if len(support) >= 2:
            query, qtid = support.pop(), tids.pop()
            return Episode(index, support, query, STREAM, tids, qtid,
                           replay_skipped=replay_due)
        return Episode(index, support, None, STREAM, tids, replay_skipped=replay_due)


def meta_test_episode(memory, test_batch, support_size: int, batch_size: int,
                      finetune: bool = True) -> Episode:
    """Meta-test episode: m batches of memory samples, query = full test set.

    With fine-tuning disabled the support is empty and evaluation happens at
    the trained parameters directly.
    """
    if not finetune:
        return Episode(0, [], test_batch, STREAM)
    if len(memory) == 0:
        raise InputError("meta-test fine-tuning needs a non-empty memory")
    drawn = memory.sample(support_size * batch_size)
    n = len(drawn)
    per = max(1, math.ceil(n / support_size))
    support = [drawn.__class__(*(f[s : s + per] for f in _batch_fields(drawn)))
               for s in range(0, n, per)]
    return Episode(0, support, test_batch, STREAM)


def _batch_fields(batch):
    # Batch and CandidateBatch are both two-field frozen dataclasses whose
    # fields slice positionally in parallel.
    import dataclasses

    return [getattr(batch, f.name) for f in dataclasses.fields(batch)]
