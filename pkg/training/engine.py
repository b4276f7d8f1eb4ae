"""
TRAINING ENGINE
Drives M simulated replicas in lockstep through the DiLoCo outer loop
(every H steps, whole model) or the streaming variant (one fragment at a
time, optionally overlapped by tau steps and compressed on the wire).

Inner steps of different replicas may run on a thread pool; everything that
mixes replicas (all-reduce, outer step, merge) happens afterwards in replica
order, so results do not depend on the thread count.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np

from core.errors import CodecError, NumericalError, SchedulingError, StructuralError
from core.logger import PerformanceLogger, get_logger
from core.seeds import sub_seed
from core.settings import get_settings
from .codec import Codec, make_codec
from .config import EvalMode, TrainConfig, TrainMode
from .metrics import MetricsLog, MetricsRow, SyncRound
from .model import Batch, ResidualNet, SyntheticTask
from .optim import (
    AdamHyperParams,
    AdamState,
    NesterovHyperParams,
    NesterovState,
    adamw_step,
    apply_outer,
    nesterov_direction,
)
from .paramspace import FragmentLayout, ParamVector, assign_offsets, partition
from .schedule import SyncCalendar, build_calendar

logger = get_logger(__name__)


# ============================================================================
# State
# ============================================================================


@dataclass
class ReplicaState:
    id: int
    params: ParamVector
    adam: AdamState
    shard: int


@dataclass
class InFlight:
    send_step: int
    delta: np.ndarray
    direction: np.ndarray
    merged: Set[int] = field(default_factory=set)


@dataclass
class FragmentSyncState:
    """Per-fragment bookkeeping of the streaming outer loop.

    prev_snapshot[m] is the outer base for replica m: the outer result of the
    last round it merged (the initial parameters before any merge). Deltas and
    the outer step of the round in flight are both taken against it.
    """

    fragment: int
    prev_snapshot: List[np.ndarray]
    nesterov: NesterovState
    in_flight: Optional[InFlight] = None
    last_outer: List[Optional[np.ndarray]] = field(default_factory=list)
    pending_bytes: List[int] = field(default_factory=list)
    advances: int = 0

    @classmethod
    def start(cls, fragment: int, replicas: Sequence[ReplicaState], layout: FragmentLayout):
        snaps = [layout.gather(r.params.data, fragment).copy() for r in replicas]
        return cls(
            fragment=fragment,
            prev_snapshot=snaps,
            nesterov=NesterovState.zeros(layout.size(fragment), dtype=snaps[0].dtype),
            last_outer=[None] * len(replicas),
            pending_bytes=[0] * len(replicas),
        )


@dataclass
class TrainingResult:
    metrics: MetricsLog
    final_params: ParamVector
    replicas: List[ReplicaState]
    calendar: Optional[SyncCalendar]
    layout: FragmentLayout


# ============================================================================
# Protocol operations
# ============================================================================


def compute_delta(sync: FragmentSyncState, replica: ReplicaState, layout: FragmentLayout) -> np.ndarray:
    """Outer gradient theta_base - theta_now (points against the descent direction)."""
    base = sync.prev_snapshot[replica.id]
    if base is None:
        raise SchedulingError(
            "no outer base snapshot for fragment", replica=replica.id, fragment=sync.fragment
        )
    return base - layout.gather(replica.params.data, sync.fragment)


def all_reduce_mean(
    deltas: Sequence[np.ndarray], codec: Codec, seeds: Optional[Sequence] = None
) -> Tuple[np.ndarray, List[int]]:
    """Encode/decode each replica's delta, accumulate in replica order, divide by M."""
    if not deltas:
        raise StructuralError("all-reduce over zero replicas")
    n = deltas[0].size
    acc = np.zeros(n, dtype=deltas[0].dtype)
    sizes = []
    for m, delta in enumerate(deltas):
        if delta.size != n:
            raise StructuralError(f"replica {m} sent {delta.size} values, expected {n}")
        seed = seeds[m] if seeds is not None else None
        try:
            sent = codec.transmit(delta, seed=seed)
        except CodecError as exc:
            exc.replica = m
            exc.context["replica"] = m
            raise
        acc += sent.decoded
        sizes.append(sent.nbytes)
    return acc / acc.dtype.type(len(deltas)), sizes


def merge_fragment(local: np.ndarray, merged: np.ndarray, alpha: float) -> np.ndarray:
    if alpha == 0.0:
        return merged.copy()
    if alpha == 1.0:
        return local.copy()
    a = local.dtype.type(alpha)
    return a * local + (local.dtype.type(1) - a) * merged


def receive_and_merge(
    sync: FragmentSyncState,
    replica: ReplicaState,
    layout: FragmentLayout,
    alpha: float,
    outer_hp: NesterovHyperParams,
    step: int,
) -> np.ndarray:
    """theta <- alpha * theta + (1 - alpha) * OuterOpt(base, mean delta)."""
    round_ = sync.in_flight
    if round_ is None:
        raise SchedulingError(
            "no delta in flight for fragment", step=step, replica=replica.id, fragment=sync.fragment
        )
    m = replica.id
    if m in round_.merged:
        raise SchedulingError(
            "replica already merged this round", step=step, replica=m, fragment=sync.fragment
        )
    outer = apply_outer(sync.prev_snapshot[m], round_.direction, outer_hp)
    local = layout.gather(replica.params.data, sync.fragment)
    layout.scatter(replica.params.data, sync.fragment, merge_fragment(local, outer, alpha))
    sync.last_outer[m] = outer
    sync.prev_snapshot[m] = outer.copy()
    round_.merged.add(m)
    return outer


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise StructuralError(f"cannot compare vectors of length {a.size} and {b.size}")
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _pairwise_cosine(deltas: Sequence[np.ndarray], mask: np.ndarray) -> Optional[float]:
    if len(deltas) < 2 or not mask.any():
        return None
    sims = [cosine_similarity(deltas[i][mask], deltas[j][mask])
            for i, j in combinations(range(len(deltas)), 2)]
    return float(sum(sims) / len(sims))


def evaluation_params(
    mode: EvalMode,
    replica_params: Sequence[np.ndarray],
    last_outer: Sequence[Sequence[Optional[np.ndarray]]],
    layout: FragmentLayout,
) -> Tuple[np.ndarray, bool]:
    """Flat parameters to evaluate for a mode, and whether OuterParams fell back."""
    mode = EvalMode(mode)
    if mode is EvalMode.FIRST_REPLICA:
        return replica_params[0], False

    acc = np.zeros_like(replica_params[0])
    for data in replica_params:
        acc += data
    average = acc / acc.dtype.type(len(replica_params))
    if mode is EvalMode.REPLICA_AVERAGE:
        return average, False

    out = average.copy()
    fell_back = False
    for p, outers in enumerate(last_outer):
        if any(o is None for o in outers):
            fell_back = True
            continue
        frag = np.zeros_like(outers[0])
        for o in outers:
            frag += o
        layout.scatter(out, p, frag / frag.dtype.type(len(outers)))
    return out, fell_back


def evaluate(
    mode: EvalMode,
    states: Sequence[ReplicaState],
    syncs: Sequence[FragmentSyncState],
    layout: FragmentLayout,
    net: ResidualNet,
    eval_set: Batch,
) -> Tuple[float, bool]:
    data, fell_back = evaluation_params(
        mode, [s.params.data for s in states], [s.last_outer for s in syncs], layout
    )
    return net.forward_loss(states[0].params.with_data(data), eval_set), fell_back


# ============================================================================
# Engine
# ============================================================================


def build_codec(config: TrainConfig) -> Codec:
    kind = config.effective_codec
    if kind == "topk":
        return make_codec(kind, keep_fraction=config.codec.keep_fraction)
    if kind == "random_drop":
        return make_codec(kind, drop_prob=config.codec.drop_prob, rescale=config.codec.rescale)
    return make_codec(kind)



class TrainingEngine:
    """Lockstep simulation of M replicas for one TrainConfig"""

    def __init__(self, config: TrainConfig, worker_threads: Optional[int] = None):
        self.config = config
        self.mode = config.mode
        self.threads = worker_threads or config.worker_threads or get_settings().worker_threads

        mc = config.model
        self.net = ResidualNet(mc.d_in, mc.d_hidden, mc.d_out, mc.num_blocks, config.precision)
        self.task = SyntheticTask(
            self.net,
            seed=config.seed,
            batch_size=config.task.batch_size,
            noise_std=config.task.noise_std,
            eval_size=config.task.eval_size,
        )
        self.inner_hp = AdamHyperParams(**config.inner.model_dump())
        self.outer_hp = NesterovHyperParams(**config.outer.model_dump())
        self.codec = build_codec(config)

        if self.mode is TrainMode.DATA_PARALLEL:
            self.num_replicas, self.batch_multiplier = 1, config.M
        else:
            self.num_replicas, self.batch_multiplier = config.M, 1

        init = self.task.student_init()
        self.replicas = [
            ReplicaState(
                id=m,
                params=init.copy(),
                adam=AdamState.zeros(len(init), dtype=init.dtype),
                shard=0 if config.task.identical_shards else m,
            )
            for m in range(self.num_replicas)
        ]

        H = config.H
        spec = partition(mc.num_blocks, config.effective_fragment_size, config.pattern)
        if self.mode is not TrainMode.DATA_PARALLEL:
            spec = assign_offsets(spec, H)
        self.spec = spec
        self.layout = FragmentLayout.build(spec, init, self.net.block_names, embedding_block="W_in")
        self.calendar = (
            None
            if self.mode is TrainMode.DATA_PARALLEL
            else build_calendar(spec, config.T, H, config.effective_taus)
        )
        self.syncs = [
            FragmentSyncState.start(p, self.replicas, self.layout) for p in range(spec.num_fragments)
        ]
        # DiLoCo keeps a single global outer copy
        self.outer_params = init.data.copy()
        self.outer_state = NesterovState.zeros(len(init), dtype=init.dtype)
        self.metrics = MetricsLog()

    # ---------------------------------------------------------------- inner

    def _trainable_mask(self, step: int) -> Optional[np.ndarray]:
        if not self.config.freeze_fedpart or self.calendar is None:
            return None
        active = self.calendar.next_send_fragment(step)
        return self.layout.mask_for([active], len(self.replicas[0].params))

    def inner_step(self, replica: ReplicaState, step: int, trainable: Optional[np.ndarray]) -> Tuple[ReplicaState, float]:
        batch = self.task.batch(replica.shard, step, self.batch_multiplier)
        loss, grad = self.net.loss_and_grad(replica.params, batch)
        if not np.isfinite(loss):
            raise NumericalError("non-finite training loss", step=step, replica=replica.id)
        try:
            data, adam = adamw_step(
                replica.params.data, grad.data, replica.adam, self.inner_hp, trainable, step=step
            )
        except NumericalError as exc:
            exc.replica = replica.id
            exc.context["replica"] = replica.id
            raise
        return ReplicaState(replica.id, replica.params.with_data(data), adam, replica.shard), loss

    def _run_inner(self, pool: Optional[ThreadPoolExecutor], step: int) -> float:
        trainable = self._trainable_mask(step)
        if pool is None:
            results = [self.inner_step(r, step, trainable) for r in self.replicas]
        else:
            results = list(pool.map(lambda r: self.inner_step(r, step, trainable), self.replicas))
        self.replicas = [r for r, _ in results]
        return float(np.mean([loss for _, loss in results]))

    # ---------------------------------------------------------------- outer

    def _codec_seeds(self, step: int, fragment: int):
        return [sub_seed(self.config.seed, "codec", step, fragment, m) for m in range(self.num_replicas)]

    def _reduce(self, step: int, fragment: int, deltas) -> Tuple[np.ndarray, List[int]]:
        try:
            return all_reduce_mean(deltas, self.codec, self._codec_seeds(step, fragment))
        except CodecError as exc:
            if not exc.non_finite:
                raise
            raise NumericalError(
                "non-finite outer gradient", step=step, replica=exc.replica, fragment=fragment
            ) from exc

    def _book_round(self, step: int, fragment: int, deltas, sizes) -> None:
        sent = int(sum(sizes))
        block_bytes = 0
        block_count = self.layout.block_counts[fragment]
        per_block = self.codec.wire_size(block_count)
        if per_block is not None:
            block_bytes = per_block * len(sizes)
        self.metrics.add_bytes(step, sent, block_bytes)
        emb = self.layout.embedding_mask[fragment]
        self.metrics.sync_rounds.append(
            SyncRound(
                step=step,
                fragment=fragment,
                bytes_sent=sent,
                cos_sim_rest=_pairwise_cosine(deltas, ~emb),
                cos_sim_win=_pairwise_cosine(deltas, emb),
            )
        )

    def _send(self, step: int, p: int) -> None:
        sync = self.syncs[p]
        if sync.in_flight is not None:
            raise SchedulingError("fragment sent while a previous round is in flight", step=step, fragment=p)
        deltas = [compute_delta(sync, r, self.layout) for r in self.replicas]
        avg, sizes = self._reduce(step, p, deltas)
        direction, sync.nesterov = nesterov_direction(avg, sync.nesterov, self.outer_hp)
        sync.advances += 1
        self.metrics.momentum_advances[p] = sync.advances
        sync.in_flight = InFlight(step, avg, direction)
        sync.pending_bytes = list(sizes)
        self._book_round(step, p, deltas, sizes)
        logger.debug("fragment sent", step=step, fragment=p, bytes=int(sum(sizes)))

    def _streaming_step(self, step: int) -> None:
        cal = self.calendar
        sent = cal.sends_at(step)
        for p in sent:
            self._send(step, p)

        for r in self.replicas:
            for p, send_step in cal.receives_at(r.id, step):
                sync = self.syncs[p]
                if sync.in_flight is None or sync.in_flight.send_step != send_step:
                    raise SchedulingError(
                        "receive without matching send", step=step, replica=r.id, fragment=p
                    )
                receive_and_merge(sync, r, self.layout, self.config.alpha, self.outer_hp, step)

        for sync in self.syncs:
            if sync.in_flight is not None and len(sync.in_flight.merged) == self.num_replicas:
                sync.in_flight = None
                sync.pending_bytes = [0] * self.num_replicas

    def _diloco_step(self, step: int) -> None:
        """Whole-model outer step every H inner steps, shared outer parameters."""
        H = self.config.H
        if step % H != 0:
            return
        deltas = [self.outer_params - r.params.data for r in self.replicas]
        avg, sizes = self._reduce(step, 0, deltas)
        direction, self.outer_state = nesterov_direction(avg, self.outer_state, self.outer_hp)
        self.outer_params = apply_outer(self.outer_params, direction, self.outer_hp)
        self.metrics.momentum_advances[0] = self.metrics.momentum_advances.get(0, 0) + 1
        for r in self.replicas:
            r.params = r.params.with_data(self.outer_params.copy())
        for m in range(self.num_replicas):
            self.syncs[0].last_outer[m] = self.layout.gather(self.outer_params, 0)
        self._book_round(step, 0, [self.layout.gather(d, 0) for d in deltas], sizes)

    def _data_parallel_bytes(self, step: int) -> None:
        n = len(self.replicas[0].params)
        full = 4 * n * self.config.M
        blocks = 4 * sum(self.layout.block_counts) * self.config.M
        self.metrics.add_bytes(step, full, blocks)

    # ----------------------------------------------------------------- eval

    def evaluate(self, mode: EvalMode) -> Tuple[float, bool]:
        if self.mode is TrainMode.DATA_PARALLEL:
            mode = EvalMode.FIRST_REPLICA
        return evaluate(mode, self.replicas, self.syncs, self.layout, self.net, self.task.eval_set)

    def _record_row(self, step: int, train_loss: float, last_row_step: int) -> None:
        first, _ = self.evaluate(EvalMode.FIRST_REPLICA)
        avg, _ = self.evaluate(EvalMode.REPLICA_AVERAGE)
        outer, fell_back = self.evaluate(EvalMode.OUTER_PARAMS)
        if fell_back:
            message = f"outer_params evaluated with replica average for unsynced fragments at step {step}"
            self.metrics.warnings.append(message)
            logger.warning("outer params fallback", step=step)
        cos_rest, cos_win = self.metrics.cosine_between(last_row_step, step)
        row = MetricsRow(
            step=step,
            train_loss=float(train_loss),
            eval_loss_first=float(first),
            eval_loss_avg=float(avg),
            eval_loss_outer=float(outer),
            bytes_step=self.metrics.bytes_per_step.get(step, 0),
            bytes_total=self.metrics.bytes_total,
            cos_sim_rest=cos_rest,
            cos_sim_win=cos_win,
            outer_fallback=fell_back,
        )
        self.metrics.rows.append(row)
        logger.info("eval", step=step, train_loss=row.train_loss, eval_loss_outer=row.eval_loss_outer)

    # ------------------------------------------------------------------ run

    def run(self) -> TrainingResult:
        cfg = self.config
        with PerformanceLogger(
            logger,
            "training run",
            mode=self.mode.value,
            M=cfg.M,
            T=cfg.T,
            H=cfg.H,
            fragments=self.spec.num_fragments,
            codec=self.codec.kind,
        ):
            pool = ThreadPoolExecutor(max_workers=self.threads) if self.threads > 1 else None
            try:
                last_row_step = 0
                for step in range(1, cfg.T + 1):
                    started = time.perf_counter()
                    train_loss = self._run_inner(pool, step)
                    if self.mode is TrainMode.DATA_PARALLEL:
                        self._data_parallel_bytes(step)
                    elif self.mode is TrainMode.DILOCO:
                        self._diloco_step(step)
                    else:
                        self._streaming_step(step)
                    self.metrics.step_seconds.append(time.perf_counter() - started)
                    if step % cfg.eval.interval == 0 or step == cfg.T:
                        self._record_row(step, train_loss, last_row_step)
                        last_row_step = step
            finally:
                if pool is not None:
                    pool.shutdown(wait=True)

        for sync in self.syncs:
            if sync.in_flight is not None:
                raise SchedulingError("training ended with a delta in flight", fragment=sync.fragment)

        final, _ = evaluation_params(
            EvalMode.REPLICA_AVERAGE,
            [r.params.data for r in self.replicas],
            [s.last_outer for s in self.syncs],
            self.layout,
        )
        return TrainingResult(
            metrics=self.metrics,
            final_params=self.replicas[0].params.with_data(final),
            replicas=self.replicas,
            calendar=self.calendar,
            layout=self.layout,
        )


def run_training(config: TrainConfig, worker_threads: Optional[int] = None) -> TrainingResult:
    return TrainingEngine(config, worker_threads=worker_threads).run()
