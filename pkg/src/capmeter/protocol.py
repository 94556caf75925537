"""Monte-Carlo estimation of the average held-out energy curve.

The measurement plan is bootstrap x fold x seed: for each sample size N,
draw ``n_boots`` bootstrap datasets of N rows (with replacement), split
each into ``k_folds`` disjoint folds by a seeded shuffle, and train
``m_seeds`` models per fold on the complementary folds.  Each trained
model contributes one record: the summed held-out negative log-likelihood
over its fold and the fold size.  Records aggregate into an
:class:`EnergyCurve` with one point per N.

Per-example NLL values are clamped to [0, 50] before summing so a single
degenerate prediction cannot dominate a record; clamp events are counted
and reported.  All randomness derives from the config's master seed, so
the whole pipeline is a pure function of (dataset, config).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DuplicateKey,
    EmptyGroup,
    InvalidArgument,
    InvariantViolation,
    NonFinite,
    ParseError,
    TrainingFailure,
)

RECORD_HEADER = "dataset_id,sample_size,boot_index,fold_index,seed_index,nll_sum,heldout_count"

# Clamp range for a single held-out NLL term.
NLL_CLAMP_LO = 0.0
NLL_CLAMP_HI = 50.0


@dataclass(frozen=True)
class EnergyRecord:
    """One trained model's held-out measurement."""

    dataset_id: str
    sample_size: int
    boot_index: int
    fold_index: int
    seed_index: int
    nll_sum: float
    heldout_count: int

    def __post_init__(self):
        if self.sample_size < 2:
            raise InvariantViolation(f"sample_size must be >= 2, got {self.sample_size}")
        if min(self.boot_index, self.fold_index, self.seed_index) < 0:
            raise InvariantViolation("indices must be non-negative")
        if self.heldout_count < 1:
            raise InvariantViolation(f"heldout_count must be >= 1, got {self.heldout_count}")
        if not np.isfinite(self.nll_sum):
            raise NonFinite(f"nll_sum not finite: {self.nll_sum}")


@dataclass(frozen=True)
class ProtocolConfig:
    """Plan shape: bootstraps x folds x seeds over an N grid."""

    n_grid: tuple
    master_seed: int = 0
    n_boots: int = 4
    k_folds: int = 5
    m_seeds: int = 5

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if len(grid) == 0:
            raise ConfigError("n_grid must be non-empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"n_grid must be strictly increasing, got {grid}")
        if self.n_boots < 1 or self.m_seeds < 1:
            raise ConfigError("n_boots and m_seeds must be >= 1")
        if self.k_folds < 2:
            raise ConfigError(f"k_folds must be >= 2, got {self.k_folds}")
        if grid[0] < self.k_folds:
            raise ConfigError(
                f"every N must be >= k_folds={self.k_folds}, got N={grid[0]}")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")


def default_n_grid(lo: int = 50, hi: int = 5000, count: int = 12) -> tuple:
    """Log-spaced integer N grid, deduplicated."""
    return tuple(int(v) for v in
                 np.unique(np.round(np.geomspace(lo, hi, count)).astype(int)))


@dataclass(frozen=True)
class Job:
    """One model to train: indices plus the rows it sees."""

    sample_size: int
    boot_index: int
    fold_index: int
    seed_index: int
    seed: int
    train_rows: np.ndarray
    heldout_rows: np.ndarray


@dataclass(frozen=True)
class EnergyCurve:
    """Averaged energy per sample size, with uncertainty.

    ``scale`` records what the underlying per-example quantity was:
    "nll" for negative log-likelihood curves, "probability-complement"
    for sampler-based curves.  The two are never mixed.
    """

    n: np.ndarray
    u_mean: np.ndarray
    u_stderr: np.ndarray
    record_count: np.ndarray
    scale: str = "nll"

    def __post_init__(self):
        n = np.asarray(self.n, dtype=np.int64)
        u = np.asarray(self.u_mean, dtype=np.float64)
        se = np.asarray(self.u_stderr, dtype=np.float64)
        rc = np.asarray(self.record_count, dtype=np.int64)
        if not (n.size == u.size == se.size == rc.size):
            raise InvalidArgument("curve arrays must share one length")
        if n.size == 0:
            raise InvalidArgument("curve must have at least one point")
        if np.any(np.diff(n) <= 0):
            raise InvalidArgument("curve N values must be strictly increasing")
        if not np.all(np.isfinite(u)):
            raise NonFinite("curve u_mean must be finite")
        if np.any(se < 0.0) or not np.all(np.isfinite(se)):
            raise InvalidArgument("curve u_stderr must be finite and >= 0")
        for name, arr in (("n", n), ("u_mean", u), ("u_stderr", se),
                          ("record_count", rc)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return int(self.n.size)

    @property
    def points(self):
        return list(zip(self.n.tolist(), self.u_mean.tolist(),
                        self.u_stderr.tolist(), self.record_count.tolist()))


def derive_seed(*parts: int) -> int:
    """Deterministic 64-bit seed from a tuple of non-negative integers."""
    ss = np.random.SeedSequence(list(parts))
    return int(ss.generate_state(1, np.uint64)[0])


def derive_rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(parts)))


# stream tags so bootstrap draws and job seeds never collide
_STREAM_BOOT = 1
_STREAM_JOB = 2


def plan_experiment(config: ProtocolConfig, dataset_size: int) -> list:
    """Expand the config into the full deterministic job list.

    Each bootstrap draws N rows with replacement, then a seeded shuffle
    partitions the draw into folds whose sizes differ by at most one.
    Duplicated rows may land in both a train and a heldout fold of the
    same bootstrap; folds still partition the multiset.
    """
    dataset_size = int(dataset_size)
    if dataset_size < config.k_folds:
        raise ConfigError(
            f"dataset size {dataset_size} below k_folds {config.k_folds}")
    if max(config.n_grid) > dataset_size:
        raise ConfigError(
            f"n_grid maximum {max(config.n_grid)} exceeds dataset size {dataset_size}")
    jobs = []
    for n in config.n_grid:
        for i in range(config.n_boots):
            rng = derive_rng(config.master_seed, _STREAM_BOOT, n, i)
            sample = rng.integers(0, dataset_size, size=n)
            perm = rng.permutation(n)
            base, extra = divmod(n, config.k_folds)
            start = 0
            for j in range(config.k_folds):
                size = base + (1 if j < extra else 0)
                fold_pos = perm[start:start + size]
                start += size
                mask = np.ones(n, dtype=bool)
                mask[fold_pos] = False
                train = sample[mask]
                heldout = sample[fold_pos]
                train.setflags(write=False)
                heldout.setflags(write=False)
                for l in range(config.m_seeds):
                    seed = derive_seed(config.master_seed, _STREAM_JOB, n, i, j, l)
                    jobs.append(Job(n, i, j, l, seed, train, heldout))
    return jobs


def clamped_nll_terms(raw_nll: np.ndarray) -> tuple:
    """Clamp per-example NLL terms to [0, 50]; returns (terms, clamp_events)."""
    raw = np.asarray(raw_nll, dtype=np.float64)
    clamped = np.clip(raw, NLL_CLAMP_LO, NLL_CLAMP_HI)
    # NaN survives clip; surface it to the caller unchanged
    events = int(np.count_nonzero(clamped != raw))
    return clamped, events


def evaluate_job(dataset, learner, job: Job, dataset_id: str) -> tuple:
    """Train one model and measure it on its heldout fold.

    Returns (EnergyRecord, clamp_events).
    """
    model = learner.fit(dataset, job.train_rows, job.seed)
    raw = model.nll_terms(dataset, job.heldout_rows)
    terms, events = clamped_nll_terms(raw)
    record = EnergyRecord(dataset_id, job.sample_size, job.boot_index,
                          job.fold_index, job.seed_index,
                          float(np.sum(terms)), int(job.heldout_rows.size))
    return record, events


@dataclass(frozen=True)
class RunResult:
    records: list
    clamp_events: int


def run_protocol(dataset, learner, config: ProtocolConfig,
                 dataset_id: str = "data", workers: int = 1) -> RunResult:
    """Plan, train, and collect records for the whole grid.

    Jobs are independent; ``workers`` > 1 runs them on a thread pool.
    Output order and content do not depend on the worker count.
    """
    jobs = plan_experiment(config, dataset.n_rows)
    if workers <= 1:
        results = [evaluate_job(dataset, learner, job, dataset_id) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda job: evaluate_job(dataset, learner, job, dataset_id), jobs))
    records = [rec for rec, _ in results]
    clamps = sum(ev for _, ev in results)
    return RunResult(records, clamps)


def estimate_avg_energy(records, expected_n=None, scale: str = "nll") -> EnergyCurve:
    """Aggregate records into the energy curve.

    One replicate is one (boot, seed) pair pooled over its folds:
    ``sum(nll_sum) / sum(heldout_count)``.  The point mean is the average
    over replicates and the uncertainty is the standard error across
    replicate means (zero for a single replicate).

    Args:
        records: EnergyRecord list for a single dataset_id.
        expected_n: optional iterable of N that must all be present.

    Raises:
        EmptyGroup: no records at all, or a requested N missing.
        NonFinite: a record with non-finite nll_sum.
        InvalidArgument: records span multiple dataset ids.
    """
    records = list(records)
    if not records:
        raise EmptyGroup("no records to aggregate")
    ids = {r.dataset_id for r in records}
    if len(ids) > 1:
        raise InvalidArgument(
            f"records span multiple dataset ids {sorted(ids)}; filter first")
    by_n: dict = {}
    for rec in records:
        if not np.isfinite(rec.nll_sum):
            raise NonFinite(f"record {rec} has non-finite nll_sum")
        by_n.setdefault(rec.sample_size, {}).setdefault(
            (rec.boot_index, rec.seed_index), []).append(rec)
    if expected_n is not None:
        for n in expected_n:
            if int(n) not in by_n:
                raise EmptyGroup(f"no records at N={int(n)}")
    ns = sorted(by_n)
    means, errs, counts = [], [], []
    for n in ns:
        reps = by_n[n]
        rep_means = []
        for key in sorted(reps):
            group = reps[key]
            total = sum(r.nll_sum for r in group)
            count = sum(r.heldout_count for r in group)
            rep_means.append(total / count)
        rep_means = np.asarray(rep_means)
        means.append(float(np.mean(rep_means)))
        if rep_means.size > 1:
            errs.append(float(np.std(rep_means, ddof=1) / np.sqrt(rep_means.size)))
        else:
            errs.append(0.0)
        counts.append(sum(len(g) for g in reps.values()))
    return EnergyCurve(np.array(ns), np.array(means), np.array(errs),
                       np.array(counts), scale=scale)


def loocv_avg_energy(learner, dataset, seed: int = 0) -> float:
    """Leave-one-out estimate of the average energy.

    Trains one model per row on the other N-1 rows and averages the
    clamped held-out NLL of the left-out row.  Cost is N trainings, so
    keep N small (<= 200 or so).
    """
    n = dataset.n_rows
    if n < 2:
        raise InvalidArgument("leave-one-out needs at least 2 rows")
    all_rows = np.arange(n)
    total = 0.0
    for i in range(n):
        rows = np.delete(all_rows, i)
        try:
            model = learner.fit(dataset, rows, seed)
        except TrainingFailure as exc:
            raise TrainingFailure(f"leave-one-out fit failed at row {i}: {exc}") from exc
        raw = model.nll_terms(dataset, np.array([i]))
        terms, _ = clamped_nll_terms(raw)
        total += float(terms[0])
    return total / n


# ---------------------------------------------------------------------------
# record files
# ---------------------------------------------------------------------------

def write_records(path, records, comments=()) -> None:
    """Write records as CSV; '#' comment lines go before the header."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(RECORD_HEADER + "\n")
        for r in records:
            fh.write(f"{r.dataset_id},{r.sample_size},{r.boot_index},"
                     f"{r.fold_index},{r.seed_index},{float(r.nll_sum)!r},"
                     f"{r.heldout_count}\n")


def ingest_records(path) -> list:
    """Parse a record file, validating structure and uniqueness.

    Raises:
        ParseError: malformed line/field, with line and column.
        InvariantViolation: invalid field values (e.g. heldout_count 0).
        DuplicateKey: repeated (dataset, N, boot, fold, seed) tuple.
    """
    records = []
    seen = set()
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                continue
            if not header_seen:
                if line != RECORD_HEADER:
                    raise ParseError(
                        f"expected header {RECORD_HEADER!r}", lineno)
                header_seen = True
                continue
            fields = line.split(",")
            if len(fields) != 7:
                raise ParseError(f"expected 7 fields, got {len(fields)}", lineno)
            try:
                dataset_id = fields[0]
                sample_size = int(fields[1])
                boot = int(fields[2])
                fold = int(fields[3])
                seed_idx = int(fields[4])
            except ValueError as exc:
                raise ParseError(f"bad integer field: {exc}", lineno, column=2) from None
            try:
                nll_sum = float(fields[5])
            except ValueError:
                raise ParseError(f"bad nll_sum {fields[5]!r}", lineno, column=6) from None
            try:
                heldout = int(fields[6])
            except ValueError:
                raise ParseError(f"bad heldout_count {fields[6]!r}", lineno,
                                 column=7) from None
            key = (dataset_id, sample_size, boot, fold, seed_idx)
            if key in seen:
                raise DuplicateKey(f"duplicate record key {key} at line {lineno}")
            seen.add(key)
            try:
                rec = EnergyRecord(dataset_id, sample_size, boot, fold,
                                   seed_idx, nll_sum, heldout)
            except (InvariantViolation, NonFinite) as exc:
                raise InvariantViolation(f"line {lineno}: {exc}") from None
            records.append(rec)
    if not header_seen:
        raise ParseError("missing record header", 1)
    return records
