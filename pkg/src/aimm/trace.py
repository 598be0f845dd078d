"""Chain history shared by every sampler, plus CSV / JSON export."""

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .mixture import GaussianMixture


def fmt(v):
    """Float formatting used by every CSV writer: 17 significant digits."""
    return "%.17g" % v


@dataclass
class Trace:
    """Full history of one chain.

    ``states`` holds X_1..X_n (the initial state X_0 is kept separately in
    ``initial_state``); every per-iteration series has length n.
    ``log_weights_at_proposals`` holds log importance weights for
    independence samplers and NaN for random-walk samplers.
    """

    sampler: str
    initial_state: np.ndarray
    states: np.ndarray
    proposal_points: np.ndarray
    accept_flags: np.ndarray
    log_weights_at_proposals: np.ndarray
    log_target_at_proposals: np.ndarray
    component_count_series: np.ndarray
    log_threshold_series: np.ndarray
    increment_iterations: list = field(default_factory=list)
    wall_time_seconds: float = 0.0
    seed: Optional[int] = None
    config: dict = field(default_factory=dict)
    valid: bool = True
    error: Optional[str] = None
    proposal: object = None
    snapshots: "ProposalSnapshots" = field(default_factory=list)
    threshold_log: list = field(default_factory=list)

    @property
    def n_iterations(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.initial_state.shape[0]

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accept_flags)) if self.n_iterations else float("nan")

    @property
    def n_increments(self):
        return len(self.increment_iterations)

    @property
    def final_component_count(self):
        return int(self.component_count_series[-1]) if self.n_iterations else 0

    # export ---------------------------------------------------------------

    def csv_header(self):
        d = self.dim
        return (["iteration"] + [f"x{j}" for j in range(d)] + [f"proposal{j}" for j in range(d)]
                + ["accepted", "log_weight", "log_target", "n_components"])

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        for i in range(self.n_iterations):
            w.writerow([i] + [fmt(v) for v in self.states[i]] + [fmt(v) for v in self.proposal_points[i]]
                       + [int(self.accept_flags[i]), fmt(self.log_weights_at_proposals[i]),
                          fmt(self.log_target_at_proposals[i]), int(self.component_count_series[i])])
        text = buf.getvalue()
        if path is not None:
            atomic_write(path, text)
        return text

    def summary(self, include_wall_time=True):
        doc = {
            "sampler": self.sampler,
            "seed": self.seed,
            "config": self.config,
            "dim": self.dim,
            "iterations": self.n_iterations,
            "acceptance_rate": self.acceptance_rate,
            "n_increments": self.n_increments,
            "increment_iterations": [int(i) for i in self.increment_iterations],
            "final_component_count": self.final_component_count,
            "threshold_log": [[int(i), float(w)] for i, w in self.threshold_log],
            "valid": self.valid,
            "error": self.error,
        }
        if include_wall_time:
            doc["wall_time_seconds"] = self.wall_time_seconds
        return doc


def read_trace_csv(path):
    """Rebuild the chain columns of a trace CSV (as written by :meth:`Trace.to_csv`)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("x") and h[1:].isdigit())
    data = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    states = data[:, 1:1 + d]
    init = states[0] if len(states) else np.zeros(d)
    return Trace(
        sampler="unknown",
        initial_state=init,
        states=states,
        proposal_points=data[:, 1 + d:1 + 2 * d],
        accept_flags=data[:, 1 + 2 * d].astype(bool),
        log_weights_at_proposals=data[:, 2 + 2 * d],
        log_target_at_proposals=data[:, 3 + 2 * d],
        component_count_series=data[:, 4 + 2 * d].astype(np.int64),
        log_threshold_series=np.full(len(body), np.nan),
    )


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, doc):
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


class ProposalSnapshots:
    """The proposal in force after every increment, rebuilt on demand.

    Every component ever added is kept once in ``history``; snapshot ``k`` is
    the window ``history[start:stop]`` on top of the shared defensive kernel,
    so storage stays linear in the number of increments. Iterating yields
    ``(iteration, proposal)`` pairs, with iteration -1 for the initial proposal.
    """

    def __init__(self, base, history, index):
        self.base = base
        self.history = history
        self.index = [(int(i), int(a), int(b)) for i, a, b in index]

    def __len__(self):
        return len(self.index)

    def proposal(self, k):
        i, a, b = self.index[k]
        return replace(self.base, mixture=self.history.window(a, b), generation=b)

    def __getitem__(self, k):
        return self.index[k][0], self.proposal(k)

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def to_dict(self):
        return {"history": replace(self.base, mixture=self.history).to_dict(),
                "snapshots": [list(t) for t in self.index]}


class TraceRecorder:
    """Preallocated buffers filled by the samplers, turned into a :class:`Trace` at the end."""

    def __init__(self, sampler, n, initial_state):
        d = initial_state.shape[0]
        self.sampler = sampler
        self.initial_state = np.array(initial_state, dtype=np.float64)
        self.n = 0
        self.states = np.empty((n, d))
        self.proposals = np.empty((n, d))
        self.accepted = np.zeros(n, dtype=bool)
        self.log_w = np.full(n, np.nan)
        self.log_pi = np.full(n, np.nan)
        self.n_comp = np.zeros(n, dtype=np.int64)
        self.log_thr = np.full(n, np.nan)
        self.increments = []
        self.threshold_log = []
        self.snapshots = []
        self.added = []

    def record_snapshot(self, iteration, proposal, new_component=None):
        """Remember the proposal in force from ``iteration`` on (see :class:`ProposalSnapshots`)."""
        if new_component is not None:
            self.added.append(new_component)
        stop = len(self.added)
        self.snapshots.append((iteration, stop - proposal.n_components, stop))

    def record_block(self, states, proposals, accepted, log_pi, log_w=None, n_comp=0, log_thr=np.nan):
        m = states.shape[0]
        s = slice(self.n, self.n + m)
        self.states[s] = states
        self.proposals[s] = proposals
        self.accepted[s] = accepted
        self.log_pi[s] = log_pi
        if log_w is not None:
            self.log_w[s] = log_w
        self.n_comp[s] = n_comp
        self.log_thr[s] = log_thr
        self.n += m

    def finish(self, wall_time, **meta):
        n = self.n
        return Trace(
            sampler=self.sampler,
            initial_state=self.initial_state,
            states=self.states[:n],
            proposal_points=self.proposals[:n],
            accept_flags=self.accepted[:n],
            log_weights_at_proposals=self.log_w[:n],
            log_target_at_proposals=self.log_pi[:n],
            component_count_series=self.n_comp[:n],
            log_threshold_series=self.log_thr[:n],
            increment_iterations=list(self.increments),
            wall_time_seconds=wall_time,
            threshold_log=list(self.threshold_log),
            snapshots=self._snapshots(meta.get("proposal")),
            **meta,
        )

    def _snapshots(self, proposal):
        if not self.snapshots or proposal is None:
            return []
        history = GaussianMixture.from_components([c for c, _ in self.added], [w for _, w in self.added],
                                                  dim=proposal.dim)
        return ProposalSnapshots(proposal, history, self.snapshots)
