"""Run telemetry, runtime invariant auditing and offline trace re-verification."""

from __future__ import annotations

import json
import math
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Iterable, TextIO

from .errors import InvariantFault, ParseError

__all__ = ["Auditor", "RunReport", "audit_trace", "load_trace"]


@dataclass
class _LawStats:
    checked: int = 0
    failed: int = 0
    worst: float = -math.inf  # max of lhs - rhs (positive means violated)
    first_failure: int | None = None


class Auditor:
    """Counts checks of named inequalities and faults on the first violation.

    ``check(name, lhs, rhs)`` asserts ``lhs <= rhs + tol``. With
    ``strict=False`` violations are only recorded.
    """

    def __init__(self, strict: bool = True):
        self.strict = strict
        self.laws: dict[str, _LawStats] = defaultdict(_LawStats)
        self.failures: list[dict[str, Any]] = []
        self._lock = threading.Lock()

    def check(self, name: str, lhs: float, rhs: float, step: int | None = None, tol: float = 0.0) -> bool:
        lhs, rhs = float(lhs), float(rhs)
        ok = lhs <= rhs + tol and not math.isnan(lhs)
        with self._lock:
            st = self.laws[name]
            st.checked += 1
            st.worst = max(st.worst, lhs - rhs)
            if not ok:
                st.failed += 1
                if st.first_failure is None:
                    st.first_failure = step
                self.failures.append({"law": name, "lhs": lhs, "rhs": rhs, "step": step})
        if not ok and self.strict:
            raise InvariantFault(name, f"{lhs!r} > {rhs!r}", step)
        return ok

    def require(self, name: str, cond: bool, step: int | None = None, detail: str = "") -> bool:
        """Record a boolean law; faults (when strict) with ``detail``."""
        with self._lock:
            st = self.laws[name]
            st.checked += 1
            if not cond:
                st.failed += 1
                if st.first_failure is None:
                    st.first_failure = step
                self.failures.append({"law": name, "detail": detail, "step": step})
        if not cond and self.strict:
            raise InvariantFault(name, detail or "condition false", step)
        return bool(cond)

    def summary(self) -> dict[str, dict[str, Any]]:
        return {
            k: {"checked": v.checked, "failed": v.failed, "worst_excess": v.worst, "first_failure": v.first_failure}
            for k, v in sorted(self.laws.items())
        }

    @property
    def ok(self) -> bool:
        return all(v.failed == 0 for v in self.laws.values())


class RunReport:
    """Per-iteration records, events, audit summary and results of one run.

    Appends are thread-safe. ``stream`` (a text file) receives each record as
    a JSON line as soon as it is appended; ``close`` writes the summary line.
    Entries of ``context`` (for example the index of the current solve) are
    stamped onto every record.
    """

    def __init__(self, mode: str = "", params: dict | None = None, stream: TextIO | None = None,
                 auditor: Auditor | None = None):
        self.mode = mode
        self.params = dict(params or {})
        self.stats: dict[str, Any] = {}
        self.iterations: list[dict[str, Any]] = []
        self.events: list[dict[str, Any]] = []
        self.results: dict[str, Any] = {}
        self.timings: dict[str, float] = {}
        self.auditor = auditor or Auditor()
        self.context: dict[str, Any] = {}
        self._lock = threading.Lock()
        self._stream = stream
        self._t0 = time.perf_counter()
        if stream is not None:
            self._emit({"type": "header", "mode": mode, "params": self.params})

    def _emit(self, rec: dict[str, Any]) -> None:
        if self._stream is not None:
            self._stream.write(json.dumps(rec, default=_jsonable) + "\n")

    def iteration(self, **rec: Any) -> None:
        rec = {"type": "iteration", **self.context, **rec}
        with self._lock:
            self.iterations.append(rec)
            self._emit(rec)

    def event(self, kind: str, **rec: Any) -> None:
        rec = {"type": "event", "event": kind, **self.context, **rec}
        with self._lock:
            self.events.append(rec)
            self._emit(rec)

    def count(self, kind: str) -> int:
        return sum(1 for e in self.events if e["event"] == kind)

    def summary(self) -> dict[str, Any]:
        self.timings.setdefault("wall", time.perf_counter() - self._t0)
        return {
            "type": "summary",
            "mode": self.mode,
            "params": self.params,
            "stats": self.stats,
            "audit": self.auditor.summary(),
            "failures": self.auditor.failures,
            "results": self.results,
            "timings": self.timings,
        }

    def close(self) -> dict[str, Any]:
        s = self.summary()
        with self._lock:
            self._emit(s)
        return s

    def lines(self) -> Iterable[str]:
        yield json.dumps({"type": "header", "mode": self.mode, "params": self.params}, default=_jsonable)
        for rec in self.iterations:
            yield json.dumps(rec, default=_jsonable)
        for rec in self.events:
            yield json.dumps(rec, default=_jsonable)
        yield json.dumps(self.summary(), default=_jsonable)

    def write(self, path: str) -> None:
        with open(path, "w") as fh:
            for line in self.lines():
                fh.write(line + "\n")


def _jsonable(o: Any) -> Any:
    try:
        import numpy as np

        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
    except ImportError:  # pragma: no cover
        pass
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def load_trace(path_or_lines) -> tuple[dict, list[dict], list[dict], dict | None]:
    """Split a JSON-lines trace into (header, iterations, events, summary)."""
    if isinstance(path_or_lines, str):
        with open(path_or_lines) as fh:
            raw = fh.read().splitlines()
    else:
        raw = list(path_or_lines)
    header: dict = {}
    its: list[dict] = []
    evs: list[dict] = []
    summary = None
    for i, line in enumerate(raw, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {i}: {exc}") from None
        if not isinstance(rec, dict) or "type" not in rec:
            raise ParseError(f"line {i}: record without a type")
        kind = rec["type"]
        if kind == "header":
            header = rec
        elif kind == "iteration":
            its.append(rec)
        elif kind == "event":
            evs.append(rec)
        elif kind == "summary":
            summary = rec
        else:
            raise ParseError(f"line {i}: unknown record type {kind!r}")
    return header, its, evs, summary


def audit_trace(path_or_lines) -> dict[str, dict[str, int]]:
    """Recheck logged inequalities from raw trace values.

    Every iteration record carries the quantities it was checked against
    (``mu_hat``, ``mu_prev``, ``delta``, ``centrality``, ``energy``,
    ``m_hat``, ...), so the checks here do not trust any logged verdict.
    The upper end of the energy chain counts ``arc_copies`` arcs when the
    record has them (auxiliary arcs carry multiplicities).
    Returns ``{law: {"checked": n, "failed": k}}``.
    """
    header, its, evs, _ = load_trace(path_or_lines)
    params = header.get("params", {})
    out: dict[str, dict[str, int]] = defaultdict(lambda: {"checked": 0, "failed": 0})

    def rec(name: str, ok: bool) -> None:
        out[name]["checked"] += 1
        out[name]["failed"] += 0 if ok else 1

    try:
        g_hat = float(params.get("gamma_hat", 1 / 400))
        c_e = float(params.get("c_E", 256))
        for r in its:
            mu, m_hat = float(r["mu_hat"]), float(r["m_hat"])
            rec("centrality", float(r["centrality"]) <= g_hat * mu * (1 + 1e-8) + 1e-15)
            if r.get("mu_prev") is not None and r.get("delta") is not None:
                rec("mu-progress", mu <= (1 - float(r["delta"])) * float(r["mu_prev"]) + 1e-9)
            if r.get("energy") is not None and r.get("energy_mu") is not None:
                e, emu = float(r["energy"]), float(r["energy_mu"])
                rec("energy-sandwich", m_hat * emu / c_e <= e * (1 + 1e-9) and e <= c_e * m_hat * emu * (1 + 1e-9))
                if r.get("energy_primal") is not None:
                    ep = float(r["energy_primal"])
                    copies = float(r.get("arc_copies", m_hat))
                    rec("energy-chain", e <= ep * (1 + 1e-9) and ep <= 4 * copies * emu * (1 + 1e-9))
            if r.get("sum_nu") is not None:
                rec("measure-total", float(r["sum_nu"]) <= 4 * m_hat * (1 + 1e-12))
        phases: dict[Any, dict[str, Any]] = defaultdict(lambda: {"boosts": 0, "ts": None})
        for ev in evs:
            kind = ev.get("event")
            if kind == "boost":
                th = float(ev["theta"])
                rec("boost-energy-increase",
                    float(ev["energy_after"]) >= (1 + th * th * float(params.get("c_incr", 1 / 36))) * float(ev["energy_before"]) * (1 - 1e-9))
                ph = phases[(ev.get("solve"), ev.get("phase"))]
                ph["boosts"] += 1
                ph["ts"] = float(ev["T_s"])
            elif kind == "phase":
                ph = phases[(ev.get("solve"), ev.get("phase"))]
                ph["ts"] = float(ev["T_s"]) if "T_s" in ev else ph["ts"]
                if not ev.get("truncated", False):
                    rec("phase-progress", float(ev["mu_end"]) <= float(ev["lambda_hat"]) * float(ev["mu_start"]) * (1 + 1e-12))
            elif kind == "progress" and ev.get("energy_next") is not None:
                th, m_hat = float(ev["theta"]), float(ev["m_hat"])
                rec("progress-energy-decrease",
                    float(ev["energy_next"]) * (1 + float(params.get("c_decr", 8)) * th * th * math.log(m_hat)) >= float(ev["energy"]) * (1 - 1e-9))
        for ph in phases.values():
            if ph["ts"] is not None:
                rec("boost-count", ph["boosts"] <= ph["ts"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed trace: {exc}") from None
    return dict(out)
