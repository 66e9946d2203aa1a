"""Pool event log: swap and mint/burn records, CSV round-trip, validation.

Schema (exact header, RFC-4180, UTF-8, UNIX-second timestamps):

    ts,kind,side,amount_y,exec_rate,fee_x,pool_depth,rate_after,wallet,tick_lower,tick_upper,position_depth

Swap rows fill side..rate_after and leave the LP columns empty; mint/burn
rows fill wallet..position_depth and leave the swap columns empty.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import SchemaError

__all__ = ["HEADER", "COLUMNS", "EventLog"]

HEADER = (
    "ts,kind,side,amount_y,exec_rate,fee_x,pool_depth,rate_after,"
    "wallet,tick_lower,tick_upper,position_depth"
)
COLUMNS = HEADER.split(",")
_KINDS = ("swap", "mint", "burn")
_SIDES = ("buy", "sell")
_SWAP_COLS = ("side", "amount_y", "exec_rate", "fee_x", "pool_depth", "rate_after")
_LP_COLS = ("wallet", "tick_lower", "tick_upper", "position_depth")


@dataclass
class EventLog:
    """Column-oriented event log; float columns hold NaN where not applicable."""

    ts: np.ndarray
    kind: np.ndarray
    side: np.ndarray
    amount_y: np.ndarray
    exec_rate: np.ndarray
    fee_x: np.ndarray
    pool_depth: np.ndarray
    rate_after: np.ndarray
    wallet: np.ndarray
    tick_lower: np.ndarray
    tick_upper: np.ndarray
    position_depth: np.ndarray

    def __len__(self) -> int:
        return len(self.ts)

    @property
    def swap_idx(self) -> np.ndarray:
        return np.flatnonzero(self.kind == "swap")

    @property
    def mint_idx(self) -> np.ndarray:
        return np.flatnonzero(self.kind == "mint")

    @property
    def burn_idx(self) -> np.ndarray:
        return np.flatnonzero(self.kind == "burn")

    @classmethod
    def from_rows(cls, rows: list[dict]) -> "EventLog":
        """Build a log from dict rows carrying the schema column names."""
        n = len(rows)
        out = cls(
            ts=np.zeros(n, dtype=np.int64),
            kind=np.empty(n, dtype=object),
            side=np.empty(n, dtype=object),
            amount_y=np.full(n, math.nan),
            exec_rate=np.full(n, math.nan),
            fee_x=np.full(n, math.nan),
            pool_depth=np.full(n, math.nan),
            rate_after=np.full(n, math.nan),
            wallet=np.empty(n, dtype=object),
            tick_lower=np.full(n, math.nan),
            tick_upper=np.full(n, math.nan),
            position_depth=np.full(n, math.nan),
        )
        for i, row in enumerate(rows):
            out.ts[i] = int(row["ts"])
            out.kind[i] = row["kind"]
            out.side[i] = row.get("side", "") or ""
            out.wallet[i] = row.get("wallet", "") or ""
            for col in ("amount_y", "exec_rate", "fee_x", "pool_depth", "rate_after",
                        "tick_lower", "tick_upper", "position_depth"):
                val = row.get(col, None)
                if val is not None and val != "":
                    getattr(out, col)[i] = float(val)
        return out

    @classmethod
    def read_csv(cls, path) -> "EventLog":
        """Parse and validate an event CSV; SchemaError names the first bad line."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError("file is empty", line=1) from None
            if header != COLUMNS:
                raise SchemaError(
                    f"header must be exactly {HEADER!r}, got {','.join(header)!r}", line=1
                )
            raw = list(reader)

        n = len(raw)
        log = cls(
            ts=np.zeros(n, dtype=np.int64),
            kind=np.empty(n, dtype=object),
            side=np.empty(n, dtype=object),
            amount_y=np.full(n, math.nan),
            exec_rate=np.full(n, math.nan),
            fee_x=np.full(n, math.nan),
            pool_depth=np.full(n, math.nan),
            rate_after=np.full(n, math.nan),
            wallet=np.empty(n, dtype=object),
            tick_lower=np.full(n, math.nan),
            tick_upper=np.full(n, math.nan),
            position_depth=np.full(n, math.nan),
        )
        for i, row in enumerate(raw):
            line = i + 2
            if len(row) != len(COLUMNS):
                raise SchemaError(f"expected {len(COLUMNS)} fields, got {len(row)}", line=line)
            rec = dict(zip(COLUMNS, row))
            try:
                log.ts[i] = int(rec["ts"])
            except ValueError:
                raise SchemaError(f"ts {rec['ts']!r} is not an integer", line=line) from None
            kind = rec["kind"]
            if kind not in _KINDS:
                raise SchemaError(f"kind {kind!r} not in {_KINDS}", line=line)
            log.kind[i] = kind
            log.side[i] = rec["side"]
            log.wallet[i] = rec["wallet"]
            if kind == "swap":
                empty = [c for c in _LP_COLS if rec[c] != ""]
                if empty:
                    raise SchemaError(f"swap row must leave {empty[0]} empty", line=line)
                if rec["side"] not in _SIDES:
                    raise SchemaError(f"side {rec['side']!r} not in {_SIDES}", line=line)
                for col in ("amount_y", "exec_rate", "fee_x", "pool_depth", "rate_after"):
                    try:
                        getattr(log, col)[i] = float(rec[col])
                    except ValueError:
                        raise SchemaError(f"{col} {rec[col]!r} is not a number", line=line) from None
            else:
                filled = [c for c in _SWAP_COLS if rec[c] != ""]
                if filled:
                    raise SchemaError(f"{kind} row must leave {filled[0]} empty", line=line)
                if rec["wallet"] == "":
                    raise SchemaError(f"{kind} row needs a wallet id", line=line)
                for col in ("tick_lower", "tick_upper", "position_depth"):
                    try:
                        getattr(log, col)[i] = float(rec[col])
                    except ValueError:
                        raise SchemaError(f"{col} {rec[col]!r} is not a number", line=line) from None
        log.validate()
        return log

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(COLUMNS)
            for i in range(len(self)):
                if self.kind[i] == "swap":
                    writer.writerow([
                        int(self.ts[i]), "swap", self.side[i],
                        repr(float(self.amount_y[i])), repr(float(self.exec_rate[i])),
                        repr(float(self.fee_x[i])), repr(float(self.pool_depth[i])),
                        repr(float(self.rate_after[i])), "", "", "", "",
                    ])
                else:
                    writer.writerow([
                        int(self.ts[i]), self.kind[i], "", "", "", "", "", "",
                        self.wallet[i],
                        repr(float(self.tick_lower[i])), repr(float(self.tick_upper[i])),
                        repr(float(self.position_depth[i])),
                    ])

    def validate(self, fee_tier: float | None = None, fee_rtol: float = 1e-6) -> None:
        """Invariant checks; SchemaError carries the first offending data line."""
        for i in range(len(self)):
            line = i + 2
            if i and self.ts[i] < self.ts[i - 1]:
                raise SchemaError("timestamps must be nondecreasing", line=line)
            if self.kind[i] == "swap":
                if not (self.exec_rate[i] > 0 and self.rate_after[i] > 0):
                    raise SchemaError("swap rates must be positive", line=line)
                if not self.pool_depth[i] > 0:
                    raise SchemaError("pool depth must be positive", line=line)
                if not self.amount_y[i] >= 0 or not self.fee_x[i] >= 0:
                    raise SchemaError("swap size and fee must be nonnegative", line=line)
                if fee_tier is not None:
                    notional = self.amount_y[i] * self.exec_rate[i]
                    if not math.isclose(self.fee_x[i], fee_tier * notional, rel_tol=fee_rtol,
                                        abs_tol=1e-12):
                        raise SchemaError(
                            f"fee {self.fee_x[i]} != fee_tier*notional {fee_tier * notional}",
                            line=line,
                        )
            else:
                if not (0 <= self.tick_lower[i] < self.tick_upper[i]):
                    raise SchemaError("need 0 <= tick_lower < tick_upper", line=line)
                if not self.position_depth[i] > 0:
                    raise SchemaError("position depth must be positive", line=line)
