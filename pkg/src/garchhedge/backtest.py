"""Hedge-replication backtests on weekly option-quote panels.

The pipeline mirrors a desk workflow: load an option-quote panel and the
underlying's closing series, keep contracts that are liquid enough at
inception, fit one implied-volatility surface per quote date, filter the
conditional variance from the index returns, then walk each contract
through its quote dates rebalancing a self-financing hedge, and score the
terminal replication shortfall

    NHE = |H(S_T) - V0 - sum_i xi_i (S_{i+1} - S_i)| / V0.

The accumulation between rebalances is undiscounted by default;
``accrue_cash=True`` lets the bank-account leg earn the short rate instead.

Hedge-ratio methods
-------------------
``AdhocBS``   Black-Scholes delta at the fitted surface vol for (K, T).
``LRM``       locally risk-minimizing ratio over the next rebalance interval.
``Delta``     spot delta of the option under the pricing kernel.
``Delta-SV``  spot delta plus variance vega times the variance multiplier.
``NoHedge``   xi = 0 baseline.

The Monte Carlo methods run under the shift ("egp") and tilt ("esscher")
kernels, each with the simulation paths initialized from a starting
volatility and the innovation that the observed day-0 return implies for
it: "garch" mode starts from the filtered conditional state, "adhoc" mode
(reported with a "-Adhoc" suffix) starts from the fitted surface vol at the
contract's own (K, T), so it folds in quote information the return filter
never sees.  Only call quotes are supported -- the quote format carries no
option-type column.

Determinism
-----------
Every ensemble's seed is derived from the run seed plus the ensemble's own
content key (kernel, horizon, spot bits, variance bits, path count), so a
given (config, seed) pair produces byte-identical reports regardless of the
worker count, and identical market states are never simulated twice.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .black_scholes import adhoc_bs_delta, fit_iv_surface, implied_vol
from .engine import conditional_expectation, ensemble_under_kernel
from .errors import (
    GarchHedgeError,
    InsufficientDataError,
    InversionError,
    MissingQuoteError,
    ParamError,
)
from .hedging import call_payoff, delta_s, delta_sv, lrm_q_hedge, put_payoff
from .model import NgarchParams, filter_variance, unconditional_variance, variance_update

__all__ = [
    "QUOTE_COLUMNS",
    "MATURITY_BIN_LABELS",
    "MONEYNESS_BIN_LABELS",
    "load_quotes_csv",
    "load_index_csv",
    "filter_contracts",
    "build_surfaces",
    "garch_states",
    "ContractTrack",
    "TrackView",
    "build_tracks",
    "ReplicationResult",
    "run_replication",
    "BacktestReport",
    "bin_report",
    "run_backtest",
    "synthetic_market",
]

QUOTE_COLUMNS = (
    "quote_date",
    "expiry_date",
    "strike",
    "bid",
    "ask",
    "volume",
    "open_interest",
    "spot",
)

# inception liquidity/sanity screens
_MIN_MATURITY_DAYS = 7
_MAX_MATURITY_DAYS = 200
_MONEYNESS_LO = 0.9
_MONEYNESS_HI = 1.1
_MIN_VOLUME = 200  # strict: "more than 200"
_MIN_OPEN_INTEREST = 500  # inclusive: "at least 500"

# looser screens for the smile fit than for hedgeable contracts
_SURFACE_MONEYNESS_LO = 0.85
_SURFACE_MONEYNESS_HI = 1.20
_SURFACE_MAX_MATURITY_DAYS = 250
_SURFACE_CARRY_LIMIT_DAYS = 14

# report bins; boundary ties go to the lower bin, out-of-range contracts are
# clamped to the edge bins (flagged in the report metadata, and optionally
# excluded instead -- see bin_report)
MATURITY_BIN_LABELS = ("[7,71]", "(71,135]", "(135,199]")
_MATURITY_INNER_EDGES = (71, 135)
MONEYNESS_BIN_LABELS = (
    "[0.91,0.95]",
    "(0.95,0.99]",
    "(0.99,1.04]",
    "(1.04,1.08]",
    "(1.08,1.12]",
)
_MONEYNESS_INNER_EDGES = (0.95, 0.99, 1.04, 1.08)
_MONEYNESS_FULL_RANGE = (0.91, 1.12)
_MATURITY_FULL_RANGE = (7, 199)

_WEEK_GAP_RANGE = (5, 9)  # acceptable calendar-day spacing of quote dates

_KERNEL_CODE = {"egp": 0, "esscher": 1, "mmm": 2}


# ---------------------------------------------------------------------------
# data loading and screening
# ---------------------------------------------------------------------------


def load_quotes_csv(path) -> pd.DataFrame:
    """Read an option-quote panel (columns ``quote_date, expiry_date, strike,
    bid, ask, volume, open_interest, spot``; ISO dates)."""
    df = pd.read_csv(path)
    missing = [c for c in QUOTE_COLUMNS if c not in df.columns]
    if missing:
        raise ParamError(f"quote file {path} is missing columns {missing}")
    for c in ("quote_date", "expiry_date"):
        df[c] = pd.to_datetime(df[c])
    return df


def load_index_csv(path) -> pd.Series:
    """Read the underlying's closing series (columns ``date, close``) into a
    date-indexed float series sorted by date."""
    df = pd.read_csv(path, parse_dates=["date"])
    for c in ("date", "close"):
        if c not in df.columns:
            raise ParamError(f"index file {path} is missing column {c!r}")
    s = df.set_index("date")["close"].astype(float).sort_index()
    if not np.all(np.isfinite(s.to_numpy()) & (s.to_numpy() > 0.0)):
        raise ParamError(f"index file {path} contains non-positive or missing closes")
    return s


def filter_contracts(quotes: pd.DataFrame) -> pd.DataFrame:
    """Keep quotes eligible to open a hedge: calendar maturity in
    [7, 200] days, moneyness spot/strike in [0.9, 1.1], daily volume
    strictly above 200 and open interest of at least 500.

    Returns a copy with ``maturity_days``, ``moneyness`` and ``mid`` columns
    added.
    """
    q = quotes.copy()
    q["maturity_days"] = (q["expiry_date"] - q["quote_date"]).dt.days
    q["moneyness"] = q["spot"] / q["strike"]
    q["mid"] = 0.5 * (q["bid"] + q["ask"])
    keep = (
        (q["maturity_days"] >= _MIN_MATURITY_DAYS)
        & (q["maturity_days"] <= _MAX_MATURITY_DAYS)
        & (q["moneyness"] >= _MONEYNESS_LO)
        & (q["moneyness"] <= _MONEYNESS_HI)
        & (q["volume"] > _MIN_VOLUME)
        & (q["open_interest"] >= _MIN_OPEN_INTEREST)
    )
    return q[keep].reset_index(drop=True)


# ---------------------------------------------------------------------------
# per-date implied-vol surfaces and filtered variance states
# ---------------------------------------------------------------------------


def _index_positions(index: pd.Series) -> dict:
    return {ts: i for i, ts in enumerate(index.index)}


def build_surfaces(quotes: pd.DataFrame, index: pd.Series, r: float):
    """Fit one quadratic implied-vol surface per quote date from the quote
    mids (maturities measured in trading steps on the index calendar).

    The fit uses every quote with a positive mid, calendar maturity within
    [7, 250] days and moneyness within [0.85, 1.20] -- deliberately looser
    screens than the hedgeable-contract filter, since the smile fit can
    only gain from extra wing quotes.  Quotes whose implied vol cannot be
    inverted are dropped and counted.  A date left with fewer than six
    usable quotes reuses the most recent fitted surface up to 14 calendar
    days old (stale marks beat dropping every contract on the date); if
    none exists it lands in ``bad_dates``.

    Returns ``(surfaces, n_inversion_failures, bad_dates)``.
    """
    pos = _index_positions(index)
    idx_dates = index.index.to_numpy()
    surfaces: dict = {}
    bad_dates: dict = {}
    n_failed = 0
    day = np.timedelta64(1, "D")
    q = quotes
    if "mid" not in q.columns:
        q = q.assign(mid=0.5 * (q["bid"] + q["ask"]))
    for date, grp in q.groupby("quote_date"):
        if date not in pos:
            bad_dates[date] = "quote date absent from the index calendar"
            continue
        p0 = pos[date]
        ks, ts, vols = [], [], []
        for row in grp.itertuples():
            cal_days = (np.datetime64(row.expiry_date) - np.datetime64(date)) / day
            moneyness = row.spot / row.strike
            if not (
                row.mid > 0
                and _MIN_MATURITY_DAYS <= cal_days <= _SURFACE_MAX_MATURITY_DAYS
                and _SURFACE_MONEYNESS_LO <= moneyness <= _SURFACE_MONEYNESS_HI
            ):
                continue
            term = int(np.searchsorted(idx_dates, np.datetime64(row.expiry_date), side="right")) - 1
            steps = term - p0
            if steps < 1:
                continue
            try:
                v = implied_vol(row.mid, row.spot, row.strike, float(steps), r)
            except InversionError:
                n_failed += 1
                continue
            ks.append(row.strike)
            ts.append(float(steps))
            vols.append(v)
        try:
            surfaces[date] = fit_iv_surface(np.array(ks), np.array(ts), np.array(vols))
        except InsufficientDataError as e:
            bad_dates[date] = str(e)
    fitted = sorted(surfaces)
    for date in sorted(bad_dates):
        prior = [
            d for d in fitted
            if d < date and (np.datetime64(date) - np.datetime64(d)) / day <= _SURFACE_CARRY_LIMIT_DAYS
        ]
        if prior:
            surfaces[date] = surfaces[prior[-1]]
            del bad_dates[date]
    return surfaces, n_failed, bad_dates


def garch_states(
    params: NgarchParams, dist, index: pd.Series, var_init: float | None = None
) -> dict:
    """Map each index date to the filtered one-step-ahead conditional
    variance given returns observed up to that date.

    The filter is causal, so the value stored for date t never depends on
    later observations; the first date carries ``var_init`` (stationary
    variance by default).
    """
    closes = index.to_numpy(dtype=float)
    if closes.size < 2:
        raise ParamError("need at least two index observations to filter")
    y = np.log(closes[1:] / closes[:-1])
    res = filter_variance(params, dist, y, var_init=var_init)
    succ = np.concatenate((res.variances[1:], [res.next_var]))
    out = {index.index[0]: float(res.variances[0])}
    for ts, v in zip(index.index[1:], succ):
        out[ts] = float(v)
    return out


# ---------------------------------------------------------------------------
# contract tracks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContractTrack:
    """One contract's observable history: the rebalance dates (its quote
    dates from inception on), the spot at each plus the terminal close, the
    inception mid V0, and the trading-step geometry needed to hedge.

    ``spots`` has one more entry than ``dates`` (the terminal close);
    ``steps_to_expiry[i]`` and ``step_gaps[i]`` are trading-step counts from
    rebalance date i to expiry and to the next rebalance (or expiry).
    """

    strike: float
    expiry: pd.Timestamp
    v0: float
    dates: tuple
    spots: np.ndarray
    steps_to_expiry: np.ndarray
    step_gaps: np.ndarray
    calendar_gaps: np.ndarray
    maturity_days: int
    moneyness: float
    call: bool = True

    @property
    def contract_id(self) -> str:
        return f"{self.expiry.date()}|{self.strike:g}"

    @property
    def n_rebalances(self) -> int:
        return len(self.dates)

    def payoff(self, terminal: float) -> float:
        if self.call:
            return max(terminal - self.strike, 0.0)
        return max(self.strike - terminal, 0.0)


@dataclass(frozen=True, eq=False)
class TrackView:
    """What a hedge provider is allowed to see at one rebalance date: the
    contract terms, the current state and the history so far.  Future spots
    are deliberately not part of the view."""

    strike: float
    expiry: pd.Timestamp
    call: bool
    i: int
    date: object
    spot: float
    steps_to_expiry: int
    step_gap: int
    past_dates: tuple
    past_spots: np.ndarray


def _track_view(track: ContractTrack, i: int) -> TrackView:
    return TrackView(
        strike=track.strike,
        expiry=track.expiry,
        call=track.call,
        i=i,
        date=track.dates[i],
        spot=float(track.spots[i]),
        steps_to_expiry=int(track.steps_to_expiry[i]),
        step_gap=int(track.step_gaps[i]),
        past_dates=track.dates[: i + 1],
        past_spots=track.spots[: i + 1].copy(),
    )


def build_tracks(
    filtered: pd.DataFrame, quotes: pd.DataFrame, index: pd.Series
) -> list:
    """Assemble contract tracks: inception is each (expiry, strike)'s first
    filtered quote; rebalance dates are all its later quote dates on the
    index calendar before expiry; the terminal spot is the index close on
    the last trading day up to expiry.

    Quote-date spacing outside 5-9 calendar days triggers a single summary
    warning (the panel is expected to be weekly).
    """
    pos = _index_positions(index)
    idx_dates = index.index.to_numpy()
    closes = index.to_numpy(dtype=float)

    q = quotes
    if "mid" not in q.columns:
        q = q.assign(mid=0.5 * (q["bid"] + q["ask"]))
    tracks = []
    odd_gaps = 0
    total_gaps = 0
    for (expiry, strike), grp in filtered.groupby(["expiry_date", "strike"]):
        first = grp.sort_values("quote_date").iloc[0]
        inception = first["quote_date"]
        term_pos = int(np.searchsorted(idx_dates, np.datetime64(expiry), side="right")) - 1
        if inception not in pos:
            raise MissingQuoteError(
                f"inception date {inception.date()} is not on the index calendar"
            )
        if term_pos <= pos[inception]:
            continue

        life = q[
            (q["expiry_date"] == expiry)
            & (q["strike"] == strike)
            & (q["quote_date"] >= inception)
        ].sort_values("quote_date")
        life = life.drop_duplicates(subset="quote_date")

        dates, spots, steps_rem = [], [], []
        for row in life.itertuples():
            d = row.quote_date
            if d not in pos:
                raise MissingQuoteError(
                    f"rebalance date {d.date()} is not on the index calendar"
                )
            rem = term_pos - pos[d]
            if rem < 1:
                continue
            dates.append(d)
            spots.append(float(row.spot))
            steps_rem.append(rem)
        if not dates:
            continue

        spots.append(float(closes[term_pos]))
        steps_rem = np.asarray(steps_rem, dtype=int)
        gaps = np.diff(np.append(np.array([pos[d] for d in dates]), term_pos))
        cal = np.diff(
            np.append(
                np.array([d.to_datetime64() for d in dates]),
                idx_dates[term_pos],
            )
        ).astype("timedelta64[D]").astype(int)
        total_gaps += len(cal)
        odd_gaps += int(np.sum((cal < _WEEK_GAP_RANGE[0]) | (cal > _WEEK_GAP_RANGE[1])))

        tracks.append(
            ContractTrack(
                strike=float(strike),
                expiry=pd.Timestamp(expiry),
                v0=float(first["mid"]),
                dates=tuple(dates),
                spots=np.asarray(spots, dtype=float),
                steps_to_expiry=steps_rem,
                step_gaps=gaps.astype(int),
                calendar_gaps=cal,
                maturity_days=int(first["maturity_days"]),
                moneyness=float(first["moneyness"]),
            )
        )
    if odd_gaps:
        warnings.warn(
            f"{odd_gaps} of {total_gaps} rebalance gaps fall outside "
            f"{_WEEK_GAP_RANGE} calendar days; the panel does not look weekly",
            stacklevel=2,
        )
    return tracks


# ---------------------------------------------------------------------------
# replication
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplicationResult:
    """Outcome of replicating one contract: the normalized hedging error,
    its ingredients, and the ratios actually held."""

    nhe: float
    v0: float
    payoff: float
    terminal_wealth: float
    ratios: np.ndarray


def run_replication(
    track: ContractTrack,
    hedge_provider,
    accrue_cash: bool = False,
    r: float = 0.0,
) -> ReplicationResult:
    """Walk a contract's rebalance dates, asking ``hedge_provider`` for the
    ratio to hold until the next date, and score the terminal shortfall

        NHE = |H(S_T) - V0 - sum_i xi_i (S_{i+1} - S_i)| / V0.

    The provider is called with a TrackView exposing only the current state
    and past history.  With ``accrue_cash=True`` the bank-account leg earns
    ``exp(r * gap)`` between rebalances instead of the verbatim undiscounted
    accumulation (``r`` per trading day, gaps in trading days).

    Raises MissingQuoteError when any needed spot is not finite and
    ParamError when V0 <= 0.
    """
    if not (np.isfinite(track.v0) and track.v0 > 0.0):
        raise ParamError(f"initial option value must be > 0, got {track.v0}")
    spots = np.asarray(track.spots, dtype=float)
    if not np.all(np.isfinite(spots)):
        raise MissingQuoteError(
            f"contract {track.contract_id} lacks spot data on a rebalance date"
        )
    m = track.n_rebalances
    ratios = np.empty(m)
    for i in range(m):
        ratios[i] = float(hedge_provider(_track_view(track, i)))
    if not np.all(np.isfinite(ratios)):
        raise ParamError(f"hedge provider returned non-finite ratio(s) for {track.contract_id}")

    wealth = track.v0
    for i in range(m):
        growth = float(np.exp(r * track.step_gaps[i])) if accrue_cash else 1.0
        wealth = wealth * growth + ratios[i] * (spots[i + 1] - spots[i] * growth)
    payoff = track.payoff(float(spots[-1]))
    nhe = abs(payoff - wealth) / track.v0
    return ReplicationResult(
        nhe=float(nhe),
        v0=track.v0,
        payoff=payoff,
        terminal_wealth=float(wealth),
        ratios=ratios,
    )


# ---------------------------------------------------------------------------
# binned report
# ---------------------------------------------------------------------------


def _bin_indices(rows: pd.DataFrame):
    mat = np.searchsorted(_MATURITY_INNER_EDGES, rows["maturity_days"].to_numpy(), side="left")
    mon = np.searchsorted(_MONEYNESS_INNER_EDGES, rows["moneyness"].to_numpy(), side="left")
    out_of_range = (
        (rows["maturity_days"].to_numpy() < _MATURITY_FULL_RANGE[0])
        | (rows["maturity_days"].to_numpy() > _MATURITY_FULL_RANGE[1])
        | (rows["moneyness"].to_numpy() < _MONEYNESS_FULL_RANGE[0])
        | (rows["moneyness"].to_numpy() > _MONEYNESS_FULL_RANGE[1])
    )
    return mat, mon, out_of_range


@dataclass
class BacktestReport:
    """Per-contract rows, the binned long-form table, and run metadata.

    ``rows`` has one record per (contract, method, kernel, init_mode);
    ``table`` aggregates them into the moneyness x maturity grid with
    columns (method, kernel, init_mode, moneyness_bin, maturity_bin, n,
    mean_nhe).  Totals always recombine exactly from the bins because they
    are computed as n-weighted bin averages.
    """

    rows: pd.DataFrame
    table: pd.DataFrame
    metadata: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def totals(self) -> pd.DataFrame:
        """n-weighted recombination of the bins per (method, kernel,
        init_mode)."""
        if self.table.empty:
            return pd.DataFrame(columns=["method", "kernel", "init_mode", "n", "mean_nhe"])
        t = self.table.copy()
        t["w"] = t["n"] * t["mean_nhe"]
        g = t.groupby(["method", "kernel", "init_mode"], as_index=False).agg(
            n=("n", "sum"), w=("w", "sum")
        )
        g["mean_nhe"] = g["w"] / g["n"]
        return g.drop(columns="w")

    def to_csv(self, path) -> None:
        self.table.to_csv(path, index=False)

    def format_text(self) -> str:
        """Moneyness x maturity grid per method/kernel/init, empty bins
        shown as ``---``, plus an n-weighted All row/column."""
        if self.table.empty:
            return "empty report (no contracts survived the filters)\n"
        lines = []
        head = f"{'Maturity':<12}" + "".join(f"{m:>14}" for m in MONEYNESS_BIN_LABELS)
        head += f"{'All':>14}"
        cell = {}
        for rec in self.table.itertuples():
            cell[(rec.method, rec.kernel, rec.init_mode, rec.maturity_bin, rec.moneyness_bin)] = (
                rec.n,
                rec.mean_nhe,
            )
        combos = self.table[["method", "kernel", "init_mode"]].drop_duplicates().itertuples(
            index=False
        )
        for method, kernel, init_mode in combos:
            lines.append(f"== {method}  (kernel={kernel}, init={init_mode}) ==")
            lines.append(head)
            col_n = np.zeros(len(MONEYNESS_BIN_LABELS))
            col_w = np.zeros(len(MONEYNESS_BIN_LABELS))
            for mat in MATURITY_BIN_LABELS:
                row = [f"{mat:<12}"]
                row_n = 0.0
                row_w = 0.0
                for jm, mon in enumerate(MONEYNESS_BIN_LABELS):
                    hit = cell.get((method, kernel, init_mode, mat, mon))
                    if hit is None:
                        row.append(f"{'---':>14}")
                    else:
                        n, v = hit
                        row.append(f"{v:>14.4f}")
                        row_n += n
                        row_w += n * v
                        col_n[jm] += n
                        col_w[jm] += n * v
                row.append(f"{row_w / row_n:>14.4f}" if row_n else f"{'---':>14}")
                lines.append("".join(row))
            all_row = [f"{'All':<12}"]
            for jm in range(len(MONEYNESS_BIN_LABELS)):
                all_row.append(
                    f"{col_w[jm] / col_n[jm]:>14.4f}" if col_n[jm] else f"{'---':>14}"
                )
            tot_n = col_n.sum()
            all_row.append(f"{col_w.sum() / tot_n:>14.4f}" if tot_n else f"{'---':>14}")
            lines.append("".join(all_row))
            lines.append("")
        if self.failures:
            lines.append(f"contract failures: {len(self.failures)}")
        meta = self.metadata
        if meta:
            lines.append(
                "policy: boundary ties to the lower bin; "
                + (
                    "out-of-range contracts clamped to edge bins"
                    if meta.get("clamp_out_of_range", True)
                    else "out-of-range contracts excluded from bins"
                )
                + f" ({meta.get('n_clamped', 0)} affected)"
            )
        return "\n".join(lines) + "\n"


def bin_report(
    rows: pd.DataFrame,
    metadata: dict | None = None,
    failures: list | None = None,
    clamp_out_of_range: bool = True,
) -> BacktestReport:
    """Aggregate per-contract records into the moneyness x maturity grid.

    ``rows`` needs columns (method, kernel, init_mode, nhe, maturity_days,
    moneyness).  Boundary ties go to the lower bin; contracts outside
    [0.91, 1.12] x [7, 199] are clamped to the nearest edge bin when
    ``clamp_out_of_range`` (the count lands in the metadata) and dropped
    from the grid otherwise.
    """
    metadata = dict(metadata or {})
    metadata["tie_policy"] = "lower"
    metadata["clamp_out_of_range"] = clamp_out_of_range
    if rows.empty:
        metadata["n_clamped"] = 0
        table = pd.DataFrame(
            columns=["method", "kernel", "init_mode", "moneyness_bin", "maturity_bin", "n", "mean_nhe"]
        )
        return BacktestReport(rows=rows, table=table, metadata=metadata, failures=failures or [])

    mat, mon, out = _bin_indices(rows)
    metadata["n_clamped"] = int(out.sum())
    work = rows.copy()
    work["maturity_bin"] = pd.Categorical(
        np.asarray(MATURITY_BIN_LABELS)[mat], categories=MATURITY_BIN_LABELS, ordered=True
    )
    work["moneyness_bin"] = pd.Categorical(
        np.asarray(MONEYNESS_BIN_LABELS)[mon], categories=MONEYNESS_BIN_LABELS, ordered=True
    )
    binned = work if clamp_out_of_range else work[~out]
    table = (
        binned.groupby(
            ["method", "kernel", "init_mode", "moneyness_bin", "maturity_bin"],
            as_index=False,
            observed=True,
        )
        .agg(n=("nhe", "size"), mean_nhe=("nhe", "mean"))
        .sort_values(["method", "kernel", "init_mode", "maturity_bin", "moneyness_bin"])
        .reset_index(drop=True)
    )
    table["moneyness_bin"] = table["moneyness_bin"].astype(str)
    table["maturity_bin"] = table["maturity_bin"].astype(str)
    return BacktestReport(rows=work, table=table, metadata=metadata, failures=failures or [])


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def _float_bits(x: float) -> int:
    return int(np.float64(x).view(np.uint64))


def _ensemble_seed(base_seed, kind: str, horizon: int, s0: float, var1: float, n_paths: int):
    return np.random.SeedSequence(
        entropy=base_seed,
        spawn_key=(
            _KERNEL_CODE[kind],
            int(horizon),
            _float_bits(s0),
            _float_bits(var1),
            int(n_paths),
        ),
    )


def _effective_kernel(kind: str, dist) -> str:
    # the tilt and shift kernels coincide for Gaussian innovations; share
    # the simulation so the report rows are exactly equal, not just close
    if kind == "esscher" and getattr(dist, "kind", None) == "gaussian":
        return "egp"
    return kind


_BASE_METHODS = ("LRM", "Delta", "Delta-SV")
_ALL_METHODS = ("AdhocBS",) + _BASE_METHODS


def _method_label(base: str, init_mode: str) -> str:
    return base + ("-Adhoc" if init_mode == "adhoc" else "")


def run_backtest(
    quotes: pd.DataFrame,
    index: pd.Series,
    params: NgarchParams,
    dist,
    *,
    seed,
    kernels=("egp", "esscher"),
    methods=_ALL_METHODS,
    init_modes=("garch", "adhoc"),
    n_paths: int = 10_000,
    include_no_hedge: bool = True,
    accrue_cash: bool = False,
    ems: bool = True,
    threads: int = 1,
    var_init: float | None = None,
) -> BacktestReport:
    """Full backtest: screen, fit surfaces, filter variance, hedge every
    contract under every requested method/kernel/init combination, and bin
    the normalized hedging errors.

    Per-contract failures (no surface on a date, tilt root not bracketed,
    degenerate increments, ...) are logged into ``report.failures`` and the
    run continues.  ``threads`` parallelizes ensemble construction within a
    rebalance date; results are independent of the worker count.
    """
    for m in methods:
        if m not in _ALL_METHODS:
            raise ParamError(f"unknown method {m!r}; choose from {_ALL_METHODS}")
    for k in kernels:
        if k not in ("egp", "esscher"):
            raise ParamError(f"backtest kernels are 'egp'/'esscher', got {k!r}")
    for im in init_modes:
        if im not in ("garch", "adhoc"):
            raise ParamError(f"init modes are 'garch'/'adhoc', got {im!r}")
    r = params.r

    filtered = filter_contracts(quotes)
    metadata = {
        "seed": seed,
        "n_paths": n_paths,
        "kernels": tuple(kernels),
        "methods": tuple(methods),
        "init_modes": tuple(init_modes),
        "accrue_cash": accrue_cash,
        "n_quotes": int(len(quotes)),
        "n_quotes_filtered": int(len(filtered)),
    }
    if filtered.empty:
        warnings.warn("no quotes survived the liquidity/moneyness screens", stacklevel=2)
        return bin_report(
            pd.DataFrame(
                columns=["contract_id", "method", "kernel", "init_mode", "nhe", "maturity_days", "moneyness"]
            ),
            metadata=metadata,
        )

    surfaces, n_inv_failed, bad_surface_dates = build_surfaces(quotes, index, r)
    states = garch_states(params, dist, index, var_init=var_init)
    closes = index.to_numpy(dtype=float)
    obs_return = {
        ts: float(y)
        for ts, y in zip(index.index[1:], np.log(closes[1:] / closes[:-1]))
    }
    tracks = build_tracks(filtered, quotes, index)
    metadata["n_contracts"] = len(tracks)
    metadata["inversion_failures"] = n_inv_failed
    metadata["surface_dates_failed"] = len(bad_surface_dates)

    # method/kernel/init combinations, labeled like the report rows
    combos: list = []  # (label, base, kernel, init_mode)
    if include_no_hedge:
        combos.append(("NoHedge", "NoHedge", "none", "none"))
    if "AdhocBS" in methods:
        combos.append(("AdhocBS", "AdhocBS", "none", "adhoc"))
    for base in _BASE_METHODS:
        if base not in methods:
            continue
        for kern in kernels:
            for im in init_modes:
                combos.append((_method_label(base, im), base, kern, im))

    needs_surface = {
        ci for ci, (_, base, _, im) in enumerate(combos) if base == "AdhocBS" or im == "adhoc"
    }
    mc_combos = [ci for ci, (_, base, _, _) in enumerate(combos) if base in _BASE_METHODS]

    ratio_store: dict = {
        (ti, ci): np.full(t.n_rebalances, np.nan) for ti, t in enumerate(tracks) for ci in range(len(combos))
    }
    failed: dict = {}

    def _mark_failed(ti: int, ci: int, err: Exception):
        if (ti, ci) not in failed:
            failed[(ti, ci)] = f"{type(err).__name__}: {err}"

    # group by expiry so ensembles built for one rebalance date serve every
    # strike alive on that date, then discard them before moving on
    by_expiry: dict = {}
    for ti, t in enumerate(tracks):
        by_expiry.setdefault(t.expiry, []).append(ti)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for expiry in sorted(by_expiry):
            group = by_expiry[expiry]
            date_slots: dict = {}
            for ti in group:
                for i, d in enumerate(tracks[ti].dates):
                    date_slots.setdefault(d, []).append((ti, i))
            for d in sorted(date_slots):
                slots = date_slots[d]
                ti0, i0 = slots[0]
                spot = float(tracks[ti0].spots[i0])
                horizon = int(tracks[ti0].steps_to_expiry[i0])
                surface = surfaces.get(d)
                garch_var = states.get(d)

                # per-(kernel, init, strike) first-step variances: paths are
                # initialized at a day-0 volatility plus the innovation the
                # observed day-0 return implies for it, so the first simulated
                # variance is the recursion update of that pair
                y0 = obs_return.get(d)
                specs: dict = {}
                for ci in mc_combos:
                    _, _, kern, im = combos[ci]
                    kind = _effective_kernel(kern, dist)
                    if im == "garch":
                        if garch_var is None:
                            continue
                        specs[(kind, "garch", None)] = garch_var
                    else:
                        if surface is None or y0 is None:
                            continue
                        for ti, i in slots:
                            if (ti, ci) in failed:
                                continue
                            kk = tracks[ti].strike
                            iv = float(surface(kk, float(horizon)))
                            eps0 = (y0 - r - params.lam * iv + dist.cgf(iv).value) / iv
                            specs[(kind, "adhoc", kk)] = variance_update(
                                params, iv * iv, eps0
                            )

                def _build(item):
                    key, var1 = item
                    kind = key[0]
                    s = _ensemble_seed(seed, kind, horizon, spot, var1, n_paths)
                    return key, ensemble_under_kernel(
                        params,
                        dist,
                        kind,
                        s0=spot,
                        n_paths=n_paths,
                        horizon=horizon,
                        seed=s,
                        var1=var1,
                        ems=ems,
                    )

                items = sorted(specs.items(), key=lambda kv: repr(kv[0]))
                built: dict = {}
                build_err: dict = {}
                if pool is not None and len(items) > 1:
                    futs = {pool.submit(_build, it): it[0] for it in items}
                    for f, key in futs.items():
                        try:
                            built[key] = f.result()[1]
                        except GarchHedgeError as e:
                            build_err[key] = e
                else:
                    for it in items:
                        try:
                            built[it[0]] = _build(it)[1]
                        except GarchHedgeError as e:
                            build_err[it[0]] = e

                for ti, i in slots:
                    track = tracks[ti]
                    pay = call_payoff(track.strike) if track.call else put_payoff(track.strike)
                    j = int(track.step_gaps[i])
                    for ci, (label, base, kern, im) in enumerate(combos):
                        if (ti, ci) in failed:
                            continue
                        try:
                            if base == "NoHedge":
                                ratio = 0.0
                            elif base == "AdhocBS":
                                if surface is None:
                                    raise InsufficientDataError(
                                        f"no usable surface on {d.date()}"
                                    )
                                ratio = adhoc_bs_delta(
                                    surface, spot, track.strike, float(horizon), r, call=track.call
                                )
                            else:
                                kind = _effective_kernel(kern, dist)
                                key = (kind, im, None if im == "garch" else track.strike)
                                if key in build_err:
                                    raise build_err[key]
                                if key not in built:
                                    raise InsufficientDataError(
                                        f"no {im} variance available on {d.date()}"
                                    )
                                ens = built[key]
                                if base == "LRM":
                                    ratio = lrm_q_hedge(ens, pay, j=j, enforce_grid=False).ratio
                                elif base == "Delta":
                                    ratio = delta_s(ens, track.strike, track.call).ratio
                                else:
                                    ratio = delta_sv(ens, track.strike, track.call).ratio
                            ratio_store[(ti, ci)][i] = ratio
                        except GarchHedgeError as e:
                            _mark_failed(ti, ci, e)
                del built
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    rows = []
    failures = []
    for ti, track in enumerate(tracks):
        for ci, (label, base, kern, im) in enumerate(combos):
            if (ti, ci) in failed:
                failures.append((track.contract_id, label, kern, failed[(ti, ci)]))
                continue
            ratios = ratio_store[(ti, ci)]
            try:
                rep = run_replication(
                    track,
                    lambda view, _ra=ratios: _ra[view.i],
                    accrue_cash=accrue_cash,
                    r=r,
                )
            except GarchHedgeError as e:
                failures.append((track.contract_id, label, kern, f"{type(e).__name__}: {e}"))
                continue
            rows.append(
                {
                    "contract_id": track.contract_id,
                    "expiry": track.expiry,
                    "strike": track.strike,
                    "method": label,
                    "kernel": kern,
                    "init_mode": im,
                    "nhe": rep.nhe,
                    "v0": rep.v0,
                    "payoff": rep.payoff,
                    "maturity_days": track.maturity_days,
                    "moneyness": track.moneyness,
                    "n_rebalances": track.n_rebalances,
                }
            )

    rows_df = pd.DataFrame(rows)
    metadata["contract_failures"] = len(failures)
    return bin_report(rows_df, metadata=metadata, failures=failures)


# ---------------------------------------------------------------------------
# synthetic market
# ---------------------------------------------------------------------------


def synthetic_market(
    params: NgarchParams,
    dist,
    *,
    seed,
    n_expiries: int = 40,
    moneyness_grid=(0.93, 0.97, 1.01, 1.04, 1.06, 1.09),
    maturity_targets=(25, 60, 100, 150, 190),
    quote_every: int = 5,
    warmup: int = 260,
    s0: float = 100.0,
    price_paths: int = 20_000,
    start="2004-01-05",
    volume: int = 1000,
    open_interest: int = 10_000,
    var_init: float | None = None,
):
    """Generate a quote panel whose data-generating process is the model
    itself: the index follows the physical dynamics, and every quote mid is
    the shift-kernel Monte Carlo price from the true filtered state (bid =
    ask = mid, liquidity fields comfortably above the screens).

    ``var_init`` sets the variance the world starts in (stationary by
    default).  Starting it far from stationary with a short ``warmup``
    creates a market where quote prices embed volatility information that a
    return filter seeded at the stationary level has not yet caught up to --
    the situation in which quote-implied initialization earns its keep.

    Expiries are listed on consecutive weekly quote dates with calendar
    maturities cycling through ``maturity_targets``; each expiry carries a
    fixed strike grid set from the spot at listing via ``moneyness_grid``.
    The number of tracked contracts is ``n_expiries * len(moneyness_grid)``.
    Each quote date additionally quotes a refreshed near-the-money strike
    grid per live expiry at zero volume/open interest -- mirroring how
    exchanges keep listing strikes as spot moves -- so the smile fit stays
    well conditioned late in a contract's life without enlarging the
    tracked book.

    Returns ``(quotes, index)`` ready for :func:`run_backtest`.
    """
    from .estimation import simulate_returns

    targets = [int(maturity_targets[k % len(maturity_targets)]) for k in range(n_expiries)]
    offsets = [int(round(t * 5.0 / 7.0)) for t in targets]
    n_steps = warmup + n_expiries * quote_every + max(offsets) + 2
    cal = pd.bdate_range(start=start, periods=n_steps + 1)

    if var_init is None:
        var_init = unconditional_variance(params)
    y = simulate_returns(
        params,
        dist,
        n_steps,
        seed=np.random.SeedSequence(entropy=seed, spawn_key=(7,)),
        var_init=var_init,
    )
    closes = s0 * np.exp(np.concatenate(([0.0], np.cumsum(y))))
    index = pd.Series(closes, index=cal, name="close")

    var_path = filter_variance(params, dist, y, var_init=var_init)
    var_next = np.concatenate((var_path.variances[1:], [var_path.next_var]))
    # var_next[t-1] is the variance of the step starting at calendar position t

    listings = [warmup + k * quote_every for k in range(n_expiries)]
    expiry_pos = [listings[k] + offsets[k] for k in range(n_expiries)]

    def _prices_at(p0: int, epos: int, strikes):
        horizon = epos - p0
        spot = float(closes[p0])
        var1 = float(var_next[p0 - 1])
        ens = ensemble_under_kernel(
            params,
            dist,
            "egp",
            s0=spot,
            n_paths=price_paths,
            horizon=horizon,
            seed=_ensemble_seed(seed, "egp", horizon, spot, var1, price_paths),
            var1=var1,
        )
        disc = float(np.exp(-params.r * horizon))
        return [conditional_expectation(ens, call_payoff(k), disc)[0] for k in strikes]

    recs = []
    for k in range(n_expiries):
        lpos, epos = listings[k], expiry_pos[k]
        spot_l = float(closes[lpos])
        strikes = [round(spot_l / m, 2) for m in moneyness_grid]
        p0 = lpos
        while p0 < epos:
            cal_days = int((cal[epos] - cal[p0]).days)
            if cal_days < _MIN_MATURITY_DAYS:
                break
            spot_now = float(closes[p0])
            # exchanges keep listing near-the-money strikes as spot moves;
            # these refreshed quotes carry no volume, so they feed the smile
            # fit but never enter the tracked contract book
            fresh = [round(spot_now / m, 2) for m in moneyness_grid]
            fresh = [kk for kk in dict.fromkeys(fresh) if kk not in set(strikes)]
            mids = _prices_at(p0, epos, strikes + fresh)
            for i_k, (kk, mid) in enumerate(zip(strikes + fresh, mids)):
                tracked = i_k < len(strikes)
                recs.append(
                    {
                        "quote_date": cal[p0],
                        "expiry_date": cal[epos],
                        "strike": kk,
                        "bid": mid,
                        "ask": mid,
                        "volume": volume if tracked else 0,
                        "open_interest": open_interest if tracked else 0,
                        "spot": spot_now,
                    }
                )
            p0 += quote_every

    quotes = pd.DataFrame.from_records(recs)
    return quotes, index
