"""Hourly zonal dispatch: merit-order commitment plus a transport-model LP.

Regions form a chain linked by interconnectors with asymmetric limits.
Renewables (wind, CSP, utility PV) are zero-cost must-run units; surplus
that no region can absorb is dumped, shortfall is unserved.  Each hour's
LP minimises ``srmc . generation + VoLL * unserved + eps * dumped`` and
regional marginal prices are read off the optimal basis duals.

Commitment is a priority list: renewables always on, dispatchables added
in ascending SRMC until capacity covers total demand, then units whose
minimum stable levels force oversupply are dropped from the expensive
end.  ``simulate_horizon`` repairs the rare hours where the priority list
strands demand (or where a cheaper commitment exists in tiny fleets) by
augmenting or enumerating commitments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from gridstudy.lp import INFINITE_BOUND, BasisHint, LinearProgram, solve_lp
from gridstudy.timeseries import HOURS_PER_DAY, TimeSeries

#: Penalty price for unserved energy ($/MWh).
VALUE_OF_LOST_LOAD = 10_000.0
#: Small penalty on dumped energy so the LP spills only what nothing can absorb.
DUMP_PENALTY = 0.01

_BALANCE_TOL = 1e-6
#: Dispatchable-unit count up to which commitment repair enumerates all subsets.
_ENUMERATION_LIMIT = 8

GENERATOR_TYPES = ("black_coal", "brown_coal", "gt", "biomass", "hydro", "wind", "csp", "utility_pv")
RENEWABLE_TYPES = ("wind", "csp", "utility_pv")


class DispatchError(ValueError):
    pass


@dataclass(frozen=True)
class Generator:
    """Dispatchable or must-run unit.  ``availability`` is a per-unit-of-capacity
    hourly series, mandatory for renewables and ignored for the rest."""

    name: str
    gtype: str
    zone: str
    region: str
    capacity_mw: float
    min_stable_mw: float
    srmc: float
    availability: Optional[TimeSeries] = None

    def __post_init__(self):
        if self.gtype not in GENERATOR_TYPES:
            raise DispatchError(f"{self.name}: unknown generator type {self.gtype!r}")
        if not 0.0 <= self.min_stable_mw <= self.capacity_mw:
            raise DispatchError(
                f"{self.name}: min stable level {self.min_stable_mw} outside [0, {self.capacity_mw}]")
        if self.srmc < 0:
            raise DispatchError(f"{self.name}: srmc {self.srmc} must be >= 0")
        if self.is_renewable and self.srmc != 0.0:
            raise DispatchError(f"{self.name}: renewable srmc must be 0, got {self.srmc}")

    @property
    def is_renewable(self) -> bool:
        return self.gtype in RENEWABLE_TYPES


@dataclass(frozen=True)
class Interconnector:
    """Transfer corridor; positive flow runs from ``from_region`` to ``to_region``.

    ``reverse_limit_mw`` is stored as the (nonpositive) lower flow bound.
    """

    name: str
    from_region: str
    to_region: str
    forward_limit_mw: float
    reverse_limit_mw: float

    def __post_init__(self):
        if not self.reverse_limit_mw <= 0.0 <= self.forward_limit_mw:
            raise DispatchError(
                f"{self.name}: limits [{self.reverse_limit_mw}, {self.forward_limit_mw}] must straddle 0")


@dataclass(frozen=True)
class CommittedUnit:
    """One unit's dispatch window for a single hour."""

    name: str
    gtype: str
    region: str
    srmc: float
    p_min_mw: float
    p_max_mw: float


Commitment = tuple[CommittedUnit, ...]


@dataclass(frozen=True)
class HourDispatch:
    hour: int
    output_mw: Mapping[str, float]
    flow_mw: Mapping[str, float]
    unserved_mw: Mapping[str, float]
    dumped_mw: Mapping[str, float]
    price: Mapping[str, float]
    unserved_hour: bool
    dumped_hour: bool
    objective: float = 0.0
    basis_hint: Optional[BasisHint] = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class DispatchResult:
    hours: tuple[HourDispatch, ...]
    spilled_energy_twh: float
    spilled_hours_pct: float
    gt_energy_twh: float
    unserved_energy_twh: float
    unserved_hours: int
    generator_energy_mwh: Mapping[str, float]


def csp_profile_shift(csp_availability: TimeSeries, delay_hours: int = 12) -> TimeSeries:
    """Delay CSP output within each day (thermal-storage proxy).

    Output at hour ``h`` equals availability at hour ``(h - delay) mod 24``
    of the same day, so every day's energy is conserved exactly.
    """
    if delay_hours < 0:
        raise DispatchError(f"delay must be >= 0, got {delay_hours}")
    n_days = csp_availability.n_days  # raises if not whole days
    shaped = csp_availability.values.reshape(n_days, HOURS_PER_DAY)
    shifted = np.roll(shaped, delay_hours % HOURS_PER_DAY, axis=1)
    return TimeSeries(csp_availability.start, shifted.reshape(-1),
                      label=csp_availability.label + f"+{delay_hours}h")


def effective_capacity(gen: Generator, availability: float) -> float:
    return gen.capacity_mw * availability


def _window(gen: Generator, availability: float) -> CommittedUnit:
    cap = effective_capacity(gen, availability)
    if gen.is_renewable:
        return CommittedUnit(gen.name, gen.gtype, gen.region, gen.srmc, cap, cap)
    return CommittedUnit(gen.name, gen.gtype, gen.region, gen.srmc,
                         min(gen.min_stable_mw, cap), cap)


def _merit_order(generators: Sequence[Generator]) -> list[Generator]:
    return sorted((g for g in generators if not g.is_renewable), key=lambda g: (g.srmc, g.name))


def commit_merit_order(generators: Sequence[Generator], demand: Mapping[str, float],
                       availability: Mapping[str, float]) -> Commitment:
    """Priority-list commitment for one hour.

    Renewables are always committed (must-run at availability).
    Dispatchables join in ascending SRMC until committed capacity covers
    total demand; afterwards, units whose minimum stable levels force
    oversupply are dropped from the expensive end, but never below the
    capacity needed to cover demand.
    """
    total_demand = float(sum(demand.values()))
    committed: list[Generator] = []
    renewable_mw = 0.0
    units: list[CommittedUnit] = []
    for g in generators:
        if g.is_renewable:
            avail = availability.get(g.name, 0.0)
            renewable_mw += effective_capacity(g, avail)
            units.append(_window(g, avail))
    capacity = renewable_mw
    for g in _merit_order(generators):
        if capacity >= total_demand:
            break
        committed.append(g)
        capacity += g.capacity_mw
    min_floor = renewable_mw + sum(g.min_stable_mw for g in committed)
    while committed and min_floor > total_demand:
        candidate = committed[-1]
        if capacity - candidate.capacity_mw < total_demand and renewable_mw < total_demand:
            break  # dropping it would strand demand
        committed.pop()
        capacity -= candidate.capacity_mw
        min_floor -= candidate.min_stable_mw
    units.extend(_window(g, 1.0) for g in committed)
    return tuple(units)


def dispatch_hour(committed: Commitment, demand: Mapping[str, float],
                  lines: Sequence[Interconnector], hour: int = 0,
                  basis_hint: BasisHint | None = None) -> HourDispatch:
    """LP dispatch of a committed fleet against per-region demand.

    Regional balance: generation + imports - exports + unserved =
    demand + dumped.  Marginal price per region is the balance-row dual
    of the optimal basis.
    """
    regions = list(demand.keys())
    for line in lines:
        for r in (line.from_region, line.to_region):
            if r not in regions:
                raise DispatchError(f"line {line.name} endpoint {r} has no demand entry")
    for u in committed:
        if u.region not in regions:
            raise DispatchError(f"unit {u.name} region {u.region} has no demand entry")
    nu, nl, nr = len(committed), len(lines), len(regions)
    ridx = {r: i for i, r in enumerate(regions)}
    n = nu + nl + 2 * nr
    cost = np.zeros(n)
    lower = np.zeros(n)
    upper = np.full(n, INFINITE_BOUND)
    a_eq = np.zeros((nr, n))
    b_eq = np.array([demand[r] for r in regions], dtype=float)
    names = []
    for j, u in enumerate(committed):
        cost[j] = u.srmc
        lower[j], upper[j] = u.p_min_mw, u.p_max_mw
        a_eq[ridx[u.region], j] = 1.0
        names.append(f"gen:{u.name}")
    for j, line in enumerate(lines):
        col = nu + j
        lower[col], upper[col] = line.reverse_limit_mw, line.forward_limit_mw
        a_eq[ridx[line.from_region], col] = -1.0
        a_eq[ridx[line.to_region], col] = 1.0
        names.append(f"flow:{line.name}")
    for i, r in enumerate(regions):
        cost[nu + nl + i] = VALUE_OF_LOST_LOAD
        a_eq[i, nu + nl + i] = 1.0
        names.append(f"unserved:{r}")
    for i, r in enumerate(regions):
        cost[nu + nl + nr + i] = DUMP_PENALTY
        a_eq[i, nu + nl + nr + i] = -1.0
        names.append(f"dumped:{r}")
    lp = LinearProgram(cost, lower, upper, a_eq, b_eq, [], [], names=tuple(names))
    sol = solve_lp(lp, basis_hint=basis_hint)
    if not sol.is_optimal:
        raise DispatchError(f"hour {hour}: dispatch LP failed with status {sol.status}")
    x = sol.x
    unserved = {r: float(x[nu + nl + i]) for i, r in enumerate(regions)}
    dumped = {r: float(x[nu + nl + nr + i]) for i, r in enumerate(regions)}
    return HourDispatch(
        hour=hour,
        output_mw={u.name: float(x[j]) for j, u in enumerate(committed)},
        flow_mw={line.name: float(x[nu + j]) for j, line in enumerate(lines)},
        unserved_mw=unserved,
        dumped_mw=dumped,
        price={r: float(sol.duals_eq[i]) for i, r in enumerate(regions)},
        unserved_hour=any(v > _BALANCE_TOL for v in unserved.values()),
        dumped_hour=any(v > _BALANCE_TOL for v in dumped.values()),
        objective=float(sol.objective),
        basis_hint=sol.basis_hint,
    )


def _is_clean(hd: HourDispatch) -> bool:
    return not hd.unserved_hour and not hd.dumped_hour


def _regional_topup(generators: Sequence[Generator], demand: Mapping[str, float],
                    lines: Sequence[Interconnector], base: Commitment) -> Commitment:
    """Commit extra in-region units where local capacity plus the import
    bound cannot cover regional demand.  The import bound sums line limits
    into the region, ignoring upstream availability, so this is a cheap
    sufficient top-up; the LP repair loop remains the backstop."""
    import_bound: dict[str, float] = {}
    for line in lines:
        import_bound[line.to_region] = import_bound.get(line.to_region, 0.0) + line.forward_limit_mw
        import_bound[line.from_region] = import_bound.get(line.from_region, 0.0) - line.reverse_limit_mw
    local = {r: 0.0 for r in demand}
    for u in base:
        local[u.region] += u.p_max_mw
    committed_names = {u.name for u in base}
    extra: list[CommittedUnit] = []
    for region, need in demand.items():
        cover = local[region] + import_bound.get(region, 0.0)
        if cover >= need:
            continue
        for g in _merit_order(generators):
            if g.region != region or g.name in committed_names:
                continue
            extra.append(_window(g, 1.0))
            committed_names.add(g.name)
            cover += g.capacity_mw
            if cover >= need:
                break
    return base + tuple(extra)


def choose_commitment(generators: Sequence[Generator], demand: Mapping[str, float],
                      availability: Mapping[str, float], lines: Sequence[Interconnector],
                      hour: int = 0,
                      hints: dict[tuple[str, ...], BasisHint] | None = None
                      ) -> tuple[Commitment, HourDispatch]:
    """Commitment used by the horizon simulation: priority list plus repair.

    The priority list is topped up for regional adequacy against the line
    limits; if the dispatch still leaves unserved demand, dispatchables
    are committed one by one (cheapest first, regions in shortfall
    preferred).  For fleets of at most 8 dispatchables with a flawed
    heuristic outcome, all commitments are enumerated and the cheapest
    dispatch wins, so the simulation is never infeasible when some
    commitment is feasible.

    ``hints`` is an optional cross-call cache of optimal bases keyed by
    commitment signature; it only accelerates re-solves.
    """
    hints = hints if hints is not None else {}

    def solve(commitment: Commitment) -> HourDispatch:
        sig = _signature(commitment)
        hd = dispatch_hour(commitment, demand, lines, hour, basis_hint=hints.get(sig))
        hints[sig] = hd.basis_hint
        return hd

    base = _regional_topup(generators, demand, lines,
                           commit_merit_order(generators, demand, availability))
    dispatch = solve(base)
    if _is_clean(dispatch):
        return base, dispatch
    dispatchables = _merit_order(generators)
    if dispatch.unserved_hour:
        committed_names = {u.name for u in base}
        commitment, best = base, dispatch
        spare = [g for g in dispatchables if g.name not in committed_names]
        while best.unserved_hour and spare:
            short = {r for r, v in best.unserved_mw.items() if v > _BALANCE_TOL}
            pick = next((g for g in spare if g.region in short), spare[0])
            spare.remove(pick)
            trial_commitment = commitment + (_window(pick, 1.0),)
            trial = solve(trial_commitment)
            if trial.objective < best.objective:
                commitment, best = trial_commitment, trial
        dispatch = best
        base = commitment
    if not _is_clean(dispatch) and len(dispatchables) <= _ENUMERATION_LIMIT:
        renewables = tuple(_window(g, availability.get(g.name, 0.0))
                           for g in generators if g.is_renewable)
        best_pair = (base, dispatch)
        for mask in range(1 << len(dispatchables)):
            subset = renewables + tuple(
                _window(g, 1.0) for i, g in enumerate(dispatchables) if mask >> i & 1)
            trial = solve(subset)
            if trial.objective < best_pair[1].objective - 1e-9:
                best_pair = (subset, trial)
        base, dispatch = best_pair
    return base, dispatch


def simulate_horizon(generators: Sequence[Generator], nett_demand: Mapping[str, TimeSeries],
                     lines: Sequence[Interconnector],
                     availabilities: Mapping[str, TimeSeries] | None = None) -> DispatchResult:
    """Commit and dispatch every hour of the horizon, then aggregate totals.

    Spilled-hour percentages are taken over all hours of the horizon.
    """
    availabilities = availabilities or {}
    horizons = {r: len(ts) for r, ts in nett_demand.items()}
    if len(set(horizons.values())) != 1:
        raise DispatchError(f"demand horizon mismatch: {horizons}")
    n_hours = next(iter(horizons.values()))
    for g in generators:
        if g.is_renewable:
            ts = availabilities.get(g.name)
            if ts is None:
                raise DispatchError(f"renewable {g.name} has no availability series")
            if len(ts) != n_hours:
                raise DispatchError(f"{g.name} availability has {len(ts)} hours, horizon is {n_hours}")
    regions = list(nett_demand.keys())
    demand_arr = {r: nett_demand[r].values for r in regions}
    avail_arr = {name: ts.values for name, ts in availabilities.items()}
    hours: list[HourDispatch] = []
    hints: dict[tuple[str, ...], BasisHint] = {}
    for h in range(n_hours):
        demand = {r: float(demand_arr[r][h]) for r in regions}
        avail = {name: float(vals[h]) for name, vals in avail_arr.items()}
        _, hd = choose_commitment(generators, demand, avail, lines, hour=h, hints=hints)
        hours.append(hd)
    return summarise(hours, generators)


def _signature(commitment: Commitment) -> tuple[str, ...]:
    return tuple(u.name for u in commitment)


def summarise(hours: Sequence[HourDispatch], generators: Sequence[Generator]) -> DispatchResult:
    """Aggregate hourly records into the horizon totals."""
    n = len(hours)
    if n == 0:
        raise DispatchError("no hours to summarise")
    gt_names = {g.name for g in generators if g.gtype == "gt"}
    energy: dict[str, float] = {g.name: 0.0 for g in generators}
    spilled = unserved = gt_energy = 0.0
    spilled_hours = unserved_hours = 0
    for hd in hours:
        for name, mw in hd.output_mw.items():
            energy[name] = energy.get(name, 0.0) + mw
            if name in gt_names:
                gt_energy += mw
        spilled += sum(hd.dumped_mw.values())
        unserved += sum(hd.unserved_mw.values())
        spilled_hours += hd.dumped_hour
        unserved_hours += hd.unserved_hour
    return DispatchResult(
        hours=tuple(hours),
        spilled_energy_twh=spilled / 1e6,
        spilled_hours_pct=100.0 * spilled_hours / n,
        gt_energy_twh=gt_energy / 1e6,
        unserved_energy_twh=unserved / 1e6,
        unserved_hours=unserved_hours,
        generator_energy_mwh=energy,
    )
