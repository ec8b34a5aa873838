"""Five-scenario study pipeline.

Per scenario: (0) load data, apply the renewable fleet replacement;
(1) dispatch the conventional demand to simulate market prices;
(2) train the price predictor on historical plus simulated prices;
(3) predict the study-year price signal per region; (4) schedule the
price-responsive demand day by day (scenarios 1 and 2 keep the
conventional load); (5) dispatch the resulting nett demand; (6) seed the
power flow from the dispatch and sweep hourly loadability; (7) report.

Prices are predicted once and demand responds once: the loop is open,
users are price takers.  Every stage is deterministic for a fixed seed,
and failures carry a stage tag with partial outputs flushed for
inspection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

import gridstudy
from gridstudy.demand import (
    DayInputs,
    DemandSchedule,
    aggregate_nett_demand,
    conventional_baseline,
    default_params,
    solve_days,
)
from gridstudy.dispatch import (
    DispatchResult,
    Generator,
    csp_profile_shift,
    simulate_horizon,
)
from gridstudy.loadability import (
    LoadabilityResult,
    OperatingPoint,
    average_loadability,
    compute_loadability,
)
from gridstudy.powerflow import BusNetwork, load_network
from gridstudy.pricing import predict_rows, save_predictor, train_matrix
from gridstudy.scenarioconfig import ScenarioConfig, config_sha256
from gridstudy.synthdata import LOAD_TAN_PHI
from gridstudy.timeseries import (
    HOURS_PER_DAY,
    HOURS_PER_YEAR,
    TimeSeries,
    ZoneWeights,
    load_timeseries_csv,
    split_regional_demand,
    write_timeseries_csv,
)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it for diagnostics."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ScenarioReport:
    scenario_id: int
    uptake: str
    seed: int
    config_hash: str
    spilled_energy_twh: float
    spilled_hours_pct: float
    gt_energy_twh: float
    unserved_energy_twh: float
    unserved_hours: int
    loadability_gw: float
    conventional_demand: Mapping[str, TimeSeries]
    nett_demand: Mapping[str, TimeSeries]
    prices: Mapping[str, TimeSeries]
    demand_schedules: Mapping[str, tuple[DemandSchedule, ...]]
    pv_power: Mapping[str, TimeSeries]
    dispatch: DispatchResult
    loadability: LoadabilityResult


def apply_renewable_replacement(fleet: Sequence[Generator], config: ScenarioConfig
                                ) -> tuple[Generator, ...]:
    """Swap the named coal units for the wind farm and the solar-field pair.

    Scenario 1 returns the fleet unchanged.  Availability series are
    attached later, once the data directory is known.
    """
    if config.replacement is None:
        return tuple(fleet)
    spec = config.replacement
    names = {g.name for g in fleet}
    for unit in spec.remove:
        if unit not in names:
            raise ValueError(f"replacement removes unknown unit {unit!r}")
    out = [g for g in fleet if g.name not in spec.remove]
    out.append(Generator(spec.wind_name, "wind", spec.wind_zone, spec.wind_region,
                         spec.wind_capacity_mw, 0.0, 0.0))
    for name, zone in zip(spec.csp_names, spec.csp_zones):
        out.append(Generator(name, "csp", zone, spec.csp_region,
                             spec.csp_capacity_mw, 0.0, 0.0))
    return tuple(out)


@dataclass(frozen=True)
class _StudyData:
    demand: Mapping[str, TimeSeries]
    historical_demand: Mapping[str, TimeSeries]
    historical_price: Mapping[str, TimeSeries]
    pv_availability: Mapping[str, TimeSeries]
    trace_availability: Mapping[str, TimeSeries]  # "wind.NSA" style keys
    network: BusNetwork
    n_hours: int


def _truncate(ts: TimeSeries, n_hours: int) -> TimeSeries:
    if len(ts) == n_hours:
        return ts
    return TimeSeries(ts.start, ts.values[:n_hours], ts.label)


def _load_data(config: ScenarioConfig, data_dir, days: Optional[int]) -> _StudyData:
    data_dir = Path(data_dir)
    n_hours = HOURS_PER_YEAR if days is None else days * HOURS_PER_DAY
    if not 0 < n_hours <= HOURS_PER_YEAR:
        raise ValueError(f"days must be in 1..365, got {days}")

    def read(key: str) -> TimeSeries:
        return _truncate(load_timeseries_csv(data_dir / config.data_files[key], HOURS_PER_YEAR), n_hours)

    demand = {r: read(f"demand.{r}") for r in config.demand_regions}
    hist_demand = {r: read(f"historical_demand.{r}") for r in config.demand_regions}
    hist_price = {r: read(f"historical_price.{r}") for r in config.demand_regions}
    pv = {}
    if config.has_demand_response:
        pv = {r: read(f"pv.{r}") for r in config.demand_regions}
    traces = {}
    for key in config.data_files:
        if key.startswith(("wind.", "solar.")):
            traces[key] = read(key)
    network = load_network(data_dir / config.data_files["bus"],
                           data_dir / config.data_files["branch"],
                           base_mva=config.loadability.base_mva)
    return _StudyData(demand, hist_demand, hist_price, pv, traces, network, n_hours)


def _availabilities(config: ScenarioConfig, data: _StudyData) -> dict[str, TimeSeries]:
    """Hourly availability per renewable unit; CSP traces are delay-shifted."""
    if config.replacement is None:
        return {}
    spec = config.replacement
    out = {spec.wind_name: data.trace_availability[f"wind.{spec.wind_zone}"]}
    for name, zone in zip(spec.csp_names, spec.csp_zones):
        out[name] = csp_profile_shift(data.trace_availability[f"solar.{zone}"],
                                      spec.csp_delay_hours).relabel(f"csp_{zone}")
    return out


def _feature_matrix(config: ScenarioConfig, fleet: Sequence[Generator],
                    availabilities: Mapping[str, TimeSeries],
                    demand: TimeSeries) -> tuple[tuple[str, ...], np.ndarray]:
    """Vectorised twin of ``extract_features`` over a whole series."""
    n = len(demand)
    hours = np.arange(n)
    start = demand.start
    hour_of_day = (hours + start.hour) % 24
    day_of_week = ((hours + start.hour) // 24 + start.weekday()) % 7
    names = ["demand_mw", "hour_of_day", "day_of_week"]
    cols = [demand.values, hour_of_day.astype(float), day_of_week.astype(float)]
    limits = {line.name: (line.forward_limit_mw, line.reverse_limit_mw)
              for line in config.interconnectors}
    for line_name in sorted(limits):
        fwd, rev = limits[line_name]
        names += [f"line:{line_name}:forward", f"line:{line_name}:reverse"]
        cols += [np.full(n, fwd), np.full(n, rev)]
    groups: dict[tuple[str, str], np.ndarray] = {}
    for gen in fleet:
        if gen.is_renewable:
            contribution = gen.capacity_mw * availabilities[gen.name].values
        else:
            contribution = np.full(n, gen.capacity_mw)
        key = (gen.gtype, gen.zone)
        groups[key] = groups.get(key, 0.0) + contribution
    for gtype, zone in sorted(groups):
        names.append(f"capacity:{gtype}:{zone}")
        cols.append(groups[(gtype, zone)])
    return tuple(names), np.column_stack(cols)


def _zone_weights(config: ScenarioConfig, network: BusNetwork, region: str) -> ZoneWeights:
    if region in config.zone_weights:
        return ZoneWeights(config.zone_weights[region])
    load_buses = [b.bus_id for b in network.buses if b.region == region and b.kind == "pq"]
    if not load_buses:
        raise ValueError(f"region {region} has no load buses in the network")
    return ZoneWeights.equal(load_buses)


def _operating_points(config: ScenarioConfig, network: BusNetwork,
                      nett: Mapping[str, TimeSeries],
                      dispatch: DispatchResult) -> list[OperatingPoint]:
    """Dispatch-consistent hourly power-flow inputs.

    Regional nett demand splits across the region's load buses by the
    configured zone weights; unit outputs land on the bus that lists them
    (first generator bus of the region otherwise).  Units on the slack bus
    are left to the slack balance.
    """
    n_hours = len(next(iter(nett.values())))
    bus_of_unit: dict[str, str] = {}
    gen_buses: dict[str, list[str]] = {}
    slack_id = next(b.bus_id for b in network.buses if b.kind == "slack")
    for b in network.buses:
        if b.kind in ("pv", "slack"):
            gen_buses.setdefault(b.region, []).append(b.bus_id)
        for unit in b.gen_names:
            bus_of_unit[unit] = b.bus_id
    splits: dict[str, dict[str, np.ndarray]] = {}
    for region in config.demand_regions:
        weights = _zone_weights(config, network, region)
        splits[region] = {zone: ts.values for zone, ts
                          in split_regional_demand(nett[region], weights).items()}
    points = []
    for h in range(n_hours):
        hd = dispatch.hours[h]
        loads = {}
        for region, zones in splits.items():
            for bus_id, series in zones.items():
                p = float(series[h])
                loads[bus_id] = (p, p * LOAD_TAN_PHI)
        injections: dict[str, list[float]] = {}
        for unit, mw in hd.output_mw.items():
            bus = bus_of_unit.get(unit)
            if bus is None:
                region = _region_of_unit(config, unit)
                candidates = [x for x in gen_buses.get(region, []) if x != slack_id]
                if not candidates:
                    continue
                bus = candidates[0]
            if bus == slack_id:
                continue
            injections.setdefault(bus, [0.0, 0.0])[0] += mw
        points.append(OperatingPoint(
            loads=loads,
            injections={k: (v[0], v[1]) for k, v in injections.items()},
        ))
    return points


def _region_of_unit(config: ScenarioConfig, unit: str) -> str:
    for g in config.fleet:
        if g.name == unit:
            return g.region
    if config.replacement:
        spec = config.replacement
        if unit == spec.wind_name:
            return spec.wind_region
        if unit in spec.csp_names:
            return spec.csp_region
    raise ValueError(f"unknown unit {unit!r}")


def run_scenario(config: ScenarioConfig, data_dir, out_dir=None,
                 days: Optional[int] = None,
                 stop_after: Optional[str] = None) -> Optional[ScenarioReport]:
    """Execute the pipeline for one scenario; optionally emit files.

    ``days`` truncates the horizon from the front of the year (useful for
    quick runs); totals are then over the truncated horizon.  ``stop_after``
    may name ``"demand"`` or ``"dispatch"`` to halt the pipeline at that
    stage (the stage's artifacts are still emitted, and ``None`` is
    returned because no full report exists).
    """
    if stop_after not in (None, "demand", "dispatch"):
        raise ValueError(f"stop_after must be demand or dispatch, got {stop_after!r}")
    partial: dict[str, object] = {}
    try:
        return _run_scenario_inner(config, data_dir, out_dir, days, partial, stop_after)
    except StageError:
        raise
    except Exception as exc:  # pragma: no cover - defensive wrap
        raise StageError("unknown", exc) from exc


def _run_scenario_inner(config, data_dir, out_dir, days, partial,
                        stop_after=None) -> Optional[ScenarioReport]:
    def stage(name):
        def runner(fn, *args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except Exception as exc:
                if out_dir is not None:
                    _flush_partial(partial, Path(out_dir))
                raise StageError(name, exc) from exc
        return runner

    data = stage("load-data")(_load_data, config, data_dir, days)
    fleet = stage("fleet-replacement")(apply_renewable_replacement, config.fleet, config)
    availabilities = stage("fleet-replacement")(_availabilities, config, data)

    # (1) pass-0 dispatch of the conventional demand simulates market prices
    conventional = dict(data.demand)
    zero = np.zeros(data.n_hours)
    nett_conventional = {r: conventional[r] for r in config.demand_regions}
    for r in config.transit_regions:
        nett_conventional[r] = TimeSeries(next(iter(conventional.values())).start, zero, r)
    pass0 = stage("pass0-dispatch")(simulate_horizon, fleet, nett_conventional,
                                    config.interconnectors, availabilities)
    partial["pass0"] = (pass0, fleet)

    # (2) train one predictor per region on historical + simulated pairs
    def build_predictors():
        predictors = {}
        sim_prices = {r: np.array([hd.price[r] for hd in pass0.hours])
                      for r in config.demand_regions}
        for region in config.demand_regions:
            names_h, x_h = _feature_matrix(config, fleet, availabilities,
                                           data.historical_demand[region])
            names_s, x_s = _feature_matrix(config, fleet, availabilities,
                                           data.demand[region])
            assert names_h == names_s
            x = np.vstack([x_h, x_s])
            y = np.concatenate([data.historical_price[region].values, sim_prices[region]])
            predictors[region] = train_matrix(names_s, x, y, config.predictor_kind, config.seed)
        return predictors

    predictors = stage("train-predictor")(build_predictors)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for region in sorted(predictors):
            save_predictor(predictors[region], out / f"predictor_{region}.txt")

    # (3) predicted study-year price signal per region
    def predict_prices():
        prices = {}
        for region in config.demand_regions:
            names, x = _feature_matrix(config, fleet, availabilities, data.demand[region])
            values = predict_rows(predictors[region], names, x)
            prices[region] = TimeSeries(data.demand[region].start, values,
                                        label=f"price_{region}")
        return prices

    prices = stage("predict-prices")(predict_prices)
    partial["prices"] = prices

    # (4) daily demand schedules: responsive for uptake scenarios
    def schedule_demand():
        schedules = {}
        pv_power = {}
        n_days = data.n_hours // HOURS_PER_DAY
        for region in config.demand_regions:
            load = data.demand[region]
            if config.has_demand_response:
                pv_series = data.pv_availability[region].values * config.pv_capacity_mw[region]
            else:
                pv_series = zero
            pv_power[region] = TimeSeries(load.start, pv_series, label=f"pv_power_{region}")
            day_inputs = [
                DayInputs(prices[region].day(d), load.day(d),
                          pv_series[d * HOURS_PER_DAY:(d + 1) * HOURS_PER_DAY])
                for d in range(n_days)
            ]
            if config.has_demand_response:
                spec = config.batteries[region]
                params = default_params(
                    soc_min_mwh=spec.soc_min_mwh, soc_max_mwh=spec.soc_max_mwh,
                    peak_load_mw=float(np.max(load.values)),
                    pv_capacity_mw=config.pv_capacity_mw[region],
                    charge_rate_mw=spec.charge_rate_mw,
                    discharge_rate_mw=spec.discharge_rate_mw,
                    efficiency=spec.efficiency,
                )
                schedules[region] = tuple(solve_days(params, day_inputs))
            else:
                schedules[region] = tuple(conventional_baseline(day) for day in day_inputs)
        return schedules, pv_power

    schedules, pv_power = stage("demand-model")(schedule_demand)

    def build_nett():
        nett = aggregate_nett_demand(schedules, next(iter(conventional.values())).start)
        for r in config.transit_regions:
            nett[r] = TimeSeries(next(iter(conventional.values())).start, zero, r)
        return nett

    nett = stage("nett-demand")(build_nett)
    partial["nett"] = nett

    if stop_after == "demand":
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            _emit_series(prices, "prices", out)
            _emit_series(nett, "nett_demand", out)
            _emit_schedule_files(schedules, prices, conventional, pv_power, out)
        return None

    # (5) dispatch of the nett demand; scenarios without demand response
    # re-use the conventional dispatch (identical inputs)
    if config.has_demand_response:
        dispatch = stage("nett-dispatch")(simulate_horizon, fleet, nett,
                                          config.interconnectors, availabilities)
    else:
        dispatch = pass0
    partial["dispatch"] = dispatch

    if stop_after == "dispatch":
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            _emit_series(prices, "prices", out)
            _emit_series(nett, "nett_demand", out)
            _emit_schedule_files(schedules, prices, conventional, pv_power, out)
            _write_dispatch_csv(dispatch, out / "dispatch_hourly.csv")
        return None

    # (6) hourly loadability on the dispatch-consistent operating points
    def sweep():
        points = _operating_points(config, data.network, nett, dispatch)
        return compute_loadability(
            data.network, config.loadability.region, config.loadability.participation,
            step=config.loadability.step, hours=points,
            lambda_max=config.loadability.lambda_max)

    load_res = stage("loadability")(sweep)

    report = ScenarioReport(
        scenario_id=config.scenario_id,
        uptake=config.uptake,
        seed=config.seed,
        config_hash=config_sha256(config.source_path) if config.source_path else "",
        spilled_energy_twh=dispatch.spilled_energy_twh,
        spilled_hours_pct=dispatch.spilled_hours_pct,
        gt_energy_twh=dispatch.gt_energy_twh,
        unserved_energy_twh=dispatch.unserved_energy_twh,
        unserved_hours=dispatch.unserved_hours,
        loadability_gw=average_loadability(load_res),
        conventional_demand=conventional,
        nett_demand=nett,
        prices=prices,
        demand_schedules=schedules,
        pv_power=pv_power,
        dispatch=dispatch,
        loadability=load_res,
    )
    if out_dir is not None:
        emit_report(report, out_dir)
    return report


# -- emission -----------------------------------------------------------------

SUMMARY_COLUMNS = ("scenario", "spilled_energy_TWh", "spilled_hours_pct",
                   "gt_energy_TWh", "loadability_GW", "unserved_energy_TWh")


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _flush_partial(partial: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if "prices" in partial:
            for region, ts in partial["prices"].items():
                write_timeseries_csv(ts, out_dir / f"partial_prices_{region}.csv")
        if "nett" in partial:
            for region, ts in partial["nett"].items():
                write_timeseries_csv(ts, out_dir / f"partial_nett_demand_{region}.csv")
        if "dispatch" in partial:
            _write_dispatch_csv(partial["dispatch"], out_dir / "partial_dispatch_hourly.csv")
    except Exception:
        pass  # flushing is best-effort; the stage error matters more


def _write_dispatch_csv(dispatch: DispatchResult, path: Path) -> None:
    units = sorted(dispatch.hours[0].output_mw)
    lines = sorted(dispatch.hours[0].flow_mw)
    regions = sorted(dispatch.hours[0].unserved_mw)
    header = (["hour"] + [f"gen_{u}" for u in units] + [f"flow_{l}" for l in lines]
              + [f"unserved_{r}" for r in regions] + [f"dumped_{r}" for r in regions]
              + [f"price_{r}" for r in regions] + ["unserved_hour", "dumped_hour"])

    def rows():
        for hd in dispatch.hours:
            yield ([hd.hour]
                   + [float(hd.output_mw.get(u, 0.0)) for u in units]
                   + [float(hd.flow_mw[l]) for l in lines]
                   + [float(hd.unserved_mw[r]) for r in regions]
                   + [float(hd.dumped_mw[r]) for r in regions]
                   + [float(hd.price[r]) for r in regions]
                   + [int(hd.unserved_hour), int(hd.dumped_hour)])

    _write_rows(path, header, rows())


def _emit_series(series_by_region: Mapping[str, TimeSeries], prefix: str, out_dir: Path) -> list[Path]:
    written = []
    for region in sorted(series_by_region):
        p = out_dir / f"{prefix}_{region}.csv"
        write_timeseries_csv(series_by_region[region], p)
        written.append(p)
    return written


def _emit_schedule_files(schedules, prices, conventional, pv_power, out_dir: Path) -> list[Path]:
    written = []
    for region in sorted(schedules):
        sched_path = out_dir / f"demand_{region}.csv"
        days = schedules[region]
        price = prices[region].values
        load = conventional[region].values
        pv = pv_power[region].values

        def srows():
            for d, sched in enumerate(days):
                for h in range(HOURS_PER_DAY):
                    hour = d * HOURS_PER_DAY + h
                    yield [hour, float(price[hour]), float(load[hour]), float(pv[hour]),
                           float(sched.battery_mw[h]), float(sched.grid_mw[h]),
                           float(sched.soc_mwh[h + 1])]

        _write_rows(sched_path, ["hour", "price", "load", "pv", "p_b", "p_g", "soc"], srows())
        written.append(sched_path)
    return written


def emit_report(report: ScenarioReport, out_dir) -> list[Path]:
    """Write the summary, hourly detail files and the run manifest.

    Emission is deterministic: the same report produces byte-identical
    files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    summary = out_dir / "summary.csv"
    _write_rows(summary, SUMMARY_COLUMNS, [[
        report.scenario_id,
        float(report.spilled_energy_twh),
        float(report.spilled_hours_pct),
        float(report.gt_energy_twh),
        float(report.loadability_gw),
        float(report.unserved_energy_twh),
    ]])
    written.append(summary)

    dispatch_path = out_dir / "dispatch_hourly.csv"
    _write_dispatch_csv(report.dispatch, dispatch_path)
    written.append(dispatch_path)

    load_path = out_dir / "loadability_hourly.csv"
    res = report.loadability
    _write_rows(load_path,
                ["hour", "lambda_star", "served_load_MW", "region_load_MW", "min_voltage_pu"],
                ([h, float(res.lambda_star[h]), float(res.served_load_mw[h]),
                  float(res.region_load_mw[h]), float(res.min_voltage_pu[h])]
                 for h in range(len(res))))
    written.append(load_path)

    written += _emit_series(report.prices, "prices", out_dir)
    written += _emit_series(report.nett_demand, "nett_demand", out_dir)
    written += _emit_schedule_files(report.demand_schedules, report.prices,
                                    report.conventional_demand, report.pv_power, out_dir)

    manifest = out_dir / "manifest.txt"
    manifest.write_text(
        f"scenario {report.scenario_id}\n"
        f"uptake {report.uptake}\n"
        f"seed {report.seed}\n"
        f"config_sha256 {report.config_hash}\n"
        f"gridstudy {gridstudy.__version__}\n"
        f"numpy {np.__version__}\n"
        f"config_schema 1\n"
    )
    written.append(manifest)
    return written


def merge_summaries(run_dirs: Sequence, out_path) -> Path:
    """Merge per-scenario summary rows into one table ordered by scenario id."""
    rows = []
    for run_dir in run_dirs:
        path = Path(run_dir) / "summary.csv"
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != SUMMARY_COLUMNS:
                raise ValueError(f"{path}: unexpected summary columns {header}")
            rows.extend(reader)
    rows.sort(key=lambda r: int(r[0]))
    out_path = Path(out_path)
    with out_path.open("w", newline="") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return out_path
