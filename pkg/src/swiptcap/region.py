"""Sweeps over the EH demand, the power budget or the peak amplitude.

A sweep fixes a base :class:`~swiptcap.solver.ProblemSpec` and varies one
field.  Sweeping the required DC power traces the boundary of the
rate-energy region; sweeping the average-power budget gives capacity
curves, optionally alongside Shannon, e_req = 1 (AP + PP only) and M-ASK
baselines.

The default mode is a serial pass warm-started from the previous point's
distribution.  Cold-start mode solves every point from scratch and may use
a process pool; results are always returned in sweep order.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .certificate import p_lim as _p_lim
from .channel import InputDistribution, shannon_capacity
from .solver import (
    Infeasible,
    NonConvergent,
    ProblemSpec,
    Solution,
    Tolerances,
    ask_rate,
    dual_solve,
)

CSV_HEADER = ("p_req_w", "e_req", "rate_bits", "p_out_w", "lambda1", "lambda2",
              "n_mass_points", "status", "solve_seconds")

SWEEP_VARIABLES = ("p_req", "sigma_x2", "a")


@dataclass(frozen=True, eq=False)
class RegionPoint:
    """One solved (or infeasible) sweep point.

    ``rate``, ``p_out`` and the multipliers are NaN unless ``status`` is
    ``"solved"``.  ``baselines`` maps names such as ``"shannon"`` or
    ``"ask4"`` to rates in bits.
    """

    p_req: float
    e_req: float
    rate: float
    p_out: float
    lambda1: float
    lambda2: float
    n_mass_points: int
    status: str
    solve_seconds: float
    sigma_x2: float
    a: float
    baselines: Dict[str, float] = field(default_factory=dict)
    solution: Optional[Solution] = field(default=None, repr=False)
    message: str = ""

    @property
    def solved(self) -> bool:
        return self.status == "solved"


@dataclass(frozen=True)
class SweepSpec:
    """A base problem plus one swept field.

    ``variable`` is ``"p_req"`` (watts), ``"sigma_x2"`` (watts) or ``"a"``
    (volts); ``values`` must be non-empty and strictly increasing.
    """

    base: ProblemSpec
    variable: str
    values: Tuple[float, ...]
    shannon: bool = False
    smith: bool = False
    ask_sizes: Tuple[int, ...] = ()
    tol: Optional[Tolerances] = None
    cold_start: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("sweep needs at least one value")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if any(m < 2 for m in self.ask_sizes):
            raise ValueError("ASK alphabet sizes must be at least 2")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "ask_sizes", tuple(int(m) for m in self.ask_sizes))

    def point_spec(self, value: float) -> ProblemSpec:
        if self.variable == "p_req":
            return self.base.with_power(value)
        if self.variable == "sigma_x2":
            return self.base.replace(sigma_x2=value)
        return self.base.replace(a=value)


def p_lim(spec: ProblemSpec) -> float:
    """DC power harvested by the Gaussian input at the problem's AP budget.

    Without a peak limit the EH constraint is inactive up to this demand.
    """
    return _p_lim(spec.circuit, spec.channel.h_e, spec.sigma_x2)


def _solve_point(spec: ProblemSpec, tol: Optional[Tolerances],
                 init: Optional[InputDistribution]) -> RegionPoint:
    start = time.perf_counter()
    b = spec.budget
    common = dict(p_req=b.p_req, e_req=b.e_req, sigma_x2=spec.sigma_x2, a=spec.a)
    try:
        sol = dual_solve(spec, tol, init=init)
    except Infeasible as exc:
        return RegionPoint(rate=math.nan, p_out=math.nan, lambda1=math.nan, lambda2=math.nan,
                           n_mass_points=0, status="infeasible",
                           solve_seconds=time.perf_counter() - start, message=str(exc), **common)
    except NonConvergent as exc:
        return RegionPoint(rate=math.nan, p_out=math.nan, lambda1=math.nan, lambda2=math.nan,
                           n_mass_points=0, status="nonconvergent",
                           solve_seconds=time.perf_counter() - start, message=str(exc), **common)
    return RegionPoint(rate=sol.rate, p_out=sol.p_out, lambda1=sol.multipliers.lambda1,
                       lambda2=sol.multipliers.lambda2, n_mass_points=sol.n_mass_points,
                       status="solved", solve_seconds=time.perf_counter() - start,
                       solution=sol, **common)


def _cold(args):
    spec, tol = args
    return _solve_point(spec, tol, None)


def _run(sweep: SweepSpec) -> List[RegionPoint]:
    specs = [sweep.point_spec(v) for v in sweep.values]
    if sweep.cold_start:
        jobs = [(s, sweep.tol) for s in specs]
        if sweep.workers > 1 and len(jobs) > 1:
            # map() preserves submission order whatever the completion order
            with ProcessPoolExecutor(max_workers=sweep.workers) as pool:
                return list(pool.map(_cold, jobs))
        return [_cold(j) for j in jobs]
    points: List[RegionPoint] = []
    init = None
    for spec in specs:
        pt = _solve_point(spec, sweep.tol, init)
        points.append(pt)
        if pt.solved and sweep.variable != "a":
            init = pt.solution.distribution
    return points


def _with_baselines(sweep: SweepSpec, points: List[RegionPoint]) -> List[RegionPoint]:
    out = []
    for value, pt in zip(sweep.values, points):
        spec = sweep.point_spec(value)
        extra: Dict[str, float] = {}
        if sweep.shannon:
            extra["shannon"] = shannon_capacity(spec.sigma_x2, spec.h_i, spec.channel.sigma_n2)
        if sweep.smith:
            extra["smith"] = _rate_or_nan(lambda: dual_solve(spec.with_power(0.0), sweep.tol))
        for m in sweep.ask_sizes:
            extra[f"ask{m}"] = _rate_or_nan(lambda: ask_rate(spec, m, sweep.tol))
        out.append(_replace_baselines(pt, extra))
    return out


def _rate_or_nan(solve) -> float:
    try:
        return solve().rate
    except (Infeasible, NonConvergent):
        return math.nan


def _replace_baselines(pt: RegionPoint, extra: Dict[str, float]) -> RegionPoint:
    return replace(pt, baselines={**pt.baselines, **extra})


def rate_energy_region(sweep: SweepSpec) -> List[RegionPoint]:
    """Boundary of the rate-energy region: one solve per required DC power.

    Infeasible demands are recorded with ``status="infeasible"`` instead of
    stopping the sweep.
    """
    if sweep.variable != "p_req":
        raise ValueError("rate_energy_region sweeps p_req")
    return _with_baselines(sweep, _run(sweep))


def capacity_vs_ap(sweep: SweepSpec) -> List[RegionPoint]:
    """Capacity against the average-power budget at a fixed EH demand."""
    if sweep.variable != "sigma_x2":
        raise ValueError("capacity_vs_ap sweeps sigma_x2")
    return _with_baselines(sweep, _run(sweep))


def capacity_vs_peak(sweep: SweepSpec) -> List[RegionPoint]:
    """Capacity against the effective peak amplitude at a fixed EH demand."""
    if sweep.variable != "a":
        raise ValueError("capacity_vs_peak sweeps a")
    return _with_baselines(sweep, _run(sweep))


def _fmt(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    # 17 significant digits round-trip a double exactly
    return format(float(value), ".16e")


def emit_csv(points: Sequence[RegionPoint], path, timing: bool = False) -> None:
    """Write sweep points with the fixed header, one row per point.

    ``solve_seconds`` is left empty unless ``timing`` is set, so that the
    same inputs always produce byte-identical files.
    """
    if not points:
        raise ValueError("no points to write")
    rows = []
    for pt in points:
        solved = pt.solved
        rows.append([
            _fmt(pt.p_req),
            _fmt(pt.e_req),
            _fmt(pt.rate) if solved else "",
            _fmt(pt.p_out) if solved else "",
            _fmt(pt.lambda1) if solved else "",
            _fmt(pt.lambda2) if solved else "",
            str(pt.n_mass_points) if solved else "",
            pt.status,
            _fmt(pt.solve_seconds) if timing else "",
        ])
    _write_rows(path, CSV_HEADER, rows)


def emit_baselines_csv(points: Sequence[RegionPoint], path) -> None:
    """Capacity curve with its baselines: one row per sweep point."""
    if not points:
        raise ValueError("no points to write")
    names = sorted({k for pt in points for k in pt.baselines}, key=_baseline_order)
    header = ("sigma_x2_w", "a_v", "p_req_w", "rate_bits", "status") + tuple(f"{n}_bits" for n in names)
    rows = []
    for pt in points:
        rows.append([_fmt(pt.sigma_x2), _fmt(pt.a), _fmt(pt.p_req),
                     _fmt(pt.rate) if pt.solved else "", pt.status]
                    + [_fmt(pt.baselines.get(n, math.nan)) for n in names])
    _write_rows(path, header, rows)


def _baseline_order(name: str):
    if name.startswith("ask"):
        return (2, int(name[3:]))
    return (0 if name == "shannon" else 1, 0)


def _write_rows(path, header, rows) -> None:
    path = os.fspath(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror or exc}") from exc


def read_csv(path) -> List[Dict[str, str]]:
    """Rows of a sweep CSV as dictionaries of strings."""
    with open(os.fspath(path), newline="") as fh:
        return list(csv.DictReader(fh))
