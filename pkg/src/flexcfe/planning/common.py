"""Variable bookkeeping and constraint blocks shared by both F-CFE builders."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..domain import ComplianceMode, SystemConfig, TimeGrid
from ..milp import LinearModel, VarKind

BINARY = VarKind.BINARY


def _tag(width: int, k: int) -> str:
    return f"{k + 1:0{width}d}"


@dataclass
class VarIndex:
    """Names of every model variable, grouped by symbol.

    Hourly-blocked symbols (statuses and DA purchases) hold one name per MTU;
    :meth:`per_slot` expands them. Second-stage arrays are indexed
    ``[scenario, slot]`` (and ``[scenario, source, slot]`` for green RT).
    """

    grid: TimeGrid
    n_sources: int
    mode: ComplianceMode
    no_sell: bool
    big_m: float
    hourly_exports: bool = False
    xg: np.ndarray = None        # (N, H)
    xng: np.ndarray = None       # (H,)
    v: np.ndarray = None         # (T,)
    u: np.ndarray = None         # (Y,)
    pchg: np.ndarray = None
    pdchg: np.ndarray = None
    xchg: np.ndarray = None
    xdchg: np.ndarray = None
    soc: np.ndarray = None       # (T+1,)
    pg: np.ndarray = None        # (N, H) DA green purchase
    png: np.ndarray = None       # (H,)
    pnet: np.ndarray = None      # deterministic only, (T,)
    pnet_plus: np.ndarray = None  # (H,) when hourly_exports else (T,)
    pnet_minus: np.ndarray = None
    psell_da: np.ndarray = None  # stochastic sell_back only, (H,)
    pg_rt: np.ndarray = None     # (S, N, T)
    png_rt: np.ndarray = None    # (S, T)
    psell_rt: np.ndarray = None  # (S, T) sell_back
    pcurt: np.ndarray = None     # (S, T) no_sell
    n_scenarios: int = 0
    extra: dict = field(default_factory=dict)

    def per_slot(self, names: np.ndarray) -> np.ndarray:
        """Expand an MTU-indexed name array (last axis H) to slot resolution."""
        return names[..., self.grid.mtu_of_slot]

    FIRST_STAGE = ("xg", "xng", "v", "u", "pchg", "pdchg", "xchg", "xdchg", "soc",
                   "pg", "png", "psell_da")

    def first_stage_names(self) -> list[str]:
        out = []
        for key in self.FIRST_STAGE:
            arr = getattr(self, key)
            if arr is not None:
                out.extend(arr.ravel().tolist())
        return out

    def all_names(self) -> list[str]:
        out = []
        for key in ("xg", "xng", "v", "u", "pg", "png", "pchg", "pdchg", "xchg", "xdchg",
                    "soc", "pnet", "pnet_plus", "pnet_minus", "psell_da", "pg_rt", "png_rt",
                    "psell_rt", "pcurt"):
            arr = getattr(self, key)
            if arr is not None:
                out.extend(arr.ravel().tolist())
        return out


def add_vars(model: LinearModel, prefix: str, shape, kind=VarKind.CONTINUOUS,
             lower=0.0, upper=np.inf, width: int = 4) -> np.ndarray:
    """Add a block of variables named ``prefix_<k>`` (or ``prefix_<i>_<k>``)."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    names = np.empty(shape, dtype=object)
    for idx in np.ndindex(*shape):
        head = "_".join(str(i + 1) for i in idx[:-1])
        name = f"{prefix}_{head + '_' if head else ''}{_tag(width, idx[-1])}"
        model.add_var(name, kind, lower, upper)
        names[idx] = name
    return names


def add_status_and_battery(model: LinearModel, grid: TimeGrid, config: SystemConfig,
                           vi: VarIndex, width: int) -> None:
    """Statuses, CF-block selection and the battery model (first-stage part).

    Hourly blocking is enforced by sharing one status variable per MTU.
    """
    bat = config.battery
    N, T, H = config.n_sources, grid.T, grid.H
    Y = config.policy.blocks(grid)
    cb_allowed = Y - config.policy.cf_required
    idx = model.index
    mtu = grid.mtu_of_slot

    vi.xg = add_vars(model, "xg", (N, H), BINARY, width=width)
    vi.xng = add_vars(model, "xng", H, BINARY, width=width)
    vi.v = add_vars(model, "v", T, BINARY, width=width)
    vi.u = add_vars(model, "u", Y, BINARY, width=width)
    vi.pchg = add_vars(model, "Pchg", T, upper=bat.charge_rate_max, width=width)
    vi.pdchg = add_vars(model, "Pdchg", T, upper=bat.discharge_rate_max, width=width)
    vi.xchg = add_vars(model, "xchg", T, BINARY, width=width)
    vi.xdchg = add_vars(model, "xdchg", T, BINARY, width=width)
    vi.soc = add_vars(model, "SoC", T + 1, lower=bat.soc_min, upper=bat.soc_max, width=width)
    model.fix(vi.soc[0], bat.soc_init)

    k_c = 100.0 / bat.capacity * bat.eta_c * grid.dt
    k_d = 100.0 / bat.capacity * grid.dt / bat.eta_d
    for t in range(T):
        tag = _tag(width, t)
        pc, pd = idx(vi.pchg[t]), idx(vi.pdchg[t])
        xc, xd = idx(vi.xchg[t]), idx(vi.xdchg[t])
        model.add_constraint(f"chgmax_{tag}", {pc: 1.0, xc: -bat.charge_rate_max}, "<=", 0.0)
        model.add_constraint(f"dchgmax_{tag}", {pd: 1.0, xd: -bat.discharge_rate_max}, "<=", 0.0)
        if t > 0:
            pc0, pd0 = idx(vi.pchg[t - 1]), idx(vi.pdchg[t - 1])
            model.add_constraint(f"chgrampup_{tag}", {pc: 1.0, pc0: -1.0}, "<=", bat.chg_ramp)
            model.add_constraint(f"chgrampdn_{tag}", {pc: 1.0, pc0: -1.0}, ">=", -bat.chg_ramp)
            model.add_constraint(f"dchgrampup_{tag}", {pd: 1.0, pd0: -1.0}, "<=", bat.dchg_ramp)
            model.add_constraint(f"dchgrampdn_{tag}", {pd: 1.0, pd0: -1.0}, ">=", -bat.dchg_ramp)
        model.add_constraint(f"excl_{tag}", {xc: 1.0, xd: 1.0}, "<=", 1.0)
        model.add_constraint(
            f"soc_{tag}",
            {idx(vi.soc[t + 1]): 1.0, idx(vi.soc[t]): -1.0, pc: -k_c, pd: k_d}, "=", 0.0)
        # green and non-green are mutually exclusive through v
        vt = idx(vi.v[t])
        for i in range(N):
            model.add_constraint(f"gv_{i + 1}_{tag}", {idx(vi.xg[i, mtu[t]]): 1.0, vt: -1.0},
                                 "<=", 0.0)
        model.add_constraint(f"vng_{tag}", {vt: 1.0, idx(vi.xng[mtu[t]]): 1.0}, "<=", 1.0)

    # end-of-day SoC: the state after the last slot of each day
    for d in range(grid.D):
        k = (d + 1) * grid.slots_per_day
        model.add_constraint(f"term_{_tag(width, d)}", {idx(vi.soc[k]): 1.0}, ">=",
                             bat.terminal_soc)

    model.add_constraint("cbcount", {idx(n): 1.0 for n in vi.u}, "<=", float(cb_allowed))
    block_of_mtu = grid.day_of_mtu if config.policy.mode is ComplianceMode.DAILY \
        else np.arange(H)
    for h in range(H):
        model.add_constraint(f"link_{_tag(width, h)}",
                             {idx(vi.xng[h]): 1.0, idx(vi.u[block_of_mtu[h]]): -1.0}, "<=", 0.0)


def add_sourcing(model: LinearModel, status: str, power: str, big_m: float, eps: float,
                 name: str) -> None:
    """eps * x <= P <= M * x."""
    s, p = model.index(status), model.index(power)
    model.add_constraint(f"{name}_hi", {p: 1.0, s: -big_m}, "<=", 0.0)
    if eps > 0:
        model.add_constraint(f"{name}_lo", {p: -1.0, s: eps}, "<=", 0.0)


def name_width(grid: TimeGrid) -> int:
    return len(str(grid.T + 1))
