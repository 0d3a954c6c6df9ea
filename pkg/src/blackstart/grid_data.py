"""Network model, restoration plan containers, and file ingestion.

All powers are stored internally in per-unit on the system MVA base
``s_sys``; energies in pu*h; frequency deviations in pu of ``f_base``.
Input files may give powers in MW (``*_mw`` keys) or per-unit
(``*_pu`` keys); conversion happens once at ingestion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class NetworkValidationError(ValueError):
    """A network file violates a model invariant."""


class NetworkParseError(ValueError):
    """A network file is malformed or misses required fields."""


def hz_to_pu(dev_hz, f_base):
    """Convert a frequency deviation in Hz to per-unit of f_base."""
    return dev_hz / f_base


def pu_to_hz(dev_pu, f_base):
    """Convert a per-unit frequency deviation back to Hz."""
    return dev_pu * f_base


@dataclass(frozen=True)
class LineSpec:
    from_bus: int
    to_bus: int
    x: float  # series reactance, pu on s_sys


@dataclass(frozen=True)
class LoadSpec:
    bus: int
    p: float  # block demand, pu on s_sys


@dataclass(frozen=True)
class GeneratorSpec:
    """Generator start-up, output, and turbine-governor parameters.

    Powers (p_crank, ramp, p_min, p_max) are pu on the system base.
    The inertia constant, droop, valve rate limit, and turbine
    parameters are on the machine base ``s_base`` (MVA).
    """

    bus: int
    is_black_start: bool
    p_crank: float        # cranking demand, pu (system base)
    t_crank: int          # cranking duration, steps
    t_ramp: int           # ramping duration, steps
    ramp: float           # ramp rate, pu/step (system base)
    p_min: float          # pu (system base)
    p_max: float          # pu (system base)
    inertia: float        # H, s (machine base)
    s_base: float         # machine MVA base
    droop: float          # governor gain K (machine base)
    t1: float             # governor lead-lag, s
    t2: float
    t3: float             # valve servo time constant, s
    t4: float             # turbine stage lags, s
    t5: float
    t6: float
    t7: float
    k1: float             # turbine stage tap fractions (sum to 1)
    k3: float
    k5: float
    k7: float
    valve_rate: float     # SAT1 rate limit U_o, pu/s (machine base)
    pfr: bool = True      # participates in primary frequency response
    name: str = ""


@dataclass(frozen=True)
class EssSpec:
    """Energy storage unit: converter-coupled battery."""

    bus: int
    p_rated: float        # pu (system base)
    e_max: float          # capacity, pu*h
    e_init: float         # initial state of charge, pu*h
    eta_converter: float  # AC/DC conversion efficiency, (0, 1]
    eta_storage: float    # storage round-trip leg efficiency, (0, 1]
    ramp: float           # pu/step on AC net injection
    tau: float            # response time constant, s
    name: str = ""


@dataclass(frozen=True)
class NetworkModel:
    """Immutable static grid description.

    Safe to share across concurrent solver or simulator workers.
    """

    buses: tuple
    lines: tuple
    loads: tuple
    generators: tuple
    ess: tuple
    s_sys: float          # system MVA base
    f_base: float         # nominal frequency, Hz
    t_a: float            # minutes per restoration step
    name: str = "net"

    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def n_lines(self):
        return len(self.lines)

    @property
    def n_loads(self):
        return len(self.loads)

    @property
    def n_gens(self):
        return len(self.generators)

    @property
    def n_ess(self):
        return len(self.ess)

    @property
    def bsu_index(self):
        """Index of the single black-start unit."""
        for i, g in enumerate(self.generators):
            if g.is_black_start:
                return i
        raise NetworkValidationError("no black-start unit present")

    def bus_index(self, bus):
        return self.buses.index(bus)

    def alpha(self, gen_index):
        """Machine-to-system base conversion S_g / S_sys."""
        return self.generators[gen_index].s_base / self.s_sys

    def load_vector(self):
        return np.array([d.p for d in self.loads])

    def crank_vector(self):
        return np.array([g.p_crank for g in self.generators])

    def without_ess(self):
        """Copy of the network with all storage units removed."""
        return NetworkModel(self.buses, self.lines, self.loads,
                            self.generators, (), self.s_sys, self.f_base,
                            self.t_a, name=self.name)

    def limit_pu(self, limit_hz):
        """Convert a nadir limit magnitude in Hz to a signed pu limit."""
        return -abs(limit_hz) / self.f_base


@dataclass(frozen=True)
class IncidenceSet:
    """Bus-line incidence and element-to-bus adjacency matrices."""

    a: np.ndarray     # B x L, +1 at from-bus, -1 at to-bus
    a_l: np.ndarray   # B x L, 0/1 terminal adjacency
    a_d: np.ndarray   # B x D
    a_g: np.ndarray   # B x G
    a_s: np.ndarray   # B x S


def build_incidence(net):
    """Construct incidence and adjacency matrices for a validated network."""
    b = net.n_buses
    a = np.zeros((b, net.n_lines))
    a_l = np.zeros((b, net.n_lines))
    for j, ln in enumerate(net.lines):
        a[net.bus_index(ln.from_bus), j] = 1.0
        a[net.bus_index(ln.to_bus), j] = -1.0
        a_l[net.bus_index(ln.from_bus), j] = 1.0
        a_l[net.bus_index(ln.to_bus), j] = 1.0
    a_d = np.zeros((b, net.n_loads))
    for j, d in enumerate(net.loads):
        a_d[net.bus_index(d.bus), j] = 1.0
    a_g = np.zeros((b, net.n_gens))
    for j, g in enumerate(net.generators):
        a_g[net.bus_index(g.bus), j] = 1.0
    a_s = np.zeros((b, net.n_ess))
    for j, s in enumerate(net.ess):
        a_s[net.bus_index(s.bus), j] = 1.0
    return IncidenceSet(a, a_l, a_d, a_g, a_s)


@dataclass
class RestorationState:
    """Element statuses and dispatch at a single restoration step."""

    b_b: np.ndarray
    b_l: np.ndarray
    b_d: np.ndarray
    b_g: np.ndarray
    b_s: np.ndarray
    b_gc: np.ndarray
    b_gr: np.ndarray
    b_go: np.ndarray
    p_g: np.ndarray
    p_r: np.ndarray
    theta: np.ndarray
    p_l: np.ndarray
    p_s: np.ndarray
    p_s_in: np.ndarray
    p_s_out: np.ndarray
    e_s: np.ndarray
    dps_ref: np.ndarray   # ESS setpoint change at this step
    dpe: float = 0.0      # predicted step imbalance
    dp_ref: np.ndarray = None  # generator reference changes (machine base)
    g0_frozen: float = np.nan      # nadir bound frozen at commit time
    gs_frozen: np.ndarray = None

    def __post_init__(self):
        if self.dp_ref is None:
            self.dp_ref = np.zeros_like(self.p_g)
        if self.gs_frozen is None:
            self.gs_frozen = np.full(len(self.p_s), np.nan)


_STATE_FIELDS = ("b_b", "b_l", "b_d", "b_g", "b_s", "b_gc", "b_gr", "b_go",
                 "p_g", "p_r", "theta", "p_l", "p_s", "p_s_in", "p_s_out",
                 "e_s", "dps_ref", "dp_ref", "gs_frozen")


class RestorationPlan:
    """Stacked per-step statuses and dispatch, steps 0..T.

    Column k of each array holds the values at restoration step k.
    Step 0 is the pre-restoration initial condition.
    """

    def __init__(self, net, states=None):
        self.net = net
        self.states = list(states) if states else []

    def __len__(self):
        return len(self.states)

    @property
    def horizon(self):
        """Largest committed step index T."""
        return len(self.states) - 1

    def state(self, k):
        return self.states[k]

    def append(self, state):
        self.states.append(state)

    def array(self, name):
        """Stack one field over steps, shape (n_elem, T+1) or (T+1,)."""
        vals = [getattr(s, name) for s in self.states]
        if np.ndim(vals[0]) == 0:
            return np.array(vals)
        return np.stack(vals, axis=1)

    def restored_count(self, k):
        s = self.states[k]
        return int(s.b_b.sum() + s.b_l.sum() + s.b_d.sum()
                   + s.b_g.sum() + s.b_s.sum())

    def is_complete(self, k=-1):
        s = self.states[k]
        all_on = all(arr.min(initial=1) >= 1
                     for arr in (s.b_b, s.b_l, s.b_d, s.b_g, s.b_s))
        return bool(all_on and s.b_go.min(initial=1) >= 1)

    def to_dict(self):
        d = {"name": self.net.name, "steps": len(self.states), "fields": {}}
        for f in _STATE_FIELDS:
            d["fields"][f] = [np.asarray(getattr(s, f)).tolist()
                              for s in self.states]
        d["fields"]["dpe"] = [s.dpe for s in self.states]
        d["fields"]["g0_frozen"] = [s.g0_frozen for s in self.states]
        return d

    @classmethod
    def from_dict(cls, net, d):
        plan = cls(net)
        for k in range(d["steps"]):
            kw = {f: np.array(d["fields"][f][k]) for f in _STATE_FIELDS}
            kw["dpe"] = d["fields"]["dpe"][k]
            kw["g0_frozen"] = d["fields"]["g0_frozen"][k]
            plan.append(RestorationState(**kw))
        return plan


def initial_state(net):
    """Pre-restoration state: everything offline except the BSU and its bus."""
    b_b = np.zeros(net.n_buses)
    b_g = np.zeros(net.n_gens)
    b_go = np.zeros(net.n_gens)
    bsu = net.bsu_index
    b_g[bsu] = 1.0
    b_go[bsu] = 1.0
    b_b[net.bus_index(net.generators[bsu].bus)] = 1.0
    return RestorationState(
        b_b=b_b,
        b_l=np.zeros(net.n_lines),
        b_d=np.zeros(net.n_loads),
        b_g=b_g,
        b_s=np.zeros(net.n_ess),
        b_gc=np.zeros(net.n_gens),
        b_gr=np.zeros(net.n_gens),
        b_go=b_go,
        p_g=np.zeros(net.n_gens),
        p_r=np.array([-0.5 * g.ramp for g in net.generators]),
        theta=np.zeros(net.n_buses),
        p_l=np.zeros(net.n_lines),
        p_s=np.zeros(net.n_ess),
        p_s_in=np.zeros(net.n_ess),
        p_s_out=np.zeros(net.n_ess),
        e_s=np.array([s.e_init for s in net.ess]),
        dps_ref=np.zeros(net.n_ess),
    )


# ---------------------------------------------------------------------------
# File ingestion

def _power(entry, key, s_sys, context, required=True, default=None):
    """Read a power-like quantity given as <key>_mw or <key>_pu."""
    if key + "_mw" in entry and key + "_pu" in entry:
        raise NetworkParseError(
            f"{context}: give either {key}_mw or {key}_pu, not both")
    if key + "_mw" in entry:
        return float(entry[key + "_mw"]) / s_sys
    if key + "_pu" in entry:
        return float(entry[key + "_pu"])
    if required:
        raise NetworkParseError(f"{context}: missing {key}_mw or {key}_pu")
    return default


def _require(entry, key, context):
    if key not in entry:
        raise NetworkParseError(f"{context}: missing field '{key}'")
    return entry[key]


def load_network(path):
    """Load and validate a network description file (JSON schema).

    The schema is documented field-by-field in the repository README.
    Raises NetworkParseError for malformed files and
    NetworkValidationError for invariant violations.
    """
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkParseError(f"{path}: not valid JSON: {exc}") from exc
    return network_from_dict(raw, name=str(raw.get("name", path)))


def network_from_dict(raw, name="net"):
    """Build a validated NetworkModel from a parsed schema dictionary."""
    for key in ("s_sys_mva", "f_base_hz", "step_minutes", "buses"):
        _require(raw, key, name)
    s_sys = float(raw["s_sys_mva"])
    if s_sys <= 0:
        raise NetworkValidationError(f"{name}: s_sys_mva must be > 0")
    buses = tuple(int(b) for b in raw["buses"])

    lines = []
    for i, e in enumerate(raw.get("lines", [])):
        ctx = f"line[{i}]"
        lines.append(LineSpec(int(_require(e, "from", ctx)),
                              int(_require(e, "to", ctx)),
                              float(_require(e, "x_pu", ctx))))
    loads = []
    for i, e in enumerate(raw.get("loads", [])):
        ctx = f"load[{i}]"
        loads.append(LoadSpec(int(_require(e, "bus", ctx)),
                              _power(e, "p", s_sys, ctx)))
    gens = []
    for i, e in enumerate(raw.get("generators", [])):
        ctx = e.get("name", f"generator[{i}]")
        gov = e.get("governor", {})
        tur = e.get("turbine", {})
        gens.append(GeneratorSpec(
            bus=int(_require(e, "bus", ctx)),
            is_black_start=bool(e.get("black_start", False)),
            p_crank=_power(e, "p_crank", s_sys, ctx, required=False,
                           default=0.0),
            t_crank=int(e.get("t_crank_steps", 0)),
            t_ramp=int(e.get("t_ramp_steps", 0)),
            ramp=_power(e, "ramp", s_sys, ctx) ,
            p_min=_power(e, "p_min", s_sys, ctx),
            p_max=_power(e, "p_max", s_sys, ctx),
            inertia=float(_require(e, "inertia_s", ctx)),
            s_base=float(_require(e, "s_base_mva", ctx)),
            droop=float(_require(e, "droop", ctx)),
            t1=float(gov.get("t1", 0.0)),
            t2=float(gov.get("t2", 0.0)),
            t3=float(_require(gov, "t3", ctx + ".governor")),
            t4=float(_require(tur, "t4", ctx + ".turbine")),
            t5=float(_require(tur, "t5", ctx + ".turbine")),
            t6=float(_require(tur, "t6", ctx + ".turbine")),
            t7=float(_require(tur, "t7", ctx + ".turbine")),
            k1=float(_require(tur, "k1", ctx + ".turbine")),
            k3=float(_require(tur, "k3", ctx + ".turbine")),
            k5=float(_require(tur, "k5", ctx + ".turbine")),
            k7=float(_require(tur, "k7", ctx + ".turbine")),
            valve_rate=float(_require(e, "valve_rate_pu_per_s", ctx)),
            pfr=bool(e.get("pfr", True)),
            name=str(e.get("name", f"G{i + 1}")),
        ))
    ess = []
    for i, e in enumerate(raw.get("ess", [])):
        ctx = e.get("name", f"ess[{i}]")
        if "e_max_mwh" in e:
            e_max = float(e["e_max_mwh"]) / s_sys
            e_init = float(e.get("e_init_mwh", 0.0)) / s_sys
        else:
            e_max = float(_require(e, "e_max_puh", ctx))
            e_init = float(e.get("e_init_puh", 0.0))
        ess.append(EssSpec(
            bus=int(_require(e, "bus", ctx)),
            p_rated=_power(e, "p_rated", s_sys, ctx),
            e_max=e_max,
            e_init=e_init,
            eta_converter=float(e.get("eta_converter", 1.0)),
            eta_storage=float(e.get("eta_storage", 1.0)),
            ramp=_power(e, "ramp", s_sys, ctx),
            tau=float(_require(e, "tau_s", ctx)),
            name=str(e.get("name", f"S{i + 1}")),
        ))

    net = NetworkModel(buses, tuple(lines), tuple(loads), tuple(gens),
                       tuple(ess), s_sys, float(raw["f_base_hz"]),
                       float(raw["step_minutes"]), name=name)
    validate_network(net)
    return net


def validate_network(net):
    """Check all NetworkModel invariants, naming the offending element."""
    if net.s_sys <= 0:
        raise NetworkValidationError("s_sys must be > 0")
    if net.f_base <= 0:
        raise NetworkValidationError("f_base must be > 0")
    if net.t_a <= 0:
        raise NetworkValidationError("step_minutes must be > 0")
    if len(set(net.buses)) != len(net.buses):
        raise NetworkValidationError("duplicate bus ids")
    bus_set = set(net.buses)
    for i, ln in enumerate(net.lines):
        if ln.x <= 0:
            raise NetworkValidationError(f"line[{i}]: reactance must be > 0")
        for b in (ln.from_bus, ln.to_bus):
            if b not in bus_set:
                raise NetworkValidationError(
                    f"line[{i}]: references unknown bus {b}")
        if ln.from_bus == ln.to_bus:
            raise NetworkValidationError(f"line[{i}]: self-loop at bus "
                                         f"{ln.from_bus}")
    for i, d in enumerate(net.loads):
        if d.bus not in bus_set:
            raise NetworkValidationError(
                f"load[{i}]: references unknown bus {d.bus}")
        if d.p < 0:
            raise NetworkValidationError(f"load[{i}]: demand must be >= 0")
    n_bsu = sum(1 for g in net.generators if g.is_black_start)
    if n_bsu != 1:
        raise NetworkValidationError(
            f"exactly one black-start unit required, found {n_bsu}")
    for i, g in enumerate(net.generators):
        who = g.name or f"generator[{i}]"
        if g.bus not in bus_set:
            raise NetworkValidationError(f"{who}: references unknown bus "
                                         f"{g.bus}")
        if not (0 <= g.p_min <= g.p_max):
            raise NetworkValidationError(
                f"{who}: need 0 <= p_min <= p_max")
        if g.t_crank < 0 or g.t_ramp < 0:
            raise NetworkValidationError(f"{who}: negative phase duration")
        if g.is_black_start and (g.t_crank != 0 or g.t_ramp != 0):
            raise NetworkValidationError(
                f"{who}: black-start unit must have zero crank/ramp times")
        if g.is_black_start and g.p_min != 0:
            raise NetworkValidationError(
                f"{who}: black-start unit needs p_min = 0 (it carries the "
                "island from an all-off state)")
        if g.ramp <= 0:
            raise NetworkValidationError(f"{who}: ramp must be > 0")
        if g.inertia <= 0 or g.s_base <= 0:
            raise NetworkValidationError(f"{who}: inertia and s_base must "
                                         "be > 0")
        if abs((g.k1 + g.k3 + g.k5 + g.k7) - 1.0) > 1e-9:
            raise NetworkValidationError(
                f"{who}: turbine fractions k1+k3+k5+k7 must sum to 1")
        if g.pfr and g.valve_rate <= 0:
            raise NetworkValidationError(
                f"{who}: PFR unit needs valve_rate > 0")
        if g.t_ramp > 0 and g.ramp * (g.t_ramp + 0.5) < g.p_min - 1e-12:
            raise NetworkValidationError(
                f"{who}: ramp * (t_ramp + 1/2) < p_min; the unit could "
                "never reach its minimum output at the end of ramping")
        if min(g.t3, g.t4, g.t5, g.t6, g.t7) < 0 or g.t1 < 0 or g.t2 < 0:
            raise NetworkValidationError(f"{who}: negative time constant")
    for i, s in enumerate(net.ess):
        who = s.name or f"ess[{i}]"
        if s.bus not in bus_set:
            raise NetworkValidationError(f"{who}: references unknown bus "
                                         f"{s.bus}")
        if not (0 <= s.e_init <= s.e_max):
            raise NetworkValidationError(
                f"{who}: need 0 <= e_init <= e_max")
        if s.tau <= 0:
            raise NetworkValidationError(f"{who}: tau must be > 0")
        for eta, lab in ((s.eta_converter, "eta_converter"),
                         (s.eta_storage, "eta_storage")):
            if not (0 < eta <= 1):
                raise NetworkValidationError(f"{who}: {lab} must be in (0,1]")
        if s.p_rated <= 0 or s.ramp <= 0:
            raise NetworkValidationError(f"{who}: p_rated and ramp must "
                                         "be > 0")
    return net


def serialize_network(net):
    """Inverse of load_network: schema dictionary with powers in MW."""
    s = net.s_sys
    out = {
        "name": net.name,
        "s_sys_mva": net.s_sys,
        "f_base_hz": net.f_base,
        "step_minutes": net.t_a,
        "buses": list(net.buses),
        "lines": [{"from": ln.from_bus, "to": ln.to_bus, "x_pu": ln.x}
                  for ln in net.lines],
        "loads": [{"bus": d.bus, "p_mw": d.p * s} for d in net.loads],
        "generators": [],
        "ess": [],
    }
    for g in net.generators:
        out["generators"].append({
            "name": g.name, "bus": g.bus, "black_start": g.is_black_start,
            "p_crank_mw": g.p_crank * s, "t_crank_steps": g.t_crank,
            "t_ramp_steps": g.t_ramp, "ramp_mw": g.ramp * s,
            "p_min_mw": g.p_min * s, "p_max_mw": g.p_max * s,
            "inertia_s": g.inertia, "s_base_mva": g.s_base,
            "droop": g.droop,
            "governor": {"t1": g.t1, "t2": g.t2, "t3": g.t3},
            "turbine": {"t4": g.t4, "t5": g.t5, "t6": g.t6, "t7": g.t7,
                        "k1": g.k1, "k3": g.k3, "k5": g.k5, "k7": g.k7},
            "valve_rate_pu_per_s": g.valve_rate, "pfr": g.pfr,
        })
    for u in net.ess:
        out["ess"].append({
            "name": u.name, "bus": u.bus, "p_rated_mw": u.p_rated * s,
            "e_max_mwh": u.e_max * s, "e_init_mwh": u.e_init * s,
            "eta_converter": u.eta_converter, "eta_storage": u.eta_storage,
            "ramp_mw": u.ramp * s, "tau_s": u.tau,
        })
    return out


def save_network(net, path):
    with open(path, "w") as fh:
        json.dump(serialize_network(net), fh, indent=2)
