"""Finite plants composed with residual detectors into MDPs with an alarm region.

The composed state is ``(z, d)`` where ``z`` is the plant state and ``d`` the
detector level (singleton for the chi-squared detector). When the nominal
output changes over time, the stage index is added to the state as well so
that residuals and alarms remain functions of the state alone.

Detector timing follows the product kernel: the level stored in ``x_{t+1}`` is
the update of the level in ``x_t`` driven by the residual of ``z_t``, and a
state is an alarm state when its stored level exceeds the threshold.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, RejectedInputError
from .mdp_core import ROW_SUM_TOL, Mdp, require_valid

CHI2 = "chi2"
CUSUM = "cusum"
NEAREST = "nearest"
FLOOR = "floor"


@dataclass(frozen=True)
class FinitePlant:
    kernel: np.ndarray            # (Z, A, Z)
    outputs: np.ndarray           # (Z,) scalar output C z
    nominal_outputs: np.ndarray   # (T+1,) nominal output per stage
    initial_state: int = 0

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=np.float64)
        outputs = np.array(self.outputs, dtype=np.float64)
        nominal = np.array(self.nominal_outputs, dtype=np.float64)
        if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[2]:
            raise RejectedInputError(f"plant kernel must be (Z, A, Z), got {kernel.shape}")
        if outputs.shape != (kernel.shape[0],):
            raise RejectedInputError("output table must have one entry per plant state")
        if nominal.ndim != 1 or nominal.shape[0] < 2:
            raise RejectedInputError("nominal outputs must be a sequence of length T+1 >= 2")
        if np.any(kernel < 0) or np.any(np.abs(kernel.sum(axis=2) - 1.0) > ROW_SUM_TOL):
            raise RejectedInputError("plant kernel rows must be probability distributions")
        if not (np.all(np.isfinite(outputs)) and np.all(np.isfinite(nominal))):
            raise RejectedInputError("outputs must be finite")
        if not 0 <= int(self.initial_state) < kernel.shape[0]:
            raise RejectedInputError("plant initial state out of range")
        for arr in (kernel, outputs, nominal):
            arr.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "nominal_outputs", nominal)
        object.__setattr__(self, "initial_state", int(self.initial_state))

    @property
    def num_states(self):
        return self.kernel.shape[0]

    @property
    def num_actions(self):
        return self.kernel.shape[1]

    @property
    def horizon(self):
        return self.nominal_outputs.shape[0] - 1

    @property
    def time_varying(self):
        return bool(np.any(self.nominal_outputs != self.nominal_outputs[0]))

    def residual(self, z, t):
        return abs(self.outputs[z] - self.nominal_outputs[t])

    def to_dict(self):
        return {
            "kernel": self.kernel.tolist(),
            "outputs": self.outputs.tolist(),
            "nominal_outputs": self.nominal_outputs.tolist(),
            "initial_state": self.initial_state,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["kernel"], data["outputs"], data["nominal_outputs"],
                       data.get("initial_state", 0))
        except KeyError as exc:
            raise RejectedInputError(f"plant JSON is missing field {exc}") from None


@dataclass(frozen=True)
class DetectorSpec:
    kind: str
    threshold: float
    bias: float = None
    grid: tuple = None
    max_level: float = None
    rounding: str = NEAREST

    def __post_init__(self):
        if self.kind not in (CHI2, CUSUM):
            raise RejectedInputError(f"unknown detector kind {self.kind!r}")
        if not self.threshold > 0:
            raise RejectedInputError("detector threshold must be positive")
        if self.kind == CHI2:
            return
        if self.bias is None or not self.bias > 0:
            raise RejectedInputError("cusum bias must be positive")
        if self.rounding not in (NEAREST, FLOOR):
            raise RejectedInputError(f"unknown rounding {self.rounding!r}")
        grid = tuple(float(g) for g in (self.grid or ()))
        if len(grid) < 2 or grid[0] != 0.0 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise RejectedInputError("cusum grid must be strictly increasing and start at 0")
        top = grid[-1] if self.max_level is None else float(self.max_level)
        if top not in grid:
            raise RejectedInputError("max_level must be one of the grid levels")
        object.__setattr__(self, "grid", tuple(g for g in grid if g <= top))
        object.__setattr__(self, "max_level", top)

    @property
    def num_levels(self):
        return 1 if self.kind == CHI2 else len(self.grid)

    def projection_error(self):
        """Largest error one projection step can introduce below ``max_level``."""
        if self.kind == CHI2:
            return 0.0
        gaps = np.diff(self.grid)
        return float(gaps.max() / 2 if self.rounding == NEAREST else gaps.max())

    def declared_bound(self, steps):
        """Bound on |grid level - capped exact level| after ``steps`` updates."""
        return steps * self.projection_error()

    def to_dict(self):
        data = {"kind": self.kind, "threshold": self.threshold}
        if self.kind == CUSUM:
            data.update(bias=self.bias, grid=list(self.grid), max_level=self.max_level,
                        rounding=self.rounding)
        return data

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(kind=data["kind"], threshold=float(data["threshold"]),
                       bias=data.get("bias"), grid=data.get("grid"),
                       max_level=data.get("max_level"), rounding=data.get("rounding", NEAREST))
        except KeyError as exc:
            raise RejectedInputError(f"detector JSON is missing field {exc}") from None


def chi2_alarm(z, t, plant, tau):
    """True iff the squared output residual of plant state ``z`` at stage ``t`` exceeds ``tau``."""
    return bool(plant.residual(z, t) ** 2 > tau)


def project_level(value, grid, max_level=None, rounding=NEAREST):
    """Map a nonnegative level onto the grid; ties go to the lower level."""
    grid = np.asarray(grid, dtype=np.float64)
    top = grid[-1] if max_level is None else max_level
    if value >= top:
        return float(top)
    hi = int(np.searchsorted(grid, value, side="left"))
    if grid[hi] == value:
        return float(value)
    lo = hi - 1
    if rounding == FLOOR:
        return float(grid[lo])
    return float(grid[hi] if grid[hi] - value < value - grid[lo] else grid[lo])


def cusum_step(level, residual, b, grid=None, max_level=None, rounding=NEAREST):
    """One CUSUM update ``max(0, level + |residual| - b)``, optionally projected onto ``grid``."""
    if level < 0:
        raise RejectedInputError("cusum level must be nonnegative")
    raw = max(0.0, level + abs(residual) - b)
    if grid is None:
        return raw
    return project_level(raw, grid, max_level, rounding)


def cusum_exact(residuals, b, threshold=None, max_level=None):
    """Unprojected recursion from level 0; returns the level after each update.

    With ``max_level`` the level is capped there, which is the reference the
    grid recursion is compared against.
    """
    levels = []
    level = 0.0
    for r in residuals:
        level = max(0.0, level + abs(r) - b)
        if max_level is not None:
            level = min(level, max_level)
        levels.append(level)
    return levels


@dataclass
class Layout:
    """Decoding of composed state indices into ``(t, z, detector level index)``."""
    num_plant_states: int
    num_levels: int
    timed: bool
    horizon: int
    triples: list = field(default_factory=list)

    def index(self, z, d, t=0):
        stage = t if self.timed else 0
        return (stage * self.num_levels + d) * self.num_plant_states + z


def _check_resolution(det):
    if det.kind == CUSUM and not any(0 < g <= det.threshold for g in det.grid):
        raise ConfigurationError(
            "cusum grid has no positive level at or below the threshold",
            diagnostic={"grid": list(det.grid), "threshold": det.threshold,
                        "smallest_positive_level": det.grid[1]},
        )


def compose_with_layout(plant, det, rewards=None, horizon=None, terminal_reward=None):
    """Product MDP of ``plant`` and ``det`` plus the layout used to index it."""
    T = plant.horizon if horizon is None else int(horizon)
    if T != plant.horizon:
        raise RejectedInputError(f"horizon {T} does not match {plant.horizon + 1} nominal outputs")
    _check_resolution(det)
    Z, A = plant.num_states, plant.num_actions
    L = det.num_levels
    timed = plant.time_varying
    stages = T + 1 if timed else 1
    layout = Layout(Z, L, timed, T)
    N = stages * L * Z
    grid = np.asarray(det.grid) if det.kind == CUSUM else np.zeros(1)

    P = np.zeros((N, A, N))
    alarm = []
    for s in range(stages):
        for d in range(L):
            for z in range(Z):
                i = layout.index(z, d, s)
                layout.triples.append((s if timed else None, z, d))
                if det.kind == CHI2:
                    hit = chi2_alarm(z, s, plant, det.threshold)
                else:
                    hit = grid[d] > det.threshold
                if hit:
                    alarm.append(i)
                if det.kind == CHI2:
                    d_next = 0
                else:
                    level = cusum_step(grid[d], plant.residual(z, s), det.bias, grid,
                                       det.max_level, det.rounding)
                    d_next = int(np.searchsorted(grid, level))
                s_next = min(s + 1, stages - 1)
                for a in range(A):
                    for z_next in np.flatnonzero(plant.kernel[z, a]):
                        P[i, a, layout.index(z_next, d_next, s_next)] += plant.kernel[z, a, z_next]

    x0 = layout.index(plant.initial_state, 0, 0)
    if x0 in set(alarm):
        raise ConfigurationError("the initial plant state is already in the alarm region",
                                 diagnostic={"initial_state": plant.initial_state,
                                             "residual": float(plant.residual(plant.initial_state, 0))})
    plant_of = np.array([z for (_, z, _) in layout.triples])
    r = np.zeros((T, Z, A)) if rewards is None else np.asarray(rewards, dtype=np.float64)
    if r.shape == (Z, A):
        r = np.broadcast_to(r, (T, Z, A))
    if r.shape != (T, Z, A):
        raise RejectedInputError(f"rewards must be (Z, A) or (T, Z, A), got {r.shape}")
    term = np.zeros(Z) if terminal_reward is None else np.asarray(terminal_reward, dtype=np.float64)
    mdp = Mdp(transition=P, rewards=r[:, plant_of, :], terminal_reward=term[plant_of],
              alarm_states=sorted(alarm), initial_state=x0)
    require_valid(mdp)
    return mdp, layout


def compose(plant, det, rewards=None, horizon=None, terminal_reward=None):
    return compose_with_layout(plant, det, rewards, horizon, terminal_reward)[0]


def load_plant(path):
    with open(path) as fh:
        data = json.load(fh)
    return FinitePlant.from_dict(data), data.get("rewards"), data.get("terminal_reward")


def load_detector(path):
    with open(path) as fh:
        return DetectorSpec.from_dict(json.load(fh))
