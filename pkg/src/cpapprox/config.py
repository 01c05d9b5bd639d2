"""Validated JSON configuration for the command-line tools; unknown keys are errors."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .algebra import PEFunction, SchrodingerSpec
from .cutproject import Scheme, WindowFn, fibonacci_scheme, integer_lattice_scheme, rational_approximant
from .harness import ExperimentPlan, default_fibonacci_operator, default_test_functions
from .spectra import TestFunction

__all__ = ["ConfigError", "Config", "load_config"]


class ConfigError(ValueError):
    """Invalid configuration (exit code 2)."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class WindowConfig(_Strict):
    kind: Literal["interval-box", "ball"] = "interval-box"
    center: list[float]
    half_widths: Optional[list[float]] = None
    radius: Optional[float] = None


class SchemeConfig(_Strict):
    """Either a preset (``fibonacci`` or ``integer``) or an explicit basis."""

    preset: Optional[Literal["fibonacci", "integer"]] = None
    d: int = 1
    m: int = 0
    basis: Optional[list[float]] = None  # row-major
    window: Optional[WindowConfig] = None
    shift: Optional[list[float]] = None
    approximant_q: Optional[int] = Field(default=None, ge=1)

    def base_scheme(self) -> Scheme:
        if self.preset == "fibonacci":
            s = fibonacci_scheme()
        elif self.preset == "integer":
            s = integer_lattice_scheme(self.d)
        else:
            if self.basis is None:
                raise ConfigError("scheme needs a preset or a basis")
            data = {"d": self.d, "m": self.m, "basis": self.basis,
                    "window": None if self.window is None else self.window.model_dump(exclude_none=True),
                    "shift": self.shift}
            s = Scheme.from_json(data)
        if self.shift is not None and self.preset is not None:
            s = s.with_shift(self.shift)
        return s

    def build(self) -> Scheme:
        s = self.base_scheme()
        if self.approximant_q is not None:
            s = rational_approximant(s, self.approximant_q).scheme
        return s


Number = Union[float, list[float]]


class HoppingConfig(_Strict):
    gamma: list[float]
    value: Union[Number, dict] = 1.0


class OperatorConfig(_Strict):
    """Hoppings per displacement plus an optional potential; ``preset: fibonacci`` gives the default model."""

    preset: Optional[Literal["fibonacci", "free"]] = None
    dim: int = 1
    tol: float = Field(default=1e-9, gt=0)
    hoppings: list[HoppingConfig] = []
    potential: Optional[Union[Number, dict]] = None
    corrupt: bool = False  # add a non-Hermitian term (for testing the checks)

    def build(self) -> SchrodingerSpec:
        if self.preset == "fibonacci":
            return default_fibonacci_operator()
        if self.preset == "free":
            return SchrodingerSpec({(1.0,) * self.dim: 1.0}, dim=self.dim, tol=self.tol)

        def pe(v):
            return PEFunction.from_json(v) if isinstance(v, dict) else PEFunction.constant(_complex(v))

        hops = tuple((h.gamma, pe(h.value)) for h in self.hoppings)
        pot = None if self.potential is None else pe(self.potential)
        return SchrodingerSpec(hops, pot, self.dim, self.tol)


def _complex(v) -> complex:
    if isinstance(v, list):
        if len(v) != 2:
            raise ConfigError("complex values are [re, im]")
        return complex(v[0], v[1])
    return complex(v)


class WindowFnConfig(_Strict):
    epsilon: float = Field(default=0.0, ge=0)
    side: Literal["upper", "lower"] = "upper"

    def build(self, scheme: Scheme) -> WindowFn | None:
        if scheme.m == 0 or self.epsilon == 0:
            return None
        return WindowFn(scheme.window, self.epsilon, self.side)


class RhoConfig(_Strict):
    profile: Literal["uniform-ball", "bump", "orbit"] = "bump"
    radius: float = Field(default=8.0, gt=0)
    smoothness: float = Field(default=2.0, gt=0)


class GridConfig(_Strict):
    lo: float = -3.0
    hi: float = 3.0
    n: int = Field(default=601, ge=2)


class DosConfig(_Strict):
    boundary: Literal["open", "periodic", "auto"] = "auto"
    periods: Optional[list[list[float]]] = None
    min_cell_length: float = Field(default=256.0, ge=0)
    rho: RhoConfig = RhoConfig()
    translates: int = Field(default=0, ge=0)
    translate_radius: float = Field(default=0.0, ge=0)
    ids_grid: GridConfig = GridConfig()
    dump_matrix: bool = False


class TestFunctionConfig(_Strict):
    kind: Literal["triangle", "cosine-bump", "gaussian-truncated"]
    center: list[float] = [0.0]
    scale: float = Field(default=0.25, gt=0)

    def build(self) -> TestFunction:
        return TestFunction(self.kind, tuple(self.center), self.scale)


class AutocorrConfig(_Strict):
    R_eff: float = Field(default=10.0, gt=0)
    delta_max: float = Field(default=3.0, ge=0)
    periodic: bool = False
    pairs: list[tuple[TestFunctionConfig, TestFunctionConfig]] = []


class PlanConfig(_Strict):
    kind: Literal["dos", "autocorr", "both"] = "both"
    denominators: list[int] = [2, 8, 34]
    epsilons: list[float] = [0.2, 0.05, 0.01]
    side: Literal["upper", "lower"] = "upper"
    pairs: Optional[list[tuple[TestFunctionConfig, TestFunctionConfig]]] = None
    reference_radius: float = Field(default=600.0, gt=0)
    hull_radius: float = Field(default=100.0, gt=0)
    rho_profile: Literal["uniform-ball", "bump"] = "bump"
    rho_smoothness: float = Field(default=2.0, gt=0)
    shift_nodes: int = Field(default=3, ge=1)
    shift_samples: int = Field(default=8, ge=1)
    min_cell_length: float = Field(default=256.0, ge=0)
    jitter: float = Field(default=0.1, ge=0)
    final_tolerance_dos: Optional[float] = None
    final_tolerance_autocorr: Optional[float] = None
    check_reference: bool = True


class AlgebraConfig(_Strict):
    radii: list[float] = [50.0]
    kernels: int = Field(default=20, ge=1)
    pe_radius: float = Field(default=1.7, ge=0)
    tolerance: float = Field(default=1e-12, ge=0)


class PatchStatsConfig(_Strict):
    class_radius: float = Field(default=2.0, ge=0)


class Config(_Strict):
    seed: int = Field(default=0, ge=0, lt=2**64)
    out: Optional[str] = None
    radius: float = Field(default=50.0, gt=0)
    scheme: SchemeConfig = SchemeConfig(preset="fibonacci")
    window: WindowFnConfig = WindowFnConfig()
    operator: OperatorConfig = OperatorConfig(preset="fibonacci")
    generate: PatchStatsConfig = PatchStatsConfig()
    dos: DosConfig = DosConfig()
    autocorr: AutocorrConfig = AutocorrConfig()
    plan: PlanConfig = PlanConfig()
    algebra: AlgebraConfig = AlgebraConfig()

    @field_validator("radius")
    @classmethod
    def _finite(cls, v):
        if v != v or v == float("inf"):
            raise ValueError("radius must be finite")
        return v

    def experiment_plan(self, seed: int, final_tolerance: float | None = None) -> ExperimentPlan:
        p = self.plan
        pairs = default_test_functions() if p.pairs is None else tuple((a.build(), b.build()) for a, b in p.pairs)
        return ExperimentPlan(
            scheme=self.scheme.base_scheme(),
            denominators=tuple(p.denominators),
            epsilons=tuple(p.epsilons),
            side=p.side,
            operator=self.operator.build(),
            test_functions=pairs,
            reference_radius=p.reference_radius,
            hull_radius=p.hull_radius,
            rho_profile=p.rho_profile,
            rho_smoothness=p.rho_smoothness,
            shift_nodes=p.shift_nodes,
            shift_samples=p.shift_samples,
            min_cell_length=p.min_cell_length,
            jitter=p.jitter,
            final_tolerance=final_tolerance,
            check_reference=p.check_reference,
            seed=seed,
        )


def load_config(path) -> Config:
    """Parse and validate a JSON config file, raising :class:`ConfigError` on any problem."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    try:
        return Config.model_validate(data)
    except Exception as exc:
        raise ConfigError(str(exc)) from exc

