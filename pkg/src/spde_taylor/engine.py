"""Compilation of computable term sums into executable one-step maps.

A compiled scheme is an ordered list of star-free terms.  Evaluating a step
of size h over a fine mesh of substeps r_j = j * h_fine works term by term:

* ``I^0_0``            -> (e^{Ah} - I) u0, exact per mode.
* ``I^0_1``            -> A^{-1}(e^{Ah} - I) F(u0), exact per mode.
* ``I^0_2``, ``I^i_2`` -> left-point substep sums with the exact semigroup
                          weight e^{-lambda_i (h - r_j)} applied per mode to
                          each substep contribution.
* ``I^i_1``            -> left-point Riemann sums with the same weights.

Arguments of multilinear terms are evaluated as trajectories on the same
mesh (value at each left point), so iterated stochastic integrals reuse the
increments that drive the outer integral.  The fine-mesh reference solution
iterates the one-substep exponential scheme built from exactly this
machinery, which makes scheme-versus-reference comparisons on shared noise
bit-consistent.

Monte-Carlo streams come from a counter-based generator: path p draws from
``Philox(key=seed, counter=p << 128)``, so any path's noise can be
regenerated independently of evaluation order or threading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import GridWorkspace, ModelSpec, SpectralState
from .terms import (
    I0,
    In,
    TermExpr,
    contains_starred,
    psi,
    render_compact,
    required_derivative_orders,
    summands,
)
from .trees import NodeLabel, SWood, expand, initial_wood

PATH_COUNTER_STRIDE = 1 << 128


class EngineError(Exception):
    pass


class NotImplementableError(EngineError):
    """The term sum still contains a starred operator."""


class UnsupportedDerivativeOrderError(EngineError):
    """The model does not provide a derivative the plan requires."""


class MeshMismatchError(EngineError):
    """Step size and fine mesh do not align."""


class NonfiniteValueError(EngineError):
    """A term evaluated to NaN or infinity; carries the term rendering."""

    def __init__(self, term: str):
        super().__init__(f"non-finite value while evaluating {term}")
        self.term = term


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Independent, reproducible stream for one Monte-Carlo path."""
    bits = np.random.Philox(key=seed, counter=path_index * PATH_COUNTER_STRIDE)
    return np.random.Generator(bits)


@dataclass(frozen=True)
class NoisePath:
    """Gaussian increments of the driving cylindrical process on a fine mesh.

    Row j holds the M per-mode increments over [j*h_fine, (j+1)*h_fine];
    entries are i.i.d. N(0, h_fine).
    """

    increments: np.ndarray
    h_fine: float

    def __post_init__(self) -> None:
        arr = np.asarray(self.increments, dtype=float)
        if arr.ndim != 2:
            raise ValueError("increments must be a (substeps, modes) array")
        if self.h_fine <= 0.0:
            raise ValueError("h_fine must be positive")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "increments", arr)

    @property
    def substeps(self) -> int:
        return self.increments.shape[0]

    @property
    def noise_modes(self) -> int:
        return self.increments.shape[1]

    @property
    def duration(self) -> float:
        return self.substeps * self.h_fine

    @staticmethod
    def draw(
        rng: np.random.Generator, substeps: int, noise_modes: int, h_fine: float
    ) -> "NoisePath":
        increments = rng.standard_normal((substeps, noise_modes)) * np.sqrt(h_fine)
        return NoisePath(increments=increments, h_fine=h_fine)

    def prefix(self, substeps: int) -> "NoisePath":
        if substeps > self.substeps:
            raise MeshMismatchError(
                f"requested {substeps} substeps from a path of {self.substeps}"
            )
        return NoisePath(increments=self.increments[:substeps], h_fine=self.h_fine)

    def coarsened(self, factor: int) -> "NoisePath":
        """Sum consecutive increments; the same Brownian path on a mesh
        ``factor`` times coarser."""
        if self.substeps % factor:
            raise MeshMismatchError(
                f"{self.substeps} substeps do not group into blocks of {factor}"
            )
        blocks = self.increments.reshape(self.substeps // factor, factor, -1)
        return NoisePath(increments=blocks.sum(axis=1), h_fine=self.h_fine * factor)


@dataclass(frozen=True)
class CompiledScheme:
    terms: tuple[TermExpr, ...]
    required_orders: dict
    source_wood: SWood | None = None

    def describe(self) -> str:
        return " + ".join(render_compact(t) for t in self.terms) or "0"


@dataclass(frozen=True)
class StepResult:
    state: SpectralState
    diagnostics: dict[str, float]


def _check_model_orders(required: dict, model: ModelSpec) -> None:
    max_order = getattr(model.diffusion, "max_order", None)
    if max_order is not None:
        for order in sorted(required["B"]):
            if order > max_order:
                raise UnsupportedDerivativeOrderError(
                    f"model {model.name!r} provides diffusion derivatives up to "
                    f"order {max_order}, plan needs order {order}"
                )


def compile_scheme(
    expr: TermExpr,
    model: ModelSpec | None = None,
    source_wood: SWood | None = None,
) -> CompiledScheme:
    """Turn a star-free term sum into an executable plan.

    Terms are kept in canonical order.  When a model is supplied its
    derivative support is checked here; :func:`step` re-checks at use.
    """
    if contains_starred(expr):
        offending = next(
            render_compact(t) for t in summands(expr) if contains_starred(t)
        )
        raise NotImplementableError(
            f"term {offending} depends on the unknown solution path"
        )
    required = required_derivative_orders(expr)
    if model is not None:
        _check_model_orders(required, model)
    return CompiledScheme(
        terms=summands(expr), required_orders=required, source_wood=source_wood
    )


def _builtin_woods() -> dict[str, SWood]:
    w0 = initial_wood()
    w1 = expand(w0, (3, 1))
    w2 = expand(w1, (2, 1))
    w3 = expand(w2, (4, 1))
    w4 = expand(w3, (6, 1))
    w5 = expand(w4, (6, 2))
    return {
        "taylor-delta": w0,
        "exp-euler-nodrift": w1,
        "exp-euler": w2,
        "milstein-b0": w3,
        "full-2nd": w5,
    }


BUILTIN_WOODS = _builtin_woods()


def builtin_scheme(name: str) -> CompiledScheme:
    """Schemes of the worked expansion sequence, by short name."""
    try:
        wood = BUILTIN_WOODS[name]
    except KeyError:
        raise EngineError(
            f"unknown scheme {name!r}; available: {sorted(BUILTIN_WOODS)}"
        ) from None
    return compile_scheme(psi(wood), source_wood=wood)


class _PlanEvaluator:
    """Evaluates plan terms for one step over one noise window.

    Trajectories (term values at the substep left points) are cached per
    term so shared subterms, e.g. the inner convolution of an iterated
    integral, are computed once.
    """

    def __init__(
        self,
        model: ModelSpec,
        workspace: GridWorkspace,
        u0: np.ndarray,
        h: float,
        path: NoisePath,
    ):
        self.model = model
        self.workspace = workspace
        self.u0 = u0
        self.h = h
        self.dw = path.increments
        self.h_fine = path.h_fine
        self.substeps = path.substeps
        self.times = np.arange(self.substeps) * self.h_fine
        lam = model.eigenvalues
        self.decay_fine = np.exp(-lam * self.h_fine)
        # end_weights[i, j] = exp(-lambda_i (h - r_j))
        self.end_weights = np.exp(-lam[:, None] * (h - self.times[None, :]))
        self._trajectories: dict[TermExpr, np.ndarray] = {}

    # -- contributions ----------------------------------------------------
    def _factorial(self, order: int) -> float:
        out = 1.0
        for k in range(2, order + 1):
            out *= k
        return out

    def _stochastic_rows(self, order: int, args: tuple[TermExpr, ...]) -> np.ndarray | None:
        arg_rows = [self.trajectory(a) for a in args]
        rows = self.model.diffusion.rows_against_noise(
            order, self.u0, arg_rows, self.dw, self.workspace, self.model.modes
        )
        if rows is None:
            return None
        if order >= 2:
            rows = rows / self._factorial(order)
        return rows

    def _drift_rows(self, order: int, args: tuple[TermExpr, ...]) -> np.ndarray | None:
        arg_rows = [self.trajectory(a) for a in args]
        rows = self.model.drift.derivative_rows(order, self.u0, arg_rows)
        if rows is None:
            return None
        return rows * (self.h_fine / self._factorial(order))

    # -- evaluation -------------------------------------------------------
    def final_value(self, term: TermExpr) -> np.ndarray:
        lam = self.model.eigenvalues
        zeros = np.zeros(self.model.modes)
        if isinstance(term, I0):
            if term.j is NodeLabel.ZERO:
                return np.expm1(-lam * self.h) * self.u0
            if term.j is NodeLabel.ONE:
                value = self.model.drift.value(self.u0)
                if value is None:
                    return zeros
                return -np.expm1(-lam * self.h) / lam * value
            if term.j is NodeLabel.TWO:
                rows = self._stochastic_rows(0, ())
                return self._weighted_sum(rows)
            raise NotImplementableError(f"cannot evaluate starred {term.j}")
        assert isinstance(term, In)
        if term.j is NodeLabel.TWO:
            rows = self._stochastic_rows(term.order, term.args)
            return self._weighted_sum(rows)
        if term.j is NodeLabel.ONE:
            rows = self._drift_rows(term.order, term.args)
            return self._weighted_sum(rows)
        raise NotImplementableError(f"cannot evaluate starred {term.j}")

    def _weighted_sum(self, rows: np.ndarray | None) -> np.ndarray:
        if rows is None:
            return np.zeros(self.model.modes)
        return np.einsum("ns,sn->n", self.end_weights, rows)

    def trajectory(self, term: TermExpr) -> np.ndarray:
        """Values at the left points r_0..r_{S-1}; Ito style, so the row at
        r_j accumulates contributions strictly before r_j."""
        cached = self._trajectories.get(term)
        if cached is not None:
            return cached
        lam = self.model.eigenvalues
        if isinstance(term, I0) and term.j is NodeLabel.ZERO:
            out = np.expm1(-np.outer(self.times, lam)) * self.u0[None, :]
        elif isinstance(term, I0) and term.j is NodeLabel.ONE:
            value = self.model.drift.value(self.u0)
            if value is None:
                out = np.zeros((self.substeps, self.model.modes))
            else:
                out = -np.expm1(-np.outer(self.times, lam)) / lam[None, :] * value
        else:
            if isinstance(term, I0):
                order, args, kind = 0, (), term.j
            else:
                order, args, kind = term.order, term.args, term.j
            if kind is NodeLabel.TWO:
                rows = self._stochastic_rows(order, args)
            elif kind is NodeLabel.ONE:
                rows = self._drift_rows(order, args)
            else:
                raise NotImplementableError(f"cannot evaluate starred {kind}")
            out = np.zeros((self.substeps, self.model.modes))
            if rows is not None:
                running = np.zeros(self.model.modes)
                for j in range(self.substeps):
                    out[j] = running
                    running = self.decay_fine * (running + rows[j])
        self._trajectories[term] = out
        return out


def _resolve_window(h: float, path: NoisePath) -> NoisePath:
    ratio = h / path.h_fine
    substeps = int(round(ratio))
    if substeps < 1 or abs(ratio - substeps) > 1e-9 * max(1.0, ratio):
        raise MeshMismatchError(
            f"step {h} is not a whole number of substeps of {path.h_fine}"
        )
    if substeps > path.substeps:
        raise MeshMismatchError(
            f"step needs {substeps} substeps, path provides {path.substeps}"
        )
    return path.prefix(substeps)


def step(
    scheme: CompiledScheme,
    u0: SpectralState,
    h: float,
    path: NoisePath,
    model: ModelSpec,
    workspace: GridWorkspace | None = None,
) -> StepResult:
    """One-step approximation at time h from u0 on the given noise window."""
    if u0.modes != model.modes:
        raise EngineError(f"state has {u0.modes} modes, model {model.modes}")
    if path.noise_modes != model.noise_modes:
        raise EngineError(
            f"path drives {path.noise_modes} noise modes, model {model.noise_modes}"
        )
    _check_model_orders(scheme.required_orders, model)
    window = _resolve_window(h, path)
    workspace = workspace or model.workspace()
    evaluator = _PlanEvaluator(model, workspace, u0.coeffs, h, window)
    total = u0.coeffs.copy()
    diagnostics: dict[str, float] = {}
    for term in scheme.terms:
        value = evaluator.final_value(term)
        name = render_compact(term)
        if not np.all(np.isfinite(value)):
            raise NonfiniteValueError(name)
        diagnostics[name] = float(np.linalg.norm(value))
        total = total + value
    if not np.all(np.isfinite(total)):
        raise NonfiniteValueError("sum of plan terms")
    return StepResult(state=SpectralState(total), diagnostics=diagnostics)


_REFERENCE_SCHEME = builtin_scheme("exp-euler")


def reference_solve(
    u0: SpectralState,
    t_end: float,
    path: NoisePath,
    model: ModelSpec,
    workspace: GridWorkspace | None = None,
    record_substeps: tuple[int, ...] = (),
) -> tuple[SpectralState, dict[int, SpectralState]]:
    """Fine-mesh surrogate for the exact solution.

    Iterates the exponential one-step scheme (semigroup flow, frozen-drift
    convolution, frozen-diffusion stochastic convolution) over every fine
    substep.  Implemented by stepping the compiled exponential Euler plan one
    substep at a time, so a coarse run of that scheme at h = h_fine is
    bitwise identical to this reference.  ``record_substeps`` requests
    snapshots after the given substep counts.
    """
    window = _resolve_window(t_end, path)
    workspace = workspace or model.workspace()
    wanted = set(record_substeps)
    recorded: dict[int, SpectralState] = {}
    state = u0
    if 0 in wanted:
        recorded[0] = state
    for j in range(window.substeps):
        piece = NoisePath(
            increments=window.increments[j : j + 1], h_fine=window.h_fine
        )
        state = step(
            _REFERENCE_SCHEME, state, window.h_fine, piece, model, workspace
        ).state
        if j + 1 in wanted:
            recorded[j + 1] = state
    return state, recorded


def multi_step_solve(
    scheme: CompiledScheme,
    u0: SpectralState,
    t_end: float,
    h: float,
    path: NoisePath,
    model: ModelSpec,
    workspace: GridWorkspace | None = None,
) -> SpectralState:
    """Iterate the one-step scheme over [0, t_end] with coarse step h."""
    per_step = int(round(h / path.h_fine))
    steps = int(round(t_end / h))
    if steps * per_step > path.substeps:
        raise MeshMismatchError("path does not cover the requested horizon")
    workspace = workspace or model.workspace()
    state = u0
    for n in range(steps):
        piece = NoisePath(
            increments=path.increments[n * per_step : (n + 1) * per_step],
            h_fine=path.h_fine,
        )
        state = step(scheme, state, h, piece, model, workspace).state
    return state
