"""Finite-difference oracle and the gradient-check harness.

Analytic gradients come from `backward`; numeric ones from central
differences in f64. Coordinates whose perturbation moves any activation
across a kink (leaky_relu/relu6/abs sign pattern, maxpool argmax) are
skipped rather than compared, and counted in the report.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from ..errors import GradcheckFailure
from . import ops
from .tape import GradMap, Params, Var, backward, forward, forward_traced

logger = logging.getLogger(__name__)

GraphFn = Callable[[Params, Params], Var]
# rng → (graph, constant inputs, parameters)
CaseBuilder = Callable[[np.random.Generator], tuple[GraphFn, dict[str, np.ndarray], dict[str, np.ndarray]]]

REL_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / scale


def finite_diff_grad(
    f: Callable[[Mapping[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
) -> GradMap:
    """Central differences (f(p+eps) − f(p−eps)) / 2eps, one coordinate at a time.

    O(#params) evaluations of f; meant for tiny shapes.
    """
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    grads: GradMap = {}
    for name, value in base.items():
        g = np.zeros_like(value)
        flat, gflat = value.reshape(-1), g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            plus = float(f(base))
            flat[idx] = orig - eps
            minus = float(f(base))
            flat[idx] = orig
            gflat[idx] = (plus - minus) / (2 * eps)
        grads[name] = g
    return grads


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    checked: int
    skipped: int
    passed: bool

    def line(self, case: str) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{case}/{self.name} max_rel_err={self.max_rel_err:.3e} "
            f"checked={self.checked} skipped={self.skipped} {verdict}"
        )


@dataclass
class GradcheckReport:
    case: str
    tolerance: float
    rows: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def max_rel_err(self) -> float:
        return max((r.max_rel_err for r in self.rows), default=0.0)

    def lines(self) -> list[str]:
        return [r.line(self.case) for r in self.rows]

    def raise_on_failure(self) -> None:
        if not self.passed:
            failing = [r.name for r in self.rows if not r.passed]
            raise GradcheckFailure(f"{self.case}: {len(failing)} parameter(s) over {self.tolerance:g}: {failing}")


def _scalarized(fn: GraphFn, projection: Optional[np.ndarray]) -> GraphFn:
    """Reduce a tensor-valued graph to sum(out ⊗ r) with a fixed random r."""
    if projection is None:
        return fn

    def wrapped(inputs: Params, params: Params) -> Var:
        out = fn(inputs, params)
        return ops.sum_(ops.mul(out, Var(projection)))

    return wrapped


def gradcheck(
    name: str,
    fn: GraphFn,
    inputs: Mapping[str, np.ndarray],
    params: Mapping[str, np.ndarray],
    tolerance: float = 1e-4,
    eps: float = 1e-5,
    seed: int = 0,
) -> GradcheckReport:
    """Compare backward() against central differences for every parameter."""
    inputs64 = {k: np.asarray(v, dtype=np.float64) for k, v in inputs.items()}
    params64 = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    probe, _ = forward(fn, inputs64, params64)
    projection = None
    if probe.ndim > 0:
        projection = np.random.default_rng(seed).standard_normal(probe.shape)
    graph = _scalarized(fn, projection)

    _, tape = forward_traced(graph, inputs64, params64, track_kinks=True)
    analytic = backward(tape)
    signature = tape.kink_signature()

    def evaluate() -> tuple[float, bytes]:
        value, t = forward(graph, inputs64, params64, track_kinks=True)
        return float(value), t.kink_signature()

    report = GradcheckReport(name, tolerance)
    for pname, value in params64.items():
        flat = value.reshape(-1)
        a_flat = analytic[pname].reshape(-1)
        worst, checked, skipped = 0.0, 0, 0
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            plus, sig_plus = evaluate()
            flat[idx] = orig - eps
            minus, sig_minus = evaluate()
            flat[idx] = orig
            if sig_plus != signature or sig_minus != signature:
                skipped += 1
                continue
            numeric = (plus - minus) / (2 * eps)
            worst = max(worst, float(relative_error(np.float64(a_flat[idx]), np.float64(numeric))))
            checked += 1
        report.rows.append(ParamCheck(pname, worst, checked, skipped, worst < tolerance))
    logger.debug("gradcheck %s: max_rel_err=%.3e", name, report.max_rel_err)
    return report


def run_case(name: str, seed: int = 0, tolerance: float = 1e-4, eps: float = 1e-5) -> GradcheckReport:
    builder = CASES.get(name)
    if builder is None:
        raise KeyError(f"unknown gradcheck case {name!r}; known: {sorted(CASES)}")
    fn, inputs, params = builder(np.random.default_rng(seed))
    return gradcheck(name, fn, inputs, params, tolerance=tolerance, eps=eps, seed=seed)


# ── Registered cases (tiny shapes) ───────────────────────────────────────────

def _normal(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.standard_normal(shape)


def _case_linear(rng):
    def fn(i, p):
        return ops.dense(p["x"], p["w"], p["b"])
    return fn, {}, {"x": _normal(rng, 3, 4), "w": _normal(rng, 4, 2), "b": _normal(rng, 2)}


def _case_conv2d(rng):
    def fn(i, p):
        return ops.conv2d(p["x"], p["w"], p["b"])
    return fn, {}, {"x": _normal(rng, 5, 5, 2), "w": _normal(rng, 3, 3, 2, 3), "b": _normal(rng, 3)}


def _case_conv2d_strided(rng):
    def fn(i, p):
        return ops.conv2d(p["x"], p["w"], stride=2)
    return fn, {}, {"x": _normal(rng, 2, 6, 6, 2), "w": _normal(rng, 3, 3, 2, 2)}


def _case_conv2d_valid(rng):
    def fn(i, p):
        return ops.conv2d(p["x"], p["w"], padding="valid")
    return fn, {}, {"x": _normal(rng, 5, 4, 2), "w": _normal(rng, 3, 3, 2, 2)}


def _case_depthwise(rng):
    def fn(i, p):
        return ops.depthwise_conv2d(p["x"], p["w"], stride=2)
    return fn, {}, {"x": _normal(rng, 5, 5, 3), "w": _normal(rng, 3, 3, 3)}


def _case_pointwise(rng):
    def fn(i, p):
        return ops.pointwise_conv2d(p["x"], p["w"], p["b"])
    return fn, {}, {"x": _normal(rng, 3, 3, 4), "w": _normal(rng, 4, 2), "b": _normal(rng, 2)}


def _case_separable(rng):
    def fn(i, p):
        return ops.separable_conv2d(p["x"], p["dw"], p["pw"], p["b"])
    return fn, {}, {
        "x": _normal(rng, 4, 4, 2), "dw": _normal(rng, 3, 3, 2), "pw": _normal(rng, 2, 3), "b": _normal(rng, 3),
    }


def _case_maxpool(rng):
    def fn(i, p):
        return ops.maxpool2d(p["x"])
    return fn, {}, {"x": _normal(rng, 5, 5, 2)}


def _unary(op: Callable[[Var], Var], low: float = -3.0, high: float = 3.0) -> CaseBuilder:
    def build(rng):
        def fn(i, p):
            return op(p["x"])
        return fn, {}, {"x": rng.uniform(low, high, size=(3, 3, 2))}
    return build


def _binary(op: Callable[[Var, Var], Var]) -> CaseBuilder:
    def build(rng):
        def fn(i, p):
            return op(p["a"], p["b"])
        return fn, {}, {"a": _normal(rng, 2, 3, 2), "b": _normal(rng, 2, 3, 2)}
    return build


def _case_concat(rng):
    def fn(i, p):
        return ops.concat_channels(p["a"], p["b"])
    return fn, {}, {"a": _normal(rng, 2, 2, 2), "b": _normal(rng, 2, 2, 3)}


def _case_batchnorm_infer(rng):
    def fn(i, p):
        return ops.batchnorm_infer(p["x"], p["gamma"], p["beta"], i["mean"], i["var"])
    return (
        fn,
        {"mean": _normal(rng, 3), "var": rng.uniform(0.5, 2.0, size=3)},
        {"x": _normal(rng, 2, 3, 3), "gamma": _normal(rng, 3), "beta": _normal(rng, 3)},
    )


def _case_batchnorm_train(rng):
    def fn(i, p):
        return ops.batchnorm_train(p["x"], p["gamma"], p["beta"])[0]
    return fn, {}, {"x": _normal(rng, 2, 3, 3, 2), "gamma": _normal(rng, 2), "beta": _normal(rng, 2)}


def _case_bce(rng):
    labels = np.array([[1.0], [0.0], [1.0], [0.0]])

    def fn(i, p):
        return ops.bce_with_logits(ops.dense(p["x"], p["w"], p["b"]), labels)
    return fn, {}, {"x": _normal(rng, 4, 3), "w": _normal(rng, 3, 1), "b": _normal(rng, 1)}


def _cell_case(kind: str) -> CaseBuilder:
    def build(rng):
        from ..nn.cells import CellSpec, cell_parameter_shapes, unroll_last

        spec = CellSpec(kind=kind, k=3, c_x=2, c_h=3)
        params = {
            f"cell.{name}": 0.5 * rng.standard_normal(shape)
            for name, shape in cell_parameter_shapes(spec).items()
        }
        xs = {f"x{t}": rng.standard_normal((4, 4, 2)) for t in range(2)}

        def fn(i, p):
            return unroll_last(spec, [i[f"x{t}"] for t in range(2)], p.scope("cell"))
        return fn, xs, params
    return build


def _case_full_model(rng):
    from ..nn.model import Model, gradcheck_model_config

    model = Model.build(gradcheck_model_config(), seed=int(rng.integers(1 << 31)), dtype="f64")
    # Xavier head init keeps activations small; perturb BN stats so they matter
    params = {name: np.array(v, dtype=np.float64) for name, v in model.store.items()}
    for name in params:
        if name.endswith(".moving_mean"):
            params[name] = 0.1 * rng.standard_normal(params[name].shape)
        elif name.endswith(".moving_var"):
            params[name] = rng.uniform(0.5, 1.5, size=params[name].shape)
    frozen = {k: params.pop(k) for k in list(params) if not model.store.is_trainable(k)}
    bsf = rng.uniform(0.0, 1.0, size=(1, 3, 16, 16, 3))
    fd = rng.uniform(-1.0, 1.0, size=(1, 2, 16, 16, 3))

    def fn(i, p):
        merged = Params({**{k: i[k] for k in frozen}, **{k: p[k] for k in p}})
        return ops.sigmoid(model.logits(merged, i["bsf"], i["fd"]))
    return fn, {"bsf": bsf, "fd": fd, **frozen}, params


OP_CASES: dict[str, CaseBuilder] = {
    "linear": _case_linear,
    "conv2d": _case_conv2d,
    "conv2d_stride2": _case_conv2d_strided,
    "conv2d_valid": _case_conv2d_valid,
    "depthwise_conv2d": _case_depthwise,
    "pointwise_conv2d": _case_pointwise,
    "separable_conv2d": _case_separable,
    "maxpool2d": _case_maxpool,
    "sigmoid": _unary(ops.sigmoid),
    "tanh": _unary(ops.tanh),
    "leaky_relu": _unary(lambda x: ops.leaky_relu(x, 0.1)),
    "relu6": _unary(ops.relu6, -2.0, 8.0),
    "abs": _unary(ops.abs_),
    "add": _binary(ops.add),
    "sub": _binary(ops.sub),
    "hadamard": _binary(ops.mul),
    "concat_channels": _case_concat,
    "batchnorm_infer": _case_batchnorm_infer,
    "batchnorm_train": _case_batchnorm_train,
    "bce_with_logits": _case_bce,
    "sepconvlstm_unroll": _cell_case("separable"),
    "convlstm_unroll": _cell_case("dense"),
}

CASES: dict[str, CaseBuilder] = {**OP_CASES, "full_model": _case_full_model}


def run_all(
    full_model: bool = False, seed: int = 0, tolerance: float = 1e-4
) -> list[GradcheckReport]:
    names = list(OP_CASES) + (["full_model"] if full_model else [])
    reports = []
    for name in names:
        report = run_case(name, seed=seed, tolerance=tolerance)
        logger.info("gradcheck %-20s %s (max_rel_err=%.2e)", name, "PASS" if report.passed else "FAIL", report.max_rel_err)
        reports.append(report)
    return reports
