"""Composite explicit-loss evaluation and a pixel-space descent probe.

The total loss combines up to three terms over a candidate image: weighted
pixel MSE against a reference, the covariance-weighted distance of its patch
statistics from a natural model (squared by default), and a spectrum term
that is either a regressor prediction or a squared-difference comparison
against the reference's spectra.

The probe descends this total with central finite differences per pixel.
The metric pipeline is not differentiable (grid lookups, patch gating), so
numerical gradients are the honest way to show the losses optimize; image
size is capped accordingly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import msd, niqe
from .forest import ForestModel, forest_predict
from .image_io import GrayImage
from .msd import MsdFeature
from .niqe import MvgModel

MA_VARIANTS = ("reference", "regressor")
PROBE_MAX_SIDE = 64

_TERM_NAMES = ("mse", "niqe", "ma-ref", "ma-forest")


class LossSpecError(ValueError):
    """A loss specification string failed to parse."""


class ProbeAbortedError(RuntimeError):
    """Descent hit a non-finite loss; carries the trace recorded so far."""

    def __init__(self, message: str, trace: "ProbeTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class LossSpec:
    """Weights of the composite loss.

    ``w_mse`` keeps the fixed weight of 10 by default.  ``ma_variant``
    chooses how the spectrum term is computed: ``"regressor"`` runs a trained
    forest on the candidate's pooled spectrum, ``"reference"`` compares
    per-tile spectra against the reference image's.  ``niqe_squared``
    controls whether the distance enters squared (the default) or linearly.
    """

    w_mse: float = 10.0
    epsilon: float = 0.0
    zeta: float = 0.0
    ma_variant: str = "reference"
    niqe_squared: bool = True

    def __post_init__(self):
        for name in ("w_mse", "epsilon", "zeta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.ma_variant not in MA_VARIANTS:
            raise ValueError(
                f"ma_variant must be one of {MA_VARIANTS}, got {self.ma_variant!r}"
            )
        if self.w_mse == 0.0 and self.epsilon == 0.0 and self.zeta == 0.0:
            raise ValueError("at least one loss weight must be strictly positive")


@dataclass(frozen=True)
class TraceStep:
    step: int
    total: float
    terms: dict
    rmse: float


@dataclass(frozen=True, eq=False)
class ProbeTrace:
    """Descent history: one record per step including the initial state."""

    iterations: list
    final: GrayImage


def parse_loss_spec(text: str) -> LossSpec:
    """Parse a comma-separated ``term:weight`` list into a :class:`LossSpec`.

    Terms are ``mse``, ``niqe``, ``ma-ref`` and ``ma-forest``; the ma terms
    are mutually exclusive and also pick the variant.  Terms not named get
    weight zero, so the string states the whole loss.
    """
    weights: dict[str, float] = {}
    for pos, raw in enumerate(text.split(","), 1):
        tok = raw.strip()
        where = f"term {pos} ({tok!r})"
        if not tok:
            raise LossSpecError(f"{where}: empty term")
        name, sep, wtext = tok.partition(":")
        name = name.strip()
        wtext = wtext.strip()
        if not sep:
            raise LossSpecError(f"{where}: expected 'term:weight'")
        if name not in _TERM_NAMES:
            raise LossSpecError(
                f"{where}: unknown term {name!r}, expected one of {_TERM_NAMES}"
            )
        if not wtext:
            raise LossSpecError(f"{where}: missing weight")
        try:
            w = float(wtext)
        except ValueError:
            raise LossSpecError(f"{where}: bad weight {wtext!r}") from None
        if not (np.isfinite(w) and w >= 0):
            raise LossSpecError(f"{where}: weight must be finite and >= 0")
        if name in weights:
            raise LossSpecError(f"{where}: duplicate term {name!r}")
        weights[name] = w
    if "ma-ref" in weights and "ma-forest" in weights:
        raise LossSpecError("terms 'ma-ref' and 'ma-forest' are mutually exclusive")
    variant = "regressor" if "ma-forest" in weights else "reference"
    try:
        return LossSpec(
            w_mse=weights.get("mse", 0.0),
            epsilon=weights.get("niqe", 0.0),
            zeta=weights.get("ma-ref", weights.get("ma-forest", 0.0)),
            ma_variant=variant,
        )
    except ValueError as exc:
        raise LossSpecError(str(exc)) from None


# Named weight presets: rows of (vgg, adversarial, style, niqe, ma).  The
# first three term kinds are not implemented here, so presets carrying them
# refuse to build rather than silently dropping terms.  The pixel-MSE weight
# is the fixed 10 in every preset.
PRESET_ROWS = {
    "combo1": (0, 0, 0, 0, 0),
    "combo2": (0.1, 0, 0, 0, 0),
    "combo3": (0, 0.1, 0, 0, 0),
    "combo4": (0, 0, 10, 0, 0),
    "combo5": (0, 0, 0, 0.01, 0),
    "combo6": (0, 0, 0, 0, 0.001),
    "combo7": (0.1, 0.1, 0, 0, 0),
    "combo8": (0.1, 0, 10, 0, 0),
    "combo9": (0.1, 0, 0, 0.01, 0),
    "combo10": (0.1, 0, 0, 0, 0.001),
    "combo11": (0, 0.1, 10, 0, 0),
    "combo12": (0, 0.1, 0, 0.01, 0),
    "combo13": (0, 0.1, 0, 0, 0.001),
    "combo14": (0, 0, 10, 0.01, 0),
    "combo15": (0, 0, 10, 0, 0.001),
    "combo16": (0, 0, 0, 0.01, 0.001),
    "combo17": (0.1, 0.1, 10, 0, 0),
    "combo18": (0.1, 0.1, 0, 0.01, 0),
    "combo19": (0.1, 0.1, 0, 0, 0.001),
    "combo20": (0.1, 0, 10, 0.01, 0),
    "combo21": (0.1, 0, 10, 0, 0.001),
    "combo22": (0.1, 0, 0, 0.01, 0.001),
    "combo23": (0, 0.1, 10, 0.01, 0),
    "combo24": (0, 0, 10, 0.01, 0.001),
    "combo25": (0, 0.1, 0, 0.01, 0.001),
    "combo26": (0, 0.1, 10, 0, 0.001),
    "combo27": (0.1, 0.1, 10, 0.01, 0),
    "combo28": (0.1, 0.1, 10, 0, 0.001),
    "combo29": (0.1, 0.1, 0, 0.01, 0.001),
    "combo30": (0.1, 0, 10, 0.01, 0.001),
    "combo31": (0, 0.1, 10, 0.01, 0.001),
    "combo32": (0.1, 0.1, 10, 0.01, 0.001),
}

_UNIMPLEMENTED = ("vgg", "adversarial", "style")


def preset_spec(name: str, ma_variant: str = "reference") -> LossSpec:
    """Build the :class:`LossSpec` for a named weight preset."""
    try:
        row = PRESET_ROWS[name]
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}, expected combo1..combo{len(PRESET_ROWS)}"
        ) from None
    for term, w in zip(_UNIMPLEMENTED, row[:3]):
        if w != 0:
            raise NotImplementedError(
                f"loss term not implemented: preset {name!r} needs {term!r}"
            )
    return LossSpec(w_mse=10.0, epsilon=row[3], zeta=row[4], ma_variant=ma_variant)


def _build_loss_fn(
    spec: LossSpec,
    hr_data: np.ndarray | None,
    natural: MvgModel | None,
    forest: ForestModel | None,
    hr_msd: MsdFeature | None,
    shape: tuple[int, int],
):
    """Validate inputs for the active terms and close over them.

    The returned callable maps a raw image array to ``(total, terms)`` where
    ``terms`` holds the weighted contribution of every term (zeros for the
    inactive ones).
    """
    if spec.w_mse > 0 and hr_data is None:
        raise ValueError("mse term is active but no reference image was given")
    if spec.epsilon > 0 and natural is None:
        raise ValueError("niqe term is active but no natural model was given")
    ref_spectra = None
    if spec.zeta > 0:
        if spec.ma_variant == "regressor":
            if forest is None:
                raise ValueError(
                    "ma term (regressor variant) is active but no forest was given"
                )
        else:
            if hr_msd is None:
                raise ValueError(
                    "ma term (reference variant) is active but no reference "
                    "spectra were given"
                )
            ref_spectra = hr_msd.per_patch
    if hr_data is not None and hr_data.shape != shape:
        raise ValueError(
            f"image dimensions differ: {shape} vs reference {hr_data.shape}"
        )

    def evaluate(data: np.ndarray) -> tuple[float, dict]:
        terms = {"mse": 0.0, "niqe": 0.0, "ma": 0.0}
        if spec.w_mse > 0:
            d = data - hr_data
            terms["mse"] = spec.w_mse * float(np.mean(d * d))
        if spec.epsilon > 0:
            dist = niqe._score_array(data, natural)
            terms["niqe"] = spec.epsilon * (dist * dist if spec.niqe_squared else dist)
        if spec.zeta > 0:
            if spec.ma_variant == "regressor":
                _grid, sv = msd._spectra(data, forest.n_features)
                terms["ma"] = spec.zeta * forest_predict(forest, sv.mean(axis=0))
            else:
                _grid, sv = msd._spectra(data, hr_msd.patch)
                if sv.shape != ref_spectra.shape:
                    raise ValueError(
                        f"spectrum layouts differ: {sv.shape} vs {ref_spectra.shape}"
                    )
                diff = (sv - ref_spectra).ravel()
                terms["ma"] = spec.zeta * float(diff @ diff)
        return terms["mse"] + terms["niqe"] + terms["ma"], terms

    return evaluate


def composite_loss(
    img: GrayImage,
    spec: LossSpec,
    *,
    hr: GrayImage | None = None,
    natural: MvgModel | None = None,
    forest: ForestModel | None = None,
    hr_msd: MsdFeature | None = None,
) -> tuple[float, dict]:
    """Evaluate the composite loss on one image.

    Only the inputs for terms with nonzero weight are required: ``hr`` for
    the MSE term, ``natural`` for the distance term, and ``forest`` or
    ``hr_msd`` for the spectrum term depending on ``spec.ma_variant``.
    Returns the total and the per-term weighted contributions.
    """
    fn = _build_loss_fn(
        spec,
        None if hr is None else hr.data,
        natural,
        forest,
        hr_msd,
        img.shape,
    )
    return fn(img.data)


def _fd_gradient(evaluate, work: np.ndarray, fd_epsilon: float) -> np.ndarray:
    h, w = work.shape
    g = np.empty_like(work)
    for i in range(h):
        for j in range(w):
            orig = work[i, j]
            work[i, j] = orig + fd_epsilon
            lp, _ = evaluate(work)
            work[i, j] = orig - fd_epsilon
            lm, _ = evaluate(work)
            work[i, j] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise FloatingPointError(
                    f"non-finite loss while perturbing pixel ({i}, {j})"
                )
            g[i, j] = (lp - lm) / (2.0 * fd_epsilon)
    return g


def finite_difference_gradient(
    img: GrayImage,
    spec: LossSpec,
    *,
    hr: GrayImage | None = None,
    natural: MvgModel | None = None,
    forest: ForestModel | None = None,
    hr_msd: MsdFeature | None = None,
    fd_epsilon: float = 0.5,
) -> np.ndarray:
    """Central-difference gradient of the composite loss per pixel."""
    if fd_epsilon <= 0:
        raise ValueError(f"fd_epsilon must be > 0, got {fd_epsilon}")
    fn = _build_loss_fn(
        spec,
        None if hr is None else hr.data,
        natural,
        forest,
        hr_msd,
        img.shape,
    )
    return _fd_gradient(fn, img.data.copy(), fd_epsilon)


def probe_descent(
    init: GrayImage,
    hr: GrayImage,
    spec: LossSpec,
    steps: int,
    step_size: float,
    fd_epsilon: float = 0.5,
    *,
    natural: MvgModel | None = None,
    forest: ForestModel | None = None,
    msd_patch: int = 32,
) -> ProbeTrace:
    """Descend the composite loss in pixel space by finite differences.

    Each step estimates the gradient with central differences (two loss
    evaluations per pixel), moves by ``step_size`` against it and clamps to
    [0, 255], recording total loss, per-term breakdown and rmse to the
    reference.  Images are capped at 64 pixels per side because one step
    costs O(pixels) full loss evaluations.  A non-finite loss aborts with
    the partial trace attached to the error.
    """
    if init.shape != hr.shape:
        raise ValueError(f"image dimensions differ: {init.shape} vs {hr.shape}")
    if max(init.shape) > PROBE_MAX_SIDE:
        raise ValueError(
            f"image too large for the probe: {init.shape}, "
            f"limit {PROBE_MAX_SIDE} per side"
        )
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if step_size <= 0:
        raise ValueError(f"step_size must be > 0, got {step_size}")
    if fd_epsilon <= 0:
        raise ValueError(f"fd_epsilon must be > 0, got {fd_epsilon}")

    hr_msd = None
    if spec.zeta > 0 and spec.ma_variant == "reference":
        hr_msd = msd.msd_features(hr, msd_patch)
    evaluate = _build_loss_fn(spec, hr.data, natural, forest, hr_msd, init.shape)

    def to_record(step: int, data: np.ndarray) -> TraceStep:
        total, terms = evaluate(data)
        if not np.isfinite(total):
            raise FloatingPointError(f"non-finite total loss at step {step}")
        d = data - hr.data
        return TraceStep(
            step=step, total=total, terms=terms, rmse=float(np.sqrt(np.mean(d * d)))
        )

    work = init.data.copy()
    records: list[TraceStep] = []
    try:
        records.append(to_record(0, work))
        for s in range(1, steps + 1):
            g = _fd_gradient(evaluate, work, fd_epsilon)
            work = np.clip(work - step_size * g, 0.0, 255.0)
            records.append(to_record(s, work))
    except FloatingPointError as exc:
        partial = ProbeTrace(iterations=records, final=GrayImage(work))
        raise ProbeAbortedError(f"probe aborted: {exc}", partial) from exc
    return ProbeTrace(iterations=records, final=GrayImage(work))


def trace_csv(trace: ProbeTrace) -> str:
    """Render the iteration records as CSV with full-precision floats."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "total", "mse_term", "niqe_term", "ma_term", "rmse"])
    for rec in trace.iterations:
        writer.writerow(
            [
                rec.step,
                repr(rec.total),
                repr(rec.terms["mse"]),
                repr(rec.terms["niqe"]),
                repr(rec.terms["ma"]),
                repr(rec.rmse),
            ]
        )
    return buf.getvalue()


def trace_steps_from_csv(text: str) -> list[TraceStep]:
    """Parse :func:`trace_csv` output back into iteration records."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["step", "total", "mse_term", "niqe_term", "ma_term", "rmse"]:
        raise ValueError("not a probe trace CSV")
    out = []
    for row in rows[1:]:
        if len(row) != 6:
            raise ValueError(f"malformed trace row: {row!r}")
        out.append(
            TraceStep(
                step=int(row[0]),
                total=float(row[1]),
                terms={
                    "mse": float(row[2]),
                    "niqe": float(row[3]),
                    "ma": float(row[4]),
                },
                rmse=float(row[5]),
            )
        )
    return out
