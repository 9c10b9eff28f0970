import numpy as np
import pytest

from perceptiq import GrayImage
from perceptiq.forest import ForestModel, ForestParams, _Tree, _tree_from_nested
from perceptiq.image_io import mse_loss
from perceptiq.loss import (
    PRESET_ROWS,
    LossSpec,
    LossSpecError,
    ProbeAbortedError,
    composite_loss,
    finite_difference_gradient,
    parse_loss_spec,
    preset_spec,
    probe_descent,
    trace_csv,
    trace_steps_from_csv,
)
from perceptiq.msd import msd_feature_loss, msd_features
from perceptiq.niqe import fit_natural_model, niqe_score
from perceptiq.nss import NssConfig

from helpers import add_noise, natural_like


@pytest.fixture(scope="module")
def natural_model():
    cfg = NssConfig(patch=8, window=7, threshold=0.0)
    return fit_natural_model([natural_like(2000 + i, 32, 32) for i in range(4)], cfg)


def leaf_forest(value, n_features):
    tree = _tree_from_nested({"value": float(value)})
    return ForestModel(n_features=n_features, params=ForestParams(n_trees=1), trees=[tree])


# ---------------------------------------------------------------------------
# parsing


def test_parse_full_spec():
    s = parse_loss_spec("mse:10,niqe:0.01,ma-ref:0.001")
    assert (s.w_mse, s.epsilon, s.zeta) == (10.0, 0.01, 0.001)
    assert s.ma_variant == "reference"
    assert s.niqe_squared


def test_parse_forest_variant_and_defaults():
    s = parse_loss_spec("ma-forest:0.5")
    assert (s.w_mse, s.epsilon, s.zeta) == (0.0, 0.0, 0.5)
    assert s.ma_variant == "regressor"


def test_parse_tolerates_spaces():
    s = parse_loss_spec(" mse : 10 , niqe : 1 ")
    assert (s.w_mse, s.epsilon) == (10.0, 1.0)


@pytest.mark.parametrize(
    "text,needle",
    [
        ("mse:", "term 1 ('mse:'): missing weight"),
        ("mse:10,frob:1", "term 2"),
        ("mse:abc", "bad weight"),
        ("mse:1,mse:2", "duplicate"),
        ("mse:10,,niqe:1", "empty term"),
        ("mse", "expected 'term:weight'"),
        ("mse:-1", ">= 0"),
        ("ma-ref:1,ma-forest:1", "mutually exclusive"),
        ("mse:0", "strictly positive"),
    ],
)
def test_parse_errors_name_the_offender(text, needle):
    with pytest.raises(LossSpecError, match=needle.replace("(", "\\(").replace(")", "\\)")):
        parse_loss_spec(text)


def test_spec_validation_direct():
    with pytest.raises(ValueError):
        LossSpec(w_mse=-1.0)
    with pytest.raises(ValueError):
        LossSpec(w_mse=0.0, epsilon=0.0, zeta=0.0)
    with pytest.raises(ValueError):
        LossSpec(ma_variant="neural")
    with pytest.raises(ValueError):
        LossSpec(w_mse=float("inf"))


# ---------------------------------------------------------------------------
# presets


def test_preset_table_shape():
    assert len(PRESET_ROWS) == 32
    assert all(len(row) == 5 for row in PRESET_ROWS.values())


def test_preset_row_sixteen():
    s = preset_spec("combo16")
    assert (s.w_mse, s.epsilon, s.zeta) == (10.0, 0.01, 0.001)
    assert s.ma_variant == "reference"
    assert s.niqe_squared


def test_preset_single_term_rows():
    assert (preset_spec("combo1").w_mse, preset_spec("combo1").epsilon) == (10.0, 0.0)
    assert preset_spec("combo5").epsilon == 0.01
    assert preset_spec("combo6").zeta == 0.001
    assert preset_spec("combo6", ma_variant="regressor").ma_variant == "regressor"


def test_presets_with_missing_terms_refuse():
    for name in ("combo2", "combo3", "combo4", "combo7", "combo32"):
        with pytest.raises(NotImplementedError, match="not implemented"):
            preset_spec(name)


def test_unknown_preset():
    with pytest.raises(ValueError, match="combo33"):
        preset_spec("combo33")


# ---------------------------------------------------------------------------
# composite loss


def test_pure_mse_identity_is_zero():
    img = natural_like(300, 32, 32)
    total, terms = composite_loss(img, LossSpec(w_mse=10.0), hr=img)
    assert total == 0.0
    assert terms == {"mse": 0.0, "niqe": 0.0, "ma": 0.0}


def test_pure_mse_matches_direct_loss():
    a = natural_like(301, 32, 32)
    b = natural_like(302, 32, 32)
    total, terms = composite_loss(a, LossSpec(w_mse=7.0), hr=b)
    want = 7.0 * mse_loss(a, b)
    assert abs(total - want) < 1e-12 * want
    assert terms["mse"] == total


def test_niqe_term_composes_from_direct_distance(natural_model):
    img = natural_like(2000, 32, 32)  # drawn from the corpus generator
    spec = LossSpec(w_mse=0.0, epsilon=0.5)
    total, terms = composite_loss(img, spec, natural=natural_model)
    d = niqe_score(img, natural_model)
    assert abs(total - 0.5 * d * d) < 1e-12 * max(1.0, total)
    assert terms["niqe"] == total
    unsquared = LossSpec(w_mse=0.0, epsilon=0.5, niqe_squared=False)
    total2, _ = composite_loss(img, unsquared, natural=natural_model)
    assert abs(total2 - 0.5 * d) < 1e-12 * max(1.0, total2)


def test_row_sixteen_recomposition(natural_model):
    img = natural_like(303, 32, 32)
    hr = natural_like(304, 32, 32)
    hr_msd = msd_features(hr, 8)
    total, terms = composite_loss(
        img, preset_spec("combo16"), hr=hr, natural=natural_model, hr_msd=hr_msd
    )
    d = niqe_score(img, natural_model)
    want = (
        10.0 * mse_loss(img, hr)
        + 0.01 * d * d
        + 0.001 * msd_feature_loss(msd_features(img, 8), hr_msd)
    )
    assert abs(total - want) < 1e-12 * want
    assert abs(total - (terms["mse"] + terms["niqe"] + terms["ma"])) < 1e-12 * want


def test_regressor_term_uses_raw_prediction():
    img = natural_like(305, 32, 32)
    # leaf mean 12 sits above the reporting clamp; the loss must see 12
    forest = leaf_forest(12.0, n_features=8)
    total, terms = composite_loss(
        img, LossSpec(w_mse=0.0, zeta=0.5, ma_variant="regressor"), forest=forest
    )
    assert total == 0.5 * 12.0
    assert terms["ma"] == total


def test_weights_scale_terms_exactly(natural_model):
    img = natural_like(306, 32, 32)
    hr = natural_like(307, 32, 32)
    spec = LossSpec(w_mse=10.0, epsilon=0.01, zeta=0.001)
    double = LossSpec(w_mse=2 * 10.0, epsilon=2 * 0.01, zeta=2 * 0.001)
    kw = dict(hr=hr, natural=natural_model, hr_msd=msd_features(hr, 8))
    t1, terms1 = composite_loss(img, spec, **kw)
    t2, terms2 = composite_loss(img, double, **kw)
    for k in terms1:
        assert terms2[k] == 2.0 * terms1[k]
    assert t2 == terms2["mse"] + terms2["niqe"] + terms2["ma"]


def test_missing_inputs_for_active_terms(natural_model):
    img = natural_like(308, 32, 32)
    with pytest.raises(ValueError, match="no reference image"):
        composite_loss(img, LossSpec(w_mse=10.0))
    with pytest.raises(ValueError, match="no natural model"):
        composite_loss(img, LossSpec(w_mse=0.0, epsilon=1.0))
    with pytest.raises(ValueError, match="no forest"):
        composite_loss(img, LossSpec(w_mse=0.0, zeta=1.0, ma_variant="regressor"))
    with pytest.raises(ValueError, match="reference spectra"):
        composite_loss(img, LossSpec(w_mse=0.0, zeta=1.0, ma_variant="reference"))
    with pytest.raises(ValueError, match="dimensions differ"):
        composite_loss(img, LossSpec(w_mse=10.0), hr=natural_like(309, 16, 16))


# ---------------------------------------------------------------------------
# gradients


def test_mse_gradient_matches_analytic():
    rng = np.random.default_rng(310)
    img = GrayImage(rng.uniform(30, 220, (16, 16)))
    hr = GrayImage(rng.uniform(30, 220, (16, 16)))
    g = finite_difference_gradient(img, LossSpec(w_mse=10.0), hr=hr)
    analytic = 2.0 * 10.0 * (img.data - hr.data) / img.data.size
    assert np.max(np.abs(g - analytic)) < 1e-4


def test_gradient_epsilon_validated():
    img = natural_like(311, 16, 16)
    with pytest.raises(ValueError):
        finite_difference_gradient(img, LossSpec(w_mse=10.0), hr=img, fd_epsilon=0.0)


# ---------------------------------------------------------------------------
# descent probe


def test_pure_mse_descent_decreases_every_step():
    hr = natural_like(312, 16, 16)
    init = add_noise(hr, 10.0, 313)
    trace = probe_descent(init, hr, LossSpec(w_mse=10.0), steps=10, step_size=1.0)
    totals = [rec.total for rec in trace.iterations]
    rmses = [rec.rmse for rec in trace.iterations]
    assert len(trace.iterations) == 11
    assert [rec.step for rec in trace.iterations] == list(range(11))
    assert all(b < a for a, b in zip(totals, totals[1:]))
    assert all(b < a for a, b in zip(rmses, rmses[1:]))
    assert trace.final.shape == hr.shape
    assert trace.final.data.min() >= 0.0 and trace.final.data.max() <= 255.0


def test_descent_from_the_target_stays_at_zero():
    hr = natural_like(314, 16, 16)
    trace = probe_descent(hr, hr, LossSpec(w_mse=10.0), steps=5, step_size=0.5)
    assert all(rec.total == 0.0 for rec in trace.iterations)
    assert all(rec.rmse == 0.0 for rec in trace.iterations)
    assert np.array_equal(trace.final.data, hr.data)


def test_tiny_step_never_increases_first_loss(natural_model):
    hr = natural_like(315, 32, 32)
    init = add_noise(hr, 8.0, 316)
    for spec in (
        LossSpec(w_mse=10.0),
        LossSpec(w_mse=10.0, epsilon=0.01),
        preset_spec("combo16"),
    ):
        trace = probe_descent(
            init, hr, spec, steps=1, step_size=1e-6,
            natural=natural_model, msd_patch=8,
        )
        assert trace.iterations[1].total <= trace.iterations[0].total + 1e-6


def test_probe_validation():
    a = natural_like(317, 16, 16)
    b = natural_like(318, 16, 32)
    big = natural_like(319, 96, 96)
    spec = LossSpec(w_mse=10.0)
    with pytest.raises(ValueError, match="dimensions differ"):
        probe_descent(a, b, spec, steps=1, step_size=0.1)
    with pytest.raises(ValueError, match="too large"):
        probe_descent(big, big, spec, steps=1, step_size=0.1)
    with pytest.raises(ValueError, match="steps"):
        probe_descent(a, a, spec, steps=0, step_size=0.1)
    with pytest.raises(ValueError, match="step_size"):
        probe_descent(a, a, spec, steps=1, step_size=0.0)
    with pytest.raises(ValueError, match="fd_epsilon"):
        probe_descent(a, a, spec, steps=1, step_size=0.1, fd_epsilon=-1.0)


def test_non_finite_loss_aborts_with_partial_trace():
    img = natural_like(320, 16, 16)
    broken = ForestModel(
        n_features=8,
        params=ForestParams(n_trees=1),
        trees=[
            _Tree(
                feature=np.array([-1], dtype=np.int32),
                threshold=np.zeros(1),
                left=np.array([-1], dtype=np.int32),
                right=np.array([-1], dtype=np.int32),
                value=np.array([np.inf]),
            )
        ],
    )
    spec = LossSpec(w_mse=0.0, zeta=1.0, ma_variant="regressor")
    with pytest.raises(ProbeAbortedError) as info:
        probe_descent(img, img, spec, steps=3, step_size=0.1, forest=broken)
    trace = info.value.trace
    assert trace.iterations == []  # died evaluating the initial state
    assert np.array_equal(trace.final.data, img.data)


def test_trace_round_trip():
    hr = natural_like(321, 16, 16)
    init = add_noise(hr, 6.0, 322)
    trace = probe_descent(init, hr, LossSpec(w_mse=10.0), steps=4, step_size=1.0)
    text = trace_csv(trace)
    back = trace_steps_from_csv(text)
    assert back == trace.iterations
    assert text.splitlines()[0] == "step,total,mse_term,niqe_term,ma_term,rmse"


def test_trace_parse_rejects_other_csv():
    with pytest.raises(ValueError):
        trace_steps_from_csv("a,b\n1,2\n")
    with pytest.raises(ValueError):
        trace_steps_from_csv("")
