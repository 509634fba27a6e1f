import numpy as np
import pytest

from vigil.autodiff import Var
from vigil.errors import ConfigError, ShapeError
from vigil.nn import (
    VARIANTS,
    Backbone,
    Model,
    ModelConfig,
    build_graph,
    default_preproc,
    fuse,
    label_for,
    model_forward,
    predict,
    unroll_last,
    variant_config,
)
from vigil.preproc import Clip, prepare_streams
from vigil.tensor import kernels as K
from vigil.tooling import REFERENCE_PARAMS, closed_form_params, count_params


def _streams(cfg: ModelConfig, rng, n: int | None = None):
    size = cfg.backbone.input_size
    lead = () if n is None else (n,)
    bsf = rng.uniform(0, 1, size=lead + (cfg.n_frames, size, size, 3))
    fd = rng.uniform(-1, 1, size=lead + (cfg.n_frames - 1, size, size, 3))
    return bsf, fd


def _scoped(store, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in store.items() if k.startswith(prefix)}


def _reference_probability(model: Model, bsf: np.ndarray, fd: np.ndarray) -> float:
    """The network assembled from independently verified primitives, one clip at a time."""
    cfg = model.cfg
    feats = {}
    for stream, x in (("frames", bsf), ("diff", fd)):
        if stream not in cfg.active_streams:
            continue
        backbone = Backbone(build_graph(cfg.backbone), _scoped(model.store, f"backbone.{stream}."))
        per_step = backbone.forward(x)
        h_last = unroll_last(Model.cell_spec(cfg), list(per_step), _scoped(model.store, f"cell.{stream}.")).value
        feats[stream] = K.maxpool2d(h_last, (2, 2))
    if len(feats) == 2:
        a, b = feats["frames"], feats["diff"]
        if cfg.fusion == "M":
            x = K.leaky_relu(a, cfg.leaky_slope) * K.sigmoid(b)
        elif cfg.fusion == "C":
            x = np.concatenate([a, b], axis=-1)
        else:
            x = a + b
    else:
        (x,) = feats.values()
    x = x.reshape(1, -1)
    for i in range(len(cfg.head)):
        x = x @ model.store[f"head.dense{i}.kernel"] + model.store[f"head.dense{i}.bias"]
        if i < len(cfg.head) - 1:
            x = K.leaky_relu(x, cfg.leaky_slope)
    return float(K.sigmoid(x)[0, 0])


# ── Fusion ───────────────────────────────────────────────────────────────────

def test_fuse_multiply_values():
    a = Var(np.array([[[[2.0, -1.0]]]]))
    b = Var(np.array([[[[0.0, 0.0]]]]))
    np.testing.assert_allclose(fuse(a, b, "M").value, [[[[1.0, -0.05]]]])


def test_fuse_concat_and_add():
    rng = np.random.default_rng(0)
    a, b = Var(rng.standard_normal((1, 3, 3, 4))), Var(rng.standard_normal((1, 3, 3, 4)))
    c = fuse(a, b, "C").value
    assert c.shape == (1, 3, 3, 8)
    np.testing.assert_array_equal(c[..., :4], a.value)
    np.testing.assert_array_equal(c[..., 4:], b.value)
    np.testing.assert_allclose(fuse(a, b, "A").value, a.value + b.value)


def test_fuse_concat_allows_unequal_channels():
    a, b = Var(np.zeros((1, 2, 2, 3))), Var(np.zeros((1, 2, 2, 5)))
    assert fuse(a, b, "C").shape == (1, 2, 2, 8)


@pytest.mark.parametrize("kind", ["M", "A"])
def test_fuse_shape_mismatch(kind):
    with pytest.raises(ShapeError, match="equal shapes"):
        fuse(Var(np.zeros((1, 2, 2, 3))), Var(np.zeros((1, 2, 2, 4))), kind)


def test_fuse_concat_spatial_mismatch():
    with pytest.raises(ShapeError):
        fuse(Var(np.zeros((1, 2, 2, 3))), Var(np.zeros((1, 3, 2, 3))), "C")


# ── Configuration ────────────────────────────────────────────────────────────

def test_every_variant_validates():
    for name in VARIANTS:
        assert isinstance(variant_config(name), ModelConfig)


def test_unknown_variant():
    with pytest.raises(ConfigError, match="unknown model variant"):
        variant_config("resnet")


@pytest.mark.parametrize("head", [[64, 16], [], [0, 1]])
def test_head_must_end_in_single_unit(head):
    with pytest.raises(ValueError):
        ModelConfig(head=head)


def test_even_lstm_kernel_rejected():
    with pytest.raises(ValueError):
        ModelConfig(lstm_kernel=2)


def test_default_preproc_full_scale():
    spec = default_preproc(ModelConfig())
    assert (spec.n_frames, spec.resize_to, spec.crop_to) == (32, 320, 224)


def test_model_config_load_accepts_training_file(tmp_path, tiny_cfg):
    path = tmp_path / "train.json"
    path.write_text('{"model": ' + tiny_cfg.model_dump_json() + "}")
    assert ModelConfig.load(path) == tiny_cfg


# ── Parameter counts ─────────────────────────────────────────────────────────

@pytest.mark.parametrize("name", sorted(REFERENCE_PARAMS))
def test_counts_close_to_reference(name):
    total = count_params(variant_config(name)).total_params
    assert abs(total - REFERENCE_PARAMS[name]) / REFERENCE_PARAMS[name] < 0.01


def test_two_stream_separable_count():
    assert count_params(variant_config("sepconvlstm_m")).total_params == 332_545
    assert count_params(variant_config("frames_only_c")).total_params == 185_265


@pytest.mark.parametrize("name", sorted(REFERENCE_PARAMS))
def test_closed_form_matches_shape_tally(name):
    cfg = variant_config(name)
    assert closed_form_params(cfg) == count_params(cfg).total_params


def test_closed_form_matches_built_model(tiny_cfg, tiny_m):
    for cfg in (tiny_cfg, tiny_m):
        assert closed_form_params(cfg) == Model.build(cfg).store.n_params


def test_concat_minus_multiply_is_independent_of_cell_kind():
    def count(name):
        return count_params(variant_config(name)).total_params

    delta = count("sepconvlstm_c") - count("sepconvlstm_m")
    assert delta == count("convlstm_c") - count("convlstm_m")
    # 3×3×64 extra inputs into the 64-wide first dense layer
    assert delta == 3 * 3 * 64 * 64


def test_multiply_and_add_have_equal_counts():
    assert count_params(variant_config("sepconvlstm_m")).total_params == count_params(
        variant_config("sepconvlstm_a")
    ).total_params


# ── Build and forward ────────────────────────────────────────────────────────

def test_same_seed_same_parameters(tiny_cfg):
    a, b = Model.build(tiny_cfg, seed=5), Model.build(tiny_cfg, seed=5)
    assert list(a.store) == list(b.store)
    for name in a.store:
        np.testing.assert_array_equal(a.store[name], b.store[name])
    c = Model.build(tiny_cfg, seed=6)
    assert any(not np.array_equal(a.store[k], c.store[k]) for k in a.store if k.endswith("kernel"))


def test_store_missing_tensor_rejected(tiny_cfg):
    store = Model.build(tiny_cfg).store
    del store["head.dense1.bias"]
    with pytest.raises(ShapeError, match="lacks"):
        Model(tiny_cfg, store)


def test_probabilities_in_open_interval(tiny_cfg, rng):
    model = Model.build(tiny_cfg, seed=0)
    p = model.forward(*_streams(tiny_cfg, rng, n=3))
    assert p.shape == (3,)
    assert np.all((p > 0) & (p < 1))


def test_zero_head_gives_half(tiny_cfg, rng):
    model = Model.build(tiny_cfg, seed=0)
    for name in list(model.store):
        if name.startswith("head."):
            model.store[name] = np.zeros_like(model.store[name])
    p = model_forward(model, *_streams(tiny_cfg, rng))
    assert p == 0.5
    assert label_for(p) == "violent"


@pytest.mark.parametrize("fusion", ["M", "C", "A"])
def test_forward_matches_reference_composition(tiny_cfg, rng, fusion):
    cfg = tiny_cfg.model_copy(update={"fusion": fusion})
    model = Model.build(cfg, seed=2, dtype="f64")
    bsf, fd = _streams(cfg, rng)
    assert model_forward(model, bsf, fd) == pytest.approx(_reference_probability(model, bsf, fd), rel=1e-9)


@pytest.mark.parametrize("streams", ["frames_only", "diff_only"])
def test_single_stream_ignores_other_input(tiny_cfg, rng, streams):
    cfg = tiny_cfg.model_copy(update={"streams": streams, "fusion": "C"})
    model = Model.build(cfg, seed=1, dtype="f64")
    bsf, fd = _streams(cfg, rng)
    p = model_forward(model, bsf, fd)
    assert p == pytest.approx(_reference_probability(model, bsf, fd), rel=1e-9)
    if streams == "frames_only":
        assert model_forward(model, bsf, np.zeros_like(fd)) == p
    else:
        assert model_forward(model, np.zeros_like(bsf), fd) == p


def test_batch_result_equals_per_clip(tiny_cfg, rng):
    model = Model.build(tiny_cfg, seed=3, dtype="f64")
    bsf, fd = _streams(tiny_cfg, rng, n=3)
    batched = model.forward(bsf, fd)
    for i in range(3):
        assert batched[i] == pytest.approx(model_forward(model, bsf[i], fd[i]), rel=1e-10)


def test_wrong_time_steps_rejected(tiny_cfg, rng):
    model = Model.build(tiny_cfg)
    bsf, fd = _streams(tiny_cfg, rng, n=1)
    with pytest.raises(ShapeError, match="time steps"):
        model.forward(bsf[:, :-1], fd)
    with pytest.raises(ShapeError, match="time steps"):
        model.forward(bsf, fd[:, :-1])


def test_label_tie_goes_to_violent():
    assert label_for(0.5) == "violent"
    assert label_for(np.nextafter(0.5, 0)) == "nonviolent"
    assert label_for(0.99) == "violent"


def test_predict_equals_preprocessed_forward(tiny_cfg, rng):
    model = Model.build(tiny_cfg, seed=4)
    clip = Clip(rng.uniform(0, 1, size=(10, 20, 24, 3)).astype(np.float32), "c0")
    result = predict(model, clip)
    bsf, fd = prepare_streams(clip, default_preproc(tiny_cfg))
    assert result.p == model_forward(model, bsf, fd)
    assert result.label == label_for(result.p)


def test_imported_backbone_lands_in_both_streams(tiny_cfg):
    donor = Model.build(tiny_cfg, seed=9)
    store = _scoped(donor.store, "backbone.frames.")
    model = Model.build(tiny_cfg, seed=0, backbone_store=store)
    assert model.store.provenance == "imported"
    for name, value in store.items():
        np.testing.assert_array_equal(model.store[f"backbone.frames.{name}"], value)
        np.testing.assert_array_equal(model.store[f"backbone.diff.{name}"], value)
