import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import nuclass.autodiff as ad
from conftest import random_pairs, tiny_config
from nuclass.autodiff import ConfigError, ShapeError, Tape
from nuclass.model import (
    ModelConfig,
    SiameseNet,
    StageSpec,
    build_model,
    count_parameters,
    desk_config,
    forward,
    full_config,
    parameter_layout,
)


def test_desk_config_shape():
    cfg = desk_config()
    assert cfg.branch_stages[0] == StageSpec(1, 8, 3, 2, False, "relu6")
    assert cfg.branch_stages[2] == StageSpec(4, 24, 3, 2, True, "hard_swish")
    assert cfg.merge_stages == (StageSpec(4, 32, 3, 1, True, "hard_swish"),)
    assert cfg.head_hidden == (64,) and cfg.shared_branch and cfg.dropout == 0.2


@pytest.mark.parametrize("cfg", [desk_config(), desk_config(shared_branch=False), tiny_config(),
                                 full_config(), desk_config(head_hidden=(32, 16))])
def test_parameter_count_closed_form_matches_enumeration(cfg):
    enumerated = sum(int(np.prod(shape)) for _, shape, _ in parameter_layout(cfg))
    assert count_parameters(cfg) == enumerated
    if cfg.input_size <= 64:
        assert build_model(cfg).n_parameters() == enumerated


def test_non_shared_has_two_branches():
    shared = count_parameters(desk_config())
    split = count_parameters(desk_config(shared_branch=False))
    names = [n for n, _, _ in parameter_layout(desk_config(shared_branch=False))]
    assert any(n.startswith("branch_xz.") for n in names)
    assert any(n.startswith("branch_yz.") for n in names)
    assert split > shared


def test_logits_shape_and_batch_equals_single(tiny, rng):
    m = build_model(tiny)
    X = random_pairs(rng, 4)
    batch = m.forward(X).data
    assert batch.shape == (4, 3)
    for i in range(4):
        single = m.forward(X[i:i + 1]).data[0]
        assert np.allclose(single, batch[i], rtol=1e-12, atol=1e-12)


def test_swapping_views_changes_logits(tiny, rng):
    m = build_model(tiny)
    X = random_pairs(rng, 3)
    swapped = X[:, ::-1]
    assert not np.allclose(m.forward(X).data, m.forward(swapped).data)


def test_forward_helper_accepts_pair(tiny, rng):
    m = build_model(tiny)
    X = random_pairs(rng, 1)
    out = forward(m, (X[0, 0], X[0, 1]))
    assert out.shape == (3,)
    assert np.allclose(out.data, m.forward(X).data[0])
    with pytest.raises(ShapeError):
        forward(m, (X[0, 0], X[0, 1, :8]))
    with pytest.raises(ValueError):
        forward(m, X, mode="infer")


def test_input_shape_checked(tiny, rng):
    m = build_model(tiny)
    with pytest.raises(ShapeError):
        m.forward(rng.random((2, 2, 8, 8)))
    with pytest.raises(ShapeError):
        m.forward(rng.random((2, 3, 16, 16)))


def test_dropout_only_in_training(tiny, rng):
    m = build_model(tiny.replace(dropout=0.5))
    X = random_pairs(rng, 4)
    assert np.array_equal(m.forward(X).data, m.forward(X).data)
    assert not np.array_equal(m.forward(X, training=True).data, m.forward(X, training=True).data)


def test_he_init_scale():
    m = build_model(desk_config(), seed=1)
    w = m.params["merge.m0.expand.weight"].data
    fan_in = w.shape[1]
    assert w.std() == pytest.approx(np.sqrt(2 / fan_in), rel=0.1)
    assert np.all(m.params["head.out.bias"].data == 0)


def test_same_seed_same_weights():
    a, b = build_model(desk_config(), seed=4), build_model(desk_config(), seed=4)
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a.parameters(), b.parameters()))


def _loss_grads(model, X, y):
    with Tape() as tape:
        loss = model.loss(X, y, training=False)
    return ad.backward(tape, loss, wrt=model.parameters())


def test_shared_gradient_is_sum_of_view_contributions(tiny, rng):
    shared = build_model(tiny)
    split_cfg = tiny.replace(shared_branch=False)
    state = {}
    for name, arr in shared.state_dict().items():
        if name.startswith("branch."):
            state["branch_xz." + name[7:]] = arr
            state["branch_yz." + name[7:]] = arr
        else:
            state[name] = arr
    split = SiameseNet(split_cfg, state)
    X, y = random_pairs(rng, 3), np.array([0, 1, 2])
    assert np.allclose(shared.forward(X).data, split.forward(X).data, rtol=1e-13, atol=1e-13)
    g_shared = dict(zip([n for n, _ in shared.named_parameters()], _loss_grads(shared, X, y)))
    g_split = dict(zip([n for n, _ in split.named_parameters()], _loss_grads(split, X, y)))
    for name, g in g_shared.items():
        if name.startswith("branch."):
            total = g_split["branch_xz." + name[7:]] + g_split["branch_yz." + name[7:]]
            assert np.max(np.abs(total - g)) < 1e-10
        else:
            assert np.max(np.abs(g_split[name] - g)) < 1e-10


def test_end_to_end_gradient_on_sampled_parameters(tiny, rng):
    m = build_model(tiny)
    for name, t in m.named_parameters():
        if name.endswith("bias"):  # zero biases on sparse inputs sit exactly on relu6 kinks
            t.data[...] = rng.normal(0, 0.1, t.shape)
    X, y = rng.random((2, 2, 16, 16)), np.array([1, 2])
    names = [n for n, _ in m.named_parameters()]

    def loss_of(*tensors):
        m.params.update(dict(zip(names, tensors)))
        return m.loss(X, y, training=False)

    arrays = [t.data.copy() for t in m.parameters()]
    assert ad.gradcheck(loss_of, arrays, n_samples=3, rng=rng) < 1e-3


def test_state_dict_roundtrip(tiny):
    m = build_model(tiny)
    c = m.copy()
    assert all(np.array_equal(a.data, b.data) for a, b in zip(m.parameters(), c.parameters()))
    c.params["head.out.bias"].data[:] = 1.0
    assert not np.array_equal(m.params["head.out.bias"].data, c.params["head.out.bias"].data)


@pytest.mark.parametrize("kw,msg", [
    (dict(n_classes=4), "n_classes"),
    (dict(dropout=1.0), "dropout"),
    (dict(input_size=0), "input_size"),
    (dict(head_hidden=(0,)), "head_hidden"),
    (dict(branch_stages=[(1, 8, 2, 1, False, "relu6")]), "odd"),
    (dict(branch_stages=[(1, 8, 3, 1, False, "gelu")]), "activation"),
    (dict(merge_stages=[(1, 6, 3, 1, True, "relu6")], stem_channels=3,
          branch_stages=[(1, 3, 3, 1, False, "relu6")]), "SE width"),
])
def test_config_validation(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        desk_config(**kw)


def test_config_dict_roundtrip_and_hash():
    cfg = desk_config()
    back = ModelConfig.from_dict(cfg.to_dict())
    assert back == cfg and back.config_hash() == cfg.config_hash()
    assert cfg.replace(dropout=0.1).config_hash() != cfg.config_hash()
    with pytest.raises(ConfigError):
        ModelConfig.from_dict(dict(cfg.to_dict(), extra=1))


@given(st.integers(1, 6), st.integers(1, 40), st.sampled_from([1, 3, 5]), st.integers(1, 2),
       st.booleans())
def test_count_property(expansion, out_ch, kernel, stride, se):
    cfg = desk_config(merge_stages=[(expansion * 4, out_ch, kernel, stride, se, "hard_swish")])
    assert count_parameters(cfg) == sum(int(np.prod(s)) for _, s, _ in parameter_layout(cfg))


def test_float32_model_runs(tiny, rng):
    m = build_model(tiny, dtype=np.float32)
    out = m.forward(random_pairs(rng, 2)).data
    assert out.dtype == np.float32
