import math

import numpy as np
import pytest
import torch
import torch.nn as nn
from torch.func import functional_call

from src.errors import BatchCompositionError, ConfigurationError, ContractError, NormalizationError
from src.hypergraph_conv import canonical_adjacencies
from src.recognizer import (
    BlockSpec,
    GaitBlock,
    GaitRecognizer,
    RecognizerConfig,
    block_forward,
    block_schedule,
    count_parameters,
    embed,
    sequence_tensor,
    sharing_parameter_table,
    supcon_loss,
    total_loss,
)

VIEWS = (0.0, 90.0)


def small_config(**overrides):
    values = dict(view_list=VIEWS, width_scale=0.125, sequence_length=12)
    values.update(overrides)
    return RecognizerConfig(**values)


def brute_force_supcon(features, labels, tau):
    f = features / np.linalg.norm(features, axis=1, keepdims=True)
    n = len(labels)
    total = 0.0
    for i in range(n):
        positives = [j for j in range(n) if j != i and labels[j] == labels[i]]
        denominator = sum(math.exp(f[i] @ f[k] / tau) for k in range(n) if labels[k] != labels[i])
        total += -sum(math.log(math.exp(f[i] @ f[j] / tau) / denominator) for j in positives) / len(positives)
    return total / n


class EchoCompleter:
    """Returns the source sequence for every configured view"""

    def __init__(self, views):
        self.views = views

    def complete(self, sample):
        return [sample.sequence for _ in self.views]


def test_schedule_widths():
    specs = block_schedule()
    assert [s.out_channels for s in specs] == [64, 64, 32, 128, 128, 256, 256]
    assert [s.temporal_stride for s in specs] == [1, 1, 1, 2, 1, 2, 1]
    assert [s.kind for s in specs] == ["basic"] + ["residual"] * 6
    assert specs[0].in_channels == 3


@pytest.mark.parametrize("frames", [60, 64])
def test_block_shapes_follow_schedule(topology, frames):
    adjacencies = canonical_adjacencies(topology)
    x = torch.zeros(1, 3, frames, 17)
    expected_t = [frames] * 3 + [frames // 2] * 2 + [frames // 4] * 2
    for spec, t in zip(block_schedule(), expected_t):
        x = GaitBlock(spec, adjacencies)(x)
        assert x.shape == (1, spec.out_channels, t, 17)


def test_block_forward_channels_last(topology):
    spec = block_schedule()[3]
    block = GaitBlock(spec, canonical_adjacencies(topology))
    out = block_forward(torch.randn(60, 17, 32), block)
    assert out.shape == (30, 17, 128)
    with pytest.raises(ContractError):
        block_forward(torch.randn(60, 17, 16), block)


def test_identity_residual_block_subsamples(topology):
    block = GaitBlock(BlockSpec("residual", 8, 8, temporal_stride=2), canonical_adjacencies(topology))
    with torch.no_grad():
        block.hgc.weight.zero_()
        block.tcn.weight.zero_()
        block.tcn.bias.zero_()
        block.shortcut.weight.copy_(torch.eye(8).reshape(8, 8, 1, 1))
        block.shortcut.bias.zero_()
    x = torch.randn(2, 8, 12, 17)
    assert torch.allclose(block(x), x[:, :, ::2])


def test_shortcut_kinds(topology):
    adjacencies = canonical_adjacencies(topology)
    assert GaitBlock(BlockSpec("basic", 3, 8), adjacencies).shortcut is None
    assert isinstance(GaitBlock(BlockSpec("residual", 8, 8), adjacencies).shortcut, nn.Identity)
    assert isinstance(GaitBlock(BlockSpec("residual", 8, 16), adjacencies).shortcut, nn.Conv2d)
    with pytest.raises(ConfigurationError):
        GaitBlock(BlockSpec("dense", 8, 8), adjacencies)


@pytest.mark.parametrize("seed", range(10))
def test_block_gradcheck(topology, seed):
    torch.manual_seed(seed)
    block = GaitBlock(BlockSpec("residual", 2, 3, temporal_stride=2, temporal_kernel=3), canonical_adjacencies(topology)).double()
    x = torch.randn(1, 2, 4, 17, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(block, (x,), eps=1e-6, atol=1e-6, rtol=1e-4)


@pytest.mark.parametrize("seed", range(10))
def test_two_block_total_loss_parameter_gradcheck(topology, seed):
    torch.manual_seed(seed)
    adjacencies = canonical_adjacencies(topology)

    def two_blocks():
        return nn.Sequential(
            GaitBlock(BlockSpec("basic", 3, 2, temporal_kernel=3), adjacencies),
            GaitBlock(BlockSpec("residual", 2, 3, temporal_stride=2, temporal_kernel=3), adjacencies),
        )

    model = nn.ModuleDict({"alpha": two_blocks(), "beta": two_blocks()}).double()
    gen = torch.Generator().manual_seed(100 + seed)
    source = torch.randn(4, 3, 4, 17, generator=gen, dtype=torch.float64)
    completed = torch.randn(4, 3, 4, 17, generator=gen, dtype=torch.float64)
    labels = [0, 0, 1, 1]
    names = [name for name, _ in model.named_parameters()]
    params = tuple(p.detach().clone().requires_grad_(True) for p in model.parameters())

    def loss(*values):
        state = dict(zip(names, values))
        f_alpha = functional_call(model["alpha"], _prefixed(state, "alpha."), (source,)).mean(dim=(2, 3))
        f_beta = functional_call(model["beta"], _prefixed(state, "beta."), (completed,)).mean(dim=(2, 3))
        return total_loss(f_alpha, f_beta, labels, tau=0.5)[0]

    assert torch.autograd.gradcheck(loss, params, eps=1e-6, atol=1e-6, rtol=1e-4)


def _prefixed(state, prefix):
    return {name[len(prefix):]: value for name, value in state.items() if name.startswith(prefix)}


def test_full_width_embedding_dims():
    config = RecognizerConfig(view_list=VIEWS)
    assert config.embedding_dim_per_branch == 256
    assert config.embedding_dim == 512
    assert RecognizerConfig(view_list=VIEWS, final_dim="project256").embedding_dim == 256
    assert RecognizerConfig(view_mode="none").embedding_dim == 256


def test_config_validation():
    with pytest.raises(ConfigurationError):
        small_config(shared_blocks=8).validate()
    with pytest.raises(ConfigurationError):
        small_config(sequence_length=10).validate()
    with pytest.raises(ConfigurationError):
        small_config(view_list=()).validate()
    with pytest.raises(ConfigurationError):
        small_config(view_mode="magic").validate()
    config = small_config(hgc_orders=[1, 3])
    assert RecognizerConfig.from_dict(config.to_dict()) == config


def test_source_branch_full_width_output():
    model = GaitRecognizer(RecognizerConfig(view_mode="none"))
    f_alpha, f_beta = model(torch.randn(1, 3, 60, 17))
    assert f_alpha.shape == (1, 256)
    assert f_beta is None


def test_zero_weights_give_zero_feature():
    model = GaitRecognizer(small_config(view_mode="none"))
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
    f_alpha, _ = model(torch.randn(2, 3, 12, 17))
    assert torch.count_nonzero(f_alpha) == 0
    with pytest.raises(NormalizationError):
        model.embedding(f_alpha, None)


def test_sequence_length_must_divide_by_four():
    model = GaitRecognizer(small_config(view_mode="none"))
    with pytest.raises(ContractError):
        model(torch.randn(1, 3, 10, 17))


def test_fully_shared_heads_equal_single_pass():
    model = GaitRecognizer(small_config(shared_blocks=7))
    x = torch.randn(2, 3, 12, 17)
    views = torch.stack([x, x])
    expected = x
    for block in model.generative_branch.shared:
        expected = block(expected)
    assert torch.allclose(model.generative_branch(views), expected.mean(dim=(2, 3)), atol=1e-6)


def test_view_order_is_irrelevant_with_matching_heads():
    model = GaitRecognizer(small_config(shared_blocks=4))
    branch = model.generative_branch
    views = torch.randn(2, 2, 3, 12, 17)
    before = branch(views)
    branch.heads = nn.ModuleList([branch.heads[1], branch.heads[0]])
    assert torch.allclose(branch(views.flip(0)), before, atol=1e-6)


def test_wrong_view_count_rejected():
    model = GaitRecognizer(small_config())
    with pytest.raises(ContractError):
        model(torch.randn(1, 3, 12, 17), torch.randn(3, 1, 3, 12, 17))
    with pytest.raises(ContractError):
        model(torch.randn(1, 3, 12, 17))


def test_sharing_reduces_parameters():
    rows = sharing_parameter_table(small_config())
    counts = [row["generative_parameters"] for row in rows]
    assert [row["shared_blocks"] for row in rows] == list(range(8))
    assert all(a > b for a, b in zip(counts, counts[1:]))


def test_concatenated_embedding_normalization():
    model = GaitRecognizer(small_config())
    e1 = torch.zeros(1, 32)
    e1[0, 0] = 1.0
    vector = model.embedding(e1, e1)
    assert vector.shape == (1, 64)
    assert torch.allclose(vector[0, [0, 32]], torch.full((2,), 1 / math.sqrt(2)))


def test_embed_is_unit_and_deterministic(tiny_records):
    model = GaitRecognizer(small_config())
    completer = EchoCompleter(VIEWS)
    first = embed(tiny_records[0], model, completer)
    second = embed(tiny_records[0], model, completer)
    assert first.vector.shape == (64,)
    assert np.linalg.norm(first.vector) == pytest.approx(1.0, abs=1e-6)
    assert np.array_equal(first.vector, second.vector)
    assert first.to_dict()["id"] == tiny_records[0].identity
    with pytest.raises(ContractError):
        embed(tiny_records[0], model)


def test_sequence_tensor_layout(tiny_records):
    x = sequence_tensor(tiny_records[0].sequence)
    assert x.shape == (3, 16, 17)
    assert x.dtype == torch.float32
    assert torch.all(x[2] == 1.0)


def test_supcon_reference_value():
    f = torch.tensor([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], dtype=torch.float64)
    loss = supcon_loss(f, [0, 0, 1, 1], tau=1.0)
    assert loss.item() == pytest.approx(math.log(2) - 1, abs=1e-6)


@pytest.mark.parametrize("seed", range(50))
def test_supcon_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    classes = int(rng.integers(2, 5))
    labels = np.repeat(np.arange(classes), int(rng.integers(2, 5)))
    features = rng.normal(size=(len(labels), 8))
    tau = float(rng.uniform(0.1, 1.0))
    loss = supcon_loss(torch.tensor(features), labels, tau)
    assert loss.item() == pytest.approx(brute_force_supcon(features, labels, tau), abs=1e-6)


def test_supcon_rotation_invariant(rng):
    from scipy.stats import ortho_group

    features = torch.tensor(rng.normal(size=(6, 5)))
    rotation = torch.tensor(ortho_group.rvs(5, random_state=1))
    labels = [0, 0, 1, 1, 2, 2]
    assert torch.allclose(supcon_loss(features, labels), supcon_loss(features @ rotation, labels), atol=1e-8)


def test_supcon_rejects_bad_batches():
    f = torch.randn(4, 3)
    with pytest.raises(BatchCompositionError):
        supcon_loss(f, [0, 0, 0, 0])
    with pytest.raises(BatchCompositionError):
        supcon_loss(f, [0, 0, 1, 2])


@pytest.mark.parametrize("seed", range(10))
def test_supcon_gradcheck(seed):
    torch.manual_seed(seed)
    f = torch.randn(6, 4, dtype=torch.float64, requires_grad=True)
    labels = [0, 0, 1, 1, 2, 2]
    assert torch.autograd.gradcheck(lambda x: supcon_loss(x, labels, 0.5), (f,), eps=1e-6, atol=1e-6, rtol=1e-4)


def test_total_loss_sums_branches():
    f_alpha = torch.randn(4, 3, dtype=torch.float64)
    f_beta = torch.randn(4, 3, dtype=torch.float64)
    labels = [0, 0, 1, 1]
    total, a, b = total_loss(f_alpha, f_beta, labels)
    assert total.item() == pytest.approx(a.item() + b.item())
    swapped, _, _ = total_loss(f_beta, f_alpha, labels)
    assert swapped.item() == pytest.approx(total.item())
    single, _, zero = total_loss(f_alpha, None, labels)
    assert zero.item() == 0.0 and single.item() == pytest.approx(a.item())


def test_count_parameters_ignores_frozen():
    layer = nn.Linear(3, 2)
    assert count_parameters(layer) == 8
    layer.bias.requires_grad_(False)
    assert count_parameters(layer) == 6
