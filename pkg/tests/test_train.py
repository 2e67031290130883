import numpy as np
import pytest
import torch

from gemmesh.cli.evaluate import rotate_samples
from gemmesh.config import ModelConfig, RunConfig, TrainConfig
from gemmesh.constants import TEST, TRAIN, VALIDATION
from gemmesh.errors import ConfigInvalidError, NonFiniteError
from gemmesh.geometry.primitives import cylinder
from gemmesh.nn.data import Sample, collate, collate_labels, prepare_sample
from gemmesh.nn.metrics import metrics
from gemmesh.nn.model import build_model
from gemmesh.nn.train import gradients, l1_loss, predict, split_indices, train
from gemmesh.synth.labels import label_artery
from gemmesh.synth.single import synth_single


def make_run(**train_overrides):
    settings = {"epochs": 2, "batch_size": 2, "split": (0.5, 0.25, 0.25), "seed": 1}
    settings.update(train_overrides)
    model = ModelConfig(widths=[2, 2], levels=2, max_order=1, time_steps=1, seed=0)
    return RunConfig(version=1, model=model, train=TrainConfig(**settings))


@pytest.fixture(scope="module")
def samples():
    config = make_run().model
    out = []
    for i, radius in enumerate([1.2, 1.4, 1.6, 1.8]):
        mesh = cylinder(radius=radius, length=10.0, segments=10, rings=8)
        flow = 2.0 + 0.5 * i
        context = prepare_sample(mesh, config, flow=flow)
        # axial wall shear stress growing with flow and shrinking with radius
        label = np.zeros((mesh.n_vertices, 1, 3))
        label[:, 0, 0] = flow / radius**3
        out.append(Sample(f"tube_{i}", mesh, context, label, flow))
    return out


def parameters(model):
    return {name: p.detach().clone() for name, p in model.named_parameters()}


def test_split_indices():
    splits = split_indices(10, (0.8, 0.1, 0.1), seed=3)
    assert [len(splits[k]) for k in (TRAIN, VALIDATION, TEST)] == [8, 1, 1]
    assert sorted(splits[TRAIN] + splits[VALIDATION] + splits[TEST]) == list(range(10))
    assert splits == split_indices(10, (0.8, 0.1, 0.1), seed=3)
    assert splits != split_indices(10, (0.8, 0.1, 0.1), seed=4)
    assert split_indices(3, (1.0, 0.0, 0.0), seed=0)[TRAIN] == [0, 1, 2]


def test_l1_loss():
    pred = torch.tensor([[1.0, -1.0]], dtype=torch.float64)
    label = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
    assert l1_loss(pred, label).item() == 1.5


def test_gradients_cover_every_parameter(samples):
    run = make_run()
    model = build_model(run.model)
    batch = collate([s.context for s in samples[:2]], run.model)
    loss, pred, grads = gradients(model, batch, collate_labels([s.label for s in samples[:2]]))
    assert loss.item() > 0
    assert pred.shape == (2 * samples[0].mesh.n_vertices, 1, 3)
    assert grads.keys() == dict(model.named_parameters()).keys()
    assert any(g.abs().sum() > 0 for g in grads.values())


def test_gradients_reject_non_finite_labels(samples):
    run = make_run()
    model = build_model(run.model)
    batch = collate([samples[0].context], run.model)
    label = np.full_like(samples[0].label, np.nan)
    with pytest.raises(NonFiniteError, match="loss"):
        gradients(model, batch, collate_labels([label]))


def test_zero_learning_rate_keeps_weights(samples):
    run = make_run(learning_rate=0.0, epochs=1)
    model = build_model(run.model)
    before = parameters(model)
    checkpoint = train(model, samples, run)
    for name, value in parameters(model).items():
        assert torch.equal(value, before[name]), name
    assert checkpoint.epoch == 1


def test_training_is_deterministic(samples):
    run = make_run()
    a = train(build_model(run.model), samples, run)
    b = train(build_model(run.model), samples, run)
    assert a.history == b.history
    for name, value in a.model_state.items():
        assert torch.equal(value, b.model_state[name]), name


def test_training_history_and_splits(samples):
    run = make_run(epochs=3, learning_rate=1e-2)
    model = build_model(run.model)
    checkpoint = train(model, samples, run)
    # Expected: one train row and one validation row per epoch
    assert [(row["epoch"], row["split"]) for row in checkpoint.history] == [
        (1, TRAIN),
        (1, VALIDATION),
        (2, TRAIN),
        (2, VALIDATION),
        (3, TRAIN),
        (3, VALIDATION),
    ]
    splits = checkpoint.extra["splits"]
    assert [len(splits[k]) for k in (TRAIN, VALIDATION, TEST)] == [2, 1, 1]
    assert 1 <= checkpoint.extra["best_epoch"] <= 3
    assert checkpoint.optimizer_state is not None
    assert checkpoint.config["train"]["epochs"] == 3
    val_losses = [row["loss"] for row in checkpoint.history if row["split"] == VALIDATION]
    best = checkpoint.extra["best_epoch"]
    assert val_losses[best - 1] == min(val_losses)
    preds = predict(model, [s.context for s in samples], run.model, batch_size=2)
    assert [p.shape for p in preds] == [s.label.shape for s in samples]


def test_train_size_limits_training_split(samples):
    run = make_run(epochs=1, split=(1.0, 0.0, 0.0), train_size=1)
    checkpoint = train(build_model(run.model), samples, run)
    assert len(checkpoint.extra["train_ids"]) == 1
    assert [row["split"] for row in checkpoint.history] == [TRAIN]


def test_empty_training_split(samples):
    run = make_run(split=(0.0, 0.5, 0.5))
    with pytest.raises(ConfigInvalidError, match="training split"):
        train(build_model(run.model), samples, run)


def test_non_finite_training_keeps_last_checkpoint(samples):
    run = make_run(epochs=1, split=(1.0, 0.0, 0.0))
    broken = [
        Sample(s.name, s.mesh, s.context, np.full_like(s.label, np.inf), s.flow) for s in samples
    ]
    with pytest.raises(NonFiniteError, match="epoch 1") as error:
        train(build_model(run.model), broken, run)
    assert error.value.checkpoint is not None
    assert error.value.checkpoint.epoch == 0


@pytest.mark.slow
def test_training_reduces_loss(samples):
    run = make_run(epochs=30, learning_rate=1e-2, split=(1.0, 0.0, 0.0), batch_size=4)
    checkpoint = train(build_model(run.model), samples, run)
    losses = [row["loss"] for row in checkpoint.history]
    assert min(losses[-5:]) < losses[0]


def proxy_dataset(config, count=32):
    out = []
    for seed in range(count):
        labeled = label_artery(synth_single(seed=seed, segments=12, spacing=1.0))
        mesh, flow = labeled.mesh, labeled.spec.flow
        context = prepare_sample(mesh, config, flow=flow)
        out.append(Sample(f"single_{seed}", mesh, context, labeled.wss, flow))
    return out


def validation_metrics(model, samples, config, rotate):
    if rotate:
        contexts, labels, _ = rotate_samples(samples, seed=0)
    else:
        contexts, labels = [s.context for s in samples], [s.label for s in samples]
    _, summary = metrics(predict(model, contexts, config, batch_size=4), labels)
    return summary["nmae"]["mean"], summary["eps"]["mean"]


@pytest.mark.slow
def test_learning_on_proxy_arteries():
    run = RunConfig(version=1, train=TrainConfig(epochs=100))
    samples = proxy_dataset(run.model)
    model = build_model(run.model)
    checkpoint = train(model, samples, run)
    held_out = [samples[i] for i in checkpoint.extra["splits"][VALIDATION]]
    nmae, eps = validation_metrics(model, held_out, run.model, rotate=False)
    assert nmae < 0.15
    assert eps < 0.5
    rotated_nmae, _ = validation_metrics(model, held_out, run.model, rotate=True)
    assert abs(rotated_nmae - nmae) < 1e-3

    pointnet_run = RunConfig(version=1, model=ModelConfig(conv_kind="pointnet"), train=run.train)
    pointnet_samples = proxy_dataset(pointnet_run.model)
    pointnet = build_model(pointnet_run.model)
    train(pointnet, pointnet_samples, pointnet_run)
    held_out = [pointnet_samples[i] for i in checkpoint.extra["splits"][VALIDATION]]
    plain, _ = validation_metrics(pointnet, held_out, pointnet_run.model, rotate=False)
    rotated, _ = validation_metrics(pointnet, held_out, pointnet_run.model, rotate=True)
    # Expected: at least 5x worse on rotated copies of the same meshes
    assert rotated >= 5.0 * plain
