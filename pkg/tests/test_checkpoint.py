import numpy as np
import pytest

from ssagan.checkpoint import checkpoint_load, checkpoint_save
from ssagan.dataset import SynthSpec, synth_dataset
from ssagan.errors import FormatError, IncompatibleCheckpointError, TruncatedFileError
from ssagan.training import TrainConfig, Trainer, infer_labels, new_model, train_epochs


def tiny_config(**kw):
    base = dict(batch_size=8, epochs=(1, 1), m=3, seed=1, noise_dim=2, enc_widths=(8, 5),
                fusion_width=6, trunk_width=6)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def data():
    return synth_dataset(SynthSpec(feature_dim=5), 3, 40, n_test=1)


def test_round_trip_is_bit_identical(data, tmp_path):
    cfg = tiny_config()
    model, rows = train_epochs(data, cfg, out_dir=tmp_path)
    ckpt = checkpoint_load(tmp_path / "checkpoint.bin")
    assert ckpt.epoch == 2 and ckpt.loss_log == rows and ckpt.train_config == cfg
    for name, p in model.parameters().items():
        q = ckpt.model.parameters()[name]
        assert q.data.tobytes() == p.data.tobytes(), name
    for name, arr in model.buffers().items():
        assert ckpt.model.buffers()[name].tobytes() == arr.tobytes()
    video = data.split("test")[0]
    for a, b in zip(infer_labels(video, model), infer_labels(video, ckpt.model)):
        assert np.array_equal(a, b)


def test_optimizer_state_round_trip(data, tmp_path):
    cfg = tiny_config()
    model = new_model(cfg, data.manifest.k, data.manifest.frame_shape)
    trainer = Trainer(model, cfg)
    from ssagan.training import FramePool
    trainer.run_epoch(FramePool(data.split("train"), data.manifest.k))
    checkpoint_save(tmp_path / "c.bin", model, cfg, trainer=trainer, epoch=1)
    ckpt = checkpoint_load(tmp_path / "c.bin")
    st = trainer.opt_g.state_dict()
    assert ckpt.optimizers["gen"]["t"] == st["t"]
    for name in st["m"]:
        assert np.array_equal(ckpt.optimizers["gen"]["m"][name], st["m"][name])
        assert np.array_equal(ckpt.optimizers["gen"]["v"][name], st["v"][name])
    assert ckpt.rng_state == trainer.rng.bit_generator.state


def test_mismatched_k_is_incompatible(data, tmp_path):
    cfg = tiny_config()
    model = new_model(cfg, data.manifest.k, data.manifest.frame_shape)
    checkpoint_save(tmp_path / "c.bin", model, cfg)
    other = cfg.model_config(data.manifest.k + 1, data.manifest.frame_shape)
    with pytest.raises(IncompatibleCheckpointError, match="'k'"):
        checkpoint_load(tmp_path / "c.bin", expected=other)
    assert checkpoint_load(tmp_path / "c.bin", expected=model.config).epoch == 0


def test_corrupt_checkpoints(data, tmp_path):
    cfg = tiny_config()
    model = new_model(cfg, data.manifest.k, data.manifest.frame_shape)
    path = tmp_path / "c.bin"
    checkpoint_save(path, model, cfg)
    raw = path.read_bytes()
    path.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FormatError):
        checkpoint_load(path)
    path.write_bytes(raw[:-16])
    with pytest.raises(TruncatedFileError):
        checkpoint_load(path)
    path.write_bytes(raw[:10])
    with pytest.raises(TruncatedFileError):
        checkpoint_load(path)
