"""Dataset and checkpoint persistence.

Datasets are little-endian binary (see `DATASET_FORMAT` for the byte
layout); checkpoints are JSON text with full-precision decimal floats so
they diff cleanly and roundtrip bitwise.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CorruptHeader, MissingField, ShapeMismatch, StatMismatch, TruncatedBody
from .oracle import Dataset, GaitParams, RobotState, Trajectory

MAGIC = b"GSP1"
DATASET_VERSION = 1

DATASET_FORMAT = """\
Dataset file layout (all integers little-endian):
  magic             4 bytes  "GSP1"
  version           u32
  state_dim D       u32
  sample_rate       f64
  trajectory count  u32
  feature names     u32 count, then per name: u32 length + utf-8 bytes
  feature mean      D x f64
  feature std       D x f64
  per trajectory:
    gait params     6 x f64 (swing, full stance, step height, vx, vy, wz)
    length L        u32
    states          L x D x f32 rows
    contacts        L x 4 x u8
"""


def write_dataset(dataset: Dataset, path):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", DATASET_VERSION))
        f.write(struct.pack("<I", dataset.state_dim))
        f.write(struct.pack("<d", dataset.sample_rate))
        f.write(struct.pack("<I", len(dataset.trajectories)))
        f.write(struct.pack("<I", len(dataset.feature_names)))
        for name in dataset.feature_names:
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        f.write(np.asarray(dataset.feature_mean, dtype="<f8").tobytes())
        f.write(np.asarray(dataset.feature_std, dtype="<f8").tobytes())
        for traj in dataset.trajectories:
            p = traj.params
            f.write(struct.pack(
                "<6d", p.swing_duration, p.full_stance_duration, p.step_height,
                *p.base_twist_cmd,
            ))
            rows = traj.to_matrix().astype("<f4")
            f.write(struct.pack("<I", rows.shape[0]))
            f.write(rows.tobytes())
            f.write(traj.contacts().astype(np.uint8).tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedBody(
                f"needed {n} bytes at offset {self.pos}, file has "
                f"{len(self.data) - self.pos}", offset=self.pos,
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self, n: int = 1):
        vals = struct.unpack(f"<{n}d", self.take(8 * n))
        return vals[0] if n == 1 else vals


def read_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CorruptHeader("bad magic; not a GSP1 dataset")
    version = r.u32()
    if version != DATASET_VERSION:
        raise CorruptHeader(f"unsupported dataset version {version}")
    dim = r.u32()
    if dim == 0 or dim > 1_000_000:
        raise CorruptHeader(f"implausible state dim {dim}")
    sample_rate = r.f64()
    n_traj = r.u32()
    if n_traj > 1_000_000:
        raise CorruptHeader(f"implausible trajectory count {n_traj}")
    n_names = r.u32()
    if n_names != dim:
        raise CorruptHeader(f"{n_names} feature names for {dim} features")
    names = []
    for _ in range(n_names):
        ln = r.u32()
        if ln > 4096:
            raise CorruptHeader(f"implausible feature name length {ln}")
        names.append(r.take(ln).decode("utf-8"))
    mean = np.frombuffer(r.take(8 * dim), dtype="<f8").copy()
    std = np.frombuffer(r.take(8 * dim), dtype="<f8").copy()

    trajectories = []
    for _ in range(n_traj):
        sw, st, h, vx, vy, wz = r.f64(6)
        params = GaitParams(swing_duration=sw, full_stance_duration=st,
                            step_height=h, base_twist_cmd=(vx, vy, wz))
        length = r.u32()
        rows = np.frombuffer(r.take(4 * length * dim), dtype="<f4")
        rows = rows.reshape(length, dim).astype(np.float64)
        contacts = np.frombuffer(r.take(4 * length), dtype=np.uint8)
        contacts = contacts.reshape(length, 4).astype(bool)
        states = [RobotState.from_vector(rows[i], contacts[i])
                  for i in range(length)]
        trajectories.append(
            Trajectory(states=states, sample_rate=sample_rate, params=params)
        )

    if trajectories:
        rows = np.concatenate([t.to_matrix() for t in trajectories])
        body_mean = rows.mean(axis=0)
        body_std = rows.std(axis=0)
        body_std[body_std < 1e-8] = 1.0
        scale = np.maximum(np.abs(mean), 1.0)
        if (np.max(np.abs(body_mean - mean) / scale) > 1e-5
                or np.max(np.abs(body_std - std) / np.maximum(std, 1.0)) > 1e-5):
            raise StatMismatch("header statistics disagree with the body")

    return Dataset(trajectories=trajectories, feature_mean=mean,
                   feature_std=std, sample_rate=sample_rate,
                   feature_names=names)


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(model, path, metadata: dict | None = None):
    """Writes a VaeModel as a JSON text document (full-precision floats)."""
    doc = {
        "format": "gaitspace-checkpoint",
        "version": 1,
        "config": model.config.to_dict(),
        "normalization": {
            "mean": list(model.norm_mean),
            "std": list(model.norm_std),
        },
        "drive_dimension": model.d_drive,
        "drive_amplitude": model.drive_amplitude,
        "drive_phase_fraction": model.drive_phase_fraction,
        "drive_positive_pair": (
            list(model.drive_positive_pair)
            if model.drive_positive_pair is not None else None
        ),
        "networks": {
            name: [
                {"w": net.layers[i].w.tolist(), "b": net.layers[i].b.tolist()}
                for i in range(len(net.layers))
            ]
            for name, net in (("encoder", model.encoder),
                              ("decoder", model.decoder),
                              ("predictor", model.predictor))
        },
        "metadata": metadata or {},
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_checkpoint(path):
    from .nn import DenseLayer, Mlp
    from .vae import ModelConfig, VaeModel

    with open(path) as f:
        doc = json.load(f)
    for key in ("config", "normalization", "networks"):
        if key not in doc:
            raise MissingField(f"checkpoint missing '{key}'")
    config = ModelConfig.from_dict(doc["config"])
    norm = doc["normalization"]
    if "mean" not in norm or "std" not in norm:
        raise MissingField("normalization missing mean/std")
    mean = np.array(norm["mean"], dtype=np.float64)
    std = np.array(norm["std"], dtype=np.float64)
    if mean.shape != (config.state_dim,) or std.shape != (config.state_dim,):
        raise ShapeMismatch("normalization stats do not match state_dim")

    expected = {
        "encoder": config.encoder_sizes(),
        "decoder": config.decoder_sizes(),
        "predictor": config.predictor_sizes(),
    }
    nets = {}
    for name, sizes in expected.items():
        if name not in doc["networks"]:
            raise MissingField(f"checkpoint missing network '{name}'")
        layers = []
        stored = doc["networks"][name]
        if len(stored) != len(sizes) - 1:
            raise ShapeMismatch(f"{name}: wrong layer count")
        for i, entry in enumerate(stored):
            w = np.array(entry["w"], dtype=np.float64)
            b = np.array(entry["b"], dtype=np.float64)
            if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise ShapeMismatch(
                    f"{name} layer {i}: got {w.shape}, expected "
                    f"({sizes[i + 1]}, {sizes[i]})"
                )
            layers.append(DenseLayer(w, b))
        nets[name] = Mlp(layers)

    return VaeModel(
        config=config,
        encoder=nets["encoder"],
        decoder=nets["decoder"],
        predictor=nets["predictor"],
        norm_mean=mean,
        norm_std=std,
        d_drive=doc.get("drive_dimension"),
        drive_amplitude=doc.get("drive_amplitude"),
        drive_phase_fraction=doc.get("drive_phase_fraction"),
        drive_positive_pair=(
            tuple(doc["drive_positive_pair"])
            if doc.get("drive_positive_pair") is not None else None
        ),
    )
