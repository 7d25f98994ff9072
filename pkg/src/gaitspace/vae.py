"""Encoder/decoder/contact-predictor model, training objective, and
drive-dimension identification.

All three networks are plain MLPs from `nn`. Losses: reconstruction MSE
plus beta-weighted KL to a unit Gaussian, plus gamma-weighted BCE on the
predicted feet-in-contact, with contact gradients flowing back through
the encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousDrive, DimensionMismatch, NonFiniteLoss
from .nn import AdamState, Mlp

DESK_HIDDEN = 64


@dataclass(frozen=True)
class ModelConfig:
    state_dim: int = 60
    window_len: int = 20       # N past states in the encoder input
    future_len: int = 4        # M future states predicted by the decoder
    contact_steps: int = 3     # J contact-prediction steps
    latent_dim: int = 8
    hidden: int = DESK_HIDDEN
    n_hidden: int = 2
    f_c: float = 100.0
    f_enc: float = 50.0
    action_dim: int = 3
    # KL weight against a reconstruction term summed over all predicted
    # elements; at this strength the prior prunes inactive latent dims so
    # the gait oscillation concentrates in a single coordinate
    beta: float = 25.0
    gamma: float = 0.5

    def __post_init__(self):
        if self.f_c <= 0 or self.f_enc <= 0:
            raise ValueError("frequencies must be positive")
        r = self.f_c / self.f_enc
        if abs(r - round(r)) > 1e-9 or round(r) < 1:
            raise ValueError("f_c/f_enc must be an integer >= 1")
        if self.latent_dim < 6:
            raise ValueError("latent_dim must be >= 6")
        if self.contact_steps < 1:
            raise ValueError("contact_steps must be >= 1")

    @property
    def stride(self) -> int:
        return int(round(self.f_c / self.f_enc))

    @property
    def window_duration(self) -> float:
        return self.window_len / self.f_enc

    def encoder_sizes(self):
        return ([self.window_len * self.state_dim]
                + [self.hidden] * self.n_hidden + [2 * self.latent_dim])

    def decoder_sizes(self):
        return ([self.latent_dim + self.action_dim]
                + [self.hidden] * self.n_hidden
                + [(self.future_len + 1) * self.state_dim])

    def predictor_sizes(self):
        return ([self.latent_dim] + [self.hidden] * self.n_hidden
                + [self.contact_steps * 4])

    def to_dict(self) -> dict:
        return {
            "state_dim": self.state_dim, "window_len": self.window_len,
            "future_len": self.future_len, "contact_steps": self.contact_steps,
            "latent_dim": self.latent_dim, "hidden": self.hidden,
            "n_hidden": self.n_hidden, "f_c": self.f_c, "f_enc": self.f_enc,
            "action_dim": self.action_dim, "beta": self.beta,
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class LatentState:
    mean: np.ndarray
    log_variance: np.ndarray
    sample: np.ndarray


@dataclass
class VaeModel:
    config: ModelConfig
    encoder: Mlp
    decoder: Mlp
    predictor: Mlp
    norm_mean: np.ndarray
    norm_std: np.ndarray
    d_drive: int | None = None
    drive_amplitude: float | None = None
    drive_phase_fraction: float | None = None
    drive_positive_pair: tuple | None = None

    @classmethod
    def init(cls, config: ModelConfig, norm_mean, norm_std,
             seed: int = 0) -> "VaeModel":
        rng = np.random.default_rng(seed)
        return cls(
            config=config,
            encoder=Mlp.init(config.encoder_sizes(), rng),
            decoder=Mlp.init(config.decoder_sizes(), rng),
            predictor=Mlp.init(config.predictor_sizes(), rng),
            norm_mean=np.asarray(norm_mean, dtype=np.float64),
            norm_std=np.asarray(norm_std, dtype=np.float64),
        )

    def params(self):
        return (self.encoder.params() + self.decoder.params()
                + self.predictor.params())

    def normalize(self, states: np.ndarray) -> np.ndarray:
        return (states - self.norm_mean) / self.norm_std

    def denormalize(self, states: np.ndarray) -> np.ndarray:
        return states * self.norm_std + self.norm_mean


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def encode(model: VaeModel, window: np.ndarray, mode: str = "mean",
           rng: np.random.Generator | None = None) -> LatentState:
    """Posterior over z for a normalized, flattened encoder window."""
    out, _ = model.encoder.forward(window)
    dz = model.config.latent_dim
    mean, logvar = out[..., :dz], out[..., dz:]
    if mode == "mean":
        sample = mean.copy()
    elif mode == "sample":
        noise = (rng or np.random.default_rng()).standard_normal(mean.shape)
        sample = mean + np.exp(0.5 * logvar) * noise
    else:
        raise ValueError(f"unknown encode mode {mode!r}")
    return LatentState(mean=mean, log_variance=logvar, sample=sample)


def decode(model: VaeModel, z: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Denormalized (M+1, D) state prediction."""
    cfg = model.config
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (cfg.latent_dim,):
        raise DimensionMismatch(f"z shape {z.shape} != ({cfg.latent_dim},)")
    out, _ = model.decoder.forward(np.concatenate([z, np.asarray(action)]))
    return model.denormalize(out.reshape(cfg.future_len + 1, cfg.state_dim))


def predict_contacts(model: VaeModel, z: np.ndarray) -> np.ndarray:
    """(J, 4) per-foot contact probabilities."""
    logits, _ = model.predictor.forward(np.asarray(z, dtype=np.float64))
    return _sigmoid(logits).reshape(model.config.contact_steps, 4)


def kl_diag_gaussian(mean, logvar):
    """KL(q || N(0, I)) summed over latent dims; >= 0."""
    return 0.5 * np.sum(mean**2 + np.exp(logvar) - 1.0 - logvar, axis=-1)


# ---------------------------------------------------------------------------
# Losses with gradients


def batch_loss(model: VaeModel, windows, targets, contacts, actions, noise,
               beta=None, gamma=None):
    """Total training loss over a minibatch with full reverse-mode grads.

    windows (B, N*D) and targets (B, (M+1)*D) normalized; contacts
    (B, J*4) in {0,1}; actions (B, 3); noise (B, dz) reparameterization
    draws (zeros give the deterministic posterior mean).
    Returns (total, grads flat list matching model.params(), parts dict).
    """
    cfg = model.config
    beta = cfg.beta if beta is None else beta
    gamma = cfg.gamma if gamma is None else gamma
    B = windows.shape[0]
    dz = cfg.latent_dim

    enc_out, enc_cache = model.encoder.forward(windows)
    mu, lv = enc_out[:, :dz], enc_out[:, dz:]
    sigma = np.exp(0.5 * lv)
    z = mu + sigma * noise

    dec_in = np.concatenate([z, actions], axis=1)
    yhat, dec_cache = model.decoder.forward(dec_in)
    resid = yhat - targets
    # sums over elements, mean over the batch (log-likelihood convention;
    # keeps beta=1 from crushing the reconstruction term)
    l_rec = float(np.sum(resid**2) / B)
    l_kl = float(np.mean(kl_diag_gaussian(mu, lv)))

    logits, pp_cache = model.predictor.forward(z)
    l_bce = float(np.sum(np.logaddexp(0.0, logits) - contacts * logits) / B)

    total = l_rec + beta * l_kl + gamma * l_bce
    if not math.isfinite(total):
        raise NonFiniteLoss(
            f"rec={l_rec} kl={l_kl} bce={l_bce}"
        )
    dyhat = 2.0 * resid / B
    dec_grads, ddec_in = model.decoder.backward(dec_cache, dyhat)
    dzed = ddec_in[:, :dz]

    dlogits = gamma * (_sigmoid(logits) - contacts) / B
    pp_grads, dz_pp = model.predictor.backward(pp_cache, dlogits)
    dzed = dzed + dz_pp

    dmu = dzed + beta * mu / B
    dlv = dzed * noise * 0.5 * sigma + beta * 0.5 * (np.exp(lv) - 1.0) / B
    enc_grads, _ = model.encoder.backward(
        enc_cache, np.concatenate([dmu, dlv], axis=1)
    )

    flat = []
    for grads in (enc_grads, dec_grads, pp_grads):
        for dw, db in grads:
            flat.append(dw)
            flat.append(db)
    parts = {"rec": l_rec, "kl": l_kl, "bce": l_bce}
    return total, flat, parts


def elbo_loss(model, window, target, beta=None, noise=None):
    """Single-sample ELBO loss (reconstruction MSE + beta*KL), with grads."""
    cfg = model.config
    if noise is None:
        noise = np.zeros((1, cfg.latent_dim))
    zero_contacts = np.zeros((1, cfg.contact_steps * 4))
    total, grads, parts = batch_loss(
        model, np.atleast_2d(window), np.atleast_2d(target), zero_contacts,
        np.zeros((1, cfg.action_dim)), noise, beta=beta, gamma=0.0,
    )
    return total, grads, parts


def total_loss(model, window, target, contact_truth, action=None,
               beta=None, gamma=None, noise=None):
    """Single-sample full loss (ELBO + gamma*BCE), with grads."""
    cfg = model.config
    if noise is None:
        noise = np.zeros((1, cfg.latent_dim))
    if action is None:
        action = np.zeros(cfg.action_dim)
    return batch_loss(
        model, np.atleast_2d(window), np.atleast_2d(target),
        np.asarray(contact_truth, dtype=np.float64).reshape(1, -1),
        np.atleast_2d(np.asarray(action, dtype=np.float64)), noise,
        beta=beta, gamma=gamma,
    )


def online_elbo(model: VaeModel, window: np.ndarray, current_state_norm,
                action, beta=None) -> float:
    """Causal ELBO for the disturbance monitor.

    Reconstruction uses only the current state (future truth is not
    available in closed loop); KL is the full posterior term. Positive
    convention: larger means more anomalous.
    """
    cfg = model.config
    beta = cfg.beta if beta is None else beta
    latent = encode(model, window, mode="mean")
    out, _ = model.decoder.forward(
        np.concatenate([latent.mean, np.asarray(action, dtype=np.float64)])
    )
    xhat0 = out[:cfg.state_dim]
    rec = float(np.sum((xhat0 - current_state_norm) ** 2))
    kl = float(kl_diag_gaussian(latent.mean, latent.log_variance))
    return rec + beta * kl


# ---------------------------------------------------------------------------
# Training data assembly


class TrainingData:
    """Flattened window/target/contact/action views over a dataset."""

    def __init__(self, dataset, config: ModelConfig):
        cfg = config
        r = cfg.stride
        span = r * (cfg.window_len - 1)
        mats, contacts, actions, index = [], [], [], []
        offset = 0
        for ti, traj in enumerate(dataset.trajectories):
            mat = (traj.to_matrix() - dataset.feature_mean) / dataset.feature_std
            mats.append(mat)
            contacts.append(traj.contacts().astype(np.float64))
            actions.append(np.asarray(traj.params.base_twist_cmd))
            last_k = len(traj) - 1 - max(cfg.future_len, cfg.contact_steps - 1)
            for k in range(span, last_k + 1):
                index.append((ti, offset + k))
            offset += len(traj)
        if not index:
            raise ValueError("dataset trajectories too short for the window")
        self.states = np.concatenate(mats)
        self.contacts = np.concatenate(contacts)
        self.actions = np.stack(actions)
        self.index = np.array(index, dtype=np.int64)
        self.win_rel = np.arange(-span, 1, r)
        self.tgt_rel = np.arange(0, cfg.future_len + 1)
        self.ct_rel = np.arange(0, cfg.contact_steps)
        self.config = cfg

    def __len__(self):
        return len(self.index)

    def batch(self, rows: np.ndarray):
        ti = self.index[rows, 0]
        ks = self.index[rows, 1]
        wins = self.states[ks[:, None] + self.win_rel].reshape(len(rows), -1)
        tgts = self.states[ks[:, None] + self.tgt_rel].reshape(len(rows), -1)
        cts = self.contacts[ks[:, None] + self.ct_rel].reshape(len(rows), -1)
        acts = self.actions[ti]
        return wins, tgts, cts, acts


def train(config: ModelConfig, dataset, steps: int = 5000,
          batch_size: int = 64, lr: float = 1e-3, seed: int = 0,
          holdout_fraction: float = 0.1, log_every: int = 0):
    """Trains a fresh model; deterministic under seed.

    Returns (model, history dict with per-step losses and the held-out
    window rows reserved for evaluation).
    """
    data = TrainingData(dataset, config)
    rng = np.random.default_rng(seed)
    model = VaeModel.init(config, dataset.feature_mean, dataset.feature_std,
                          seed=seed)
    adam = AdamState(lr=lr)
    params = model.params()

    perm = rng.permutation(len(data))
    n_hold = int(len(data) * holdout_fraction)
    hold_rows = perm[:n_hold]
    train_rows = perm[n_hold:]

    history = {"total": [], "rec": [], "kl": [], "bce": []}
    for step in range(steps):
        rows = train_rows[rng.integers(0, len(train_rows), size=batch_size)]
        wins, tgts, cts, acts = data.batch(rows)
        noise = rng.standard_normal((batch_size, config.latent_dim))
        loss, grads, parts = batch_loss(model, wins, tgts, cts, acts, noise)
        adam.step(params, grads)
        history["total"].append(loss)
        for k in ("rec", "kl", "bce"):
            history[k].append(parts[k])
        if log_every and (step + 1) % log_every == 0:
            print(f"step {step + 1}: total={loss:.5f} "
                  f"rec={parts['rec']:.5f} kl={parts['kl']:.5f} "
                  f"bce={parts['bce']:.5f}")
    history["holdout_rows"] = hold_rows
    return model, history


def holdout_metrics(model: VaeModel, data: TrainingData, rows) -> dict:
    """Reconstruction MSE and thresholded contact accuracy on held-out rows."""
    cfg = model.config
    wins, tgts, cts, acts = data.batch(np.asarray(rows))
    latent = encode(model, wins, mode="mean")
    out, _ = model.decoder.forward(
        np.concatenate([latent.mean, acts], axis=1)
    )
    mse = float(np.mean((out - tgts) ** 2))
    logits, _ = model.predictor.forward(latent.mean)
    acc = float(np.mean((logits > 0.0) == (cts > 0.5)))
    return {"mse": mse, "contact_accuracy": acc, "latents": latent.mean,
            "contacts": cts[:, :4]}


# ---------------------------------------------------------------------------
# Drive-dimension identification


def encode_trajectory(model: VaeModel, trajectory) -> np.ndarray:
    """Latent posterior means for every valid window of a trajectory."""
    cfg = model.config
    mat = model.normalize(trajectory.to_matrix())
    span = cfg.stride * (cfg.window_len - 1)
    ks = np.arange(span, len(trajectory))
    rel = np.arange(-span, 1, cfg.stride)
    wins = mat[ks[:, None] + rel].reshape(len(ks), -1)
    return encode(model, wins, mode="mean").mean


def gait_frequency(params) -> float:
    return 1.0 / params.cycle_duration


def spectral_powers(latents: np.ndarray, f_gait: float, sample_rate: float,
                    cycles_per_segment: int = 4) -> np.ndarray:
    """Welch-averaged power at the gait frequency for each latent dim."""
    T, dz = latents.shape
    seg = int(round(cycles_per_segment * sample_rate / f_gait))
    seg = min(seg, T)
    hop = max(1, seg // 2)
    x = latents - latents.mean(axis=0)
    window = np.hanning(seg)
    bin_idx = int(round(f_gait * seg / sample_rate))
    bin_idx = max(1, bin_idx)
    powers = np.zeros(dz)
    count = 0
    for start in range(0, T - seg + 1, hop):
        chunk = x[start:start + seg] * window[:, None]
        spec = np.abs(np.fft.rfft(chunk, axis=0)) ** 2
        lo, hi = max(1, bin_idx - 1), bin_idx + 2
        powers += spec[lo:hi].sum(axis=0)
        count += 1
    return powers / max(count, 1)


def gait_bin_coherence(latents: np.ndarray, d1: int, d2: int, f_gait: float,
                       sample_rate: float, cycles_per_segment: int = 4) -> float:
    """Welch cross-spectral coherence of two latent dims at the gait bin."""
    T = latents.shape[0]
    seg = min(int(round(cycles_per_segment * sample_rate / f_gait)), T)
    hop = max(1, seg // 2)
    window = np.hanning(seg)
    bin_idx = max(1, int(round(f_gait * seg / sample_rate)))
    a = latents[:, d1] - latents[:, d1].mean()
    b = latents[:, d2] - latents[:, d2].mean()
    cross = 0.0 + 0.0j
    paa = pbb = 0.0
    for start in range(0, T - seg + 1, hop):
        fa = np.fft.rfft(a[start:start + seg] * window)[bin_idx]
        fb = np.fft.rfft(b[start:start + seg] * window)[bin_idx]
        cross += fa * np.conj(fb)
        paa += abs(fa) ** 2
        pbb += abs(fb) ** 2
    if paa <= 0 or pbb <= 0:
        return 0.0
    return float(abs(cross) / math.sqrt(paa * pbb))


def identify_drive_dimension(model: VaeModel, latents: np.ndarray,
                             f_gait: float, sample_rate: float,
                             ambiguity_margin: float = 0.1,
                             coherence_floor: float = 0.8,
                             dominance_floor: float = 3.0) -> int:
    """Latent dim with dominant spectral power at the gait frequency.

    Requires the winner to dominate the median dimension power by
    `dominance_floor` (white-noise latents have no such dimension). A
    near-tie in power (top two within `ambiguity_margin`) is benign when
    the two traces are phase-coherent at the gait bin: they carry the
    same drive component and the higher-power one wins. An incoherent
    near-tie is ambiguous.
    """
    powers = spectral_powers(latents, f_gait, sample_rate)
    order = np.argsort(powers)[::-1]
    p1, p2 = powers[order[0]], powers[order[1]]
    med = float(np.median(powers))
    if p1 <= 0.0 or (med > 0 and p1 < dominance_floor * med):
        raise AmbiguousDrive(
            f"top power {p1:.4g} does not dominate the median {med:.4g}"
        )
    if (p1 - p2) / p1 < ambiguity_margin:
        coherence = gait_bin_coherence(
            latents, int(order[0]), int(order[1]), f_gait, sample_rate
        )
        if coherence < coherence_floor:
            raise AmbiguousDrive(
                f"top powers {p1:.4g} and {p2:.4g} within "
                f"{ambiguity_margin:.0%} and incoherent "
                f"(|corr|={coherence:.2f})"
            )
    return int(order[0])


def fit_drive_signal(model: VaeModel, trajectory) -> VaeModel:
    """Identifies d_drive and fits the oscillator amplitude/phase offset.

    Encodes a nominal rollout, picks the dominant gait-frequency dim,
    then least-squares matches an oscillator trace against the encoded
    dim over all cyclic shifts. Stores the results on the model.
    """
    from .drive import DriveSignalState, advance_phase, drive_value

    cfg = model.config
    params = trajectory.params
    f_gait = gait_frequency(params)
    latents = encode_trajectory(model, trajectory)
    d = identify_drive_dimension(model, latents, f_gait, cfg.f_c)

    osc = DriveSignalState.from_durations(
        params.swing_duration, params.full_stance_duration, cfg.f_c,
        amplitude=1.0,
    )
    cycle = osc.period_ticks + 2 * osc.stance_ticks
    ref = []
    state = osc
    for _ in range(cycle):
        ref.append(drive_value(state))
        state = advance_phase(state)
    ref = np.array(ref)

    trace = latents[:, d] - latents[:, d].mean()
    n = len(trace)
    tiled = np.tile(ref, n // cycle + 2)
    best = (0.0, 0, 1.0)  # (correlation, shift, scale)
    denom = float(np.sum(ref**2)) * (n / cycle)
    for shift in range(cycle):
        seg = tiled[shift:shift + n]
        corr = float(trace @ seg)
        if abs(corr) > abs(best[0]):
            best = (corr, shift, corr / max(denom, 1e-12))
    _, shift, scale = best

    span = cfg.stride * (cfg.window_len - 1)
    # oscillator ticks already elapsed at trajectory tick k:
    #   (k - span + shift) mod cycle
    model.d_drive = d
    model.drive_amplitude = abs(scale)
    # encode scale sign by shifting half a period when negative
    offset = (shift - span) % cycle
    if scale < 0:
        offset = (offset + cycle // 2) % cycle
    # stored as a fraction of the gait cycle: the alignment transfers
    # across cadences as phase, not as a raw tick count
    model.drive_phase_fraction = offset / cycle

    # vote on which diagonal pair swings during positive lobes, using the
    # trajectory's known schedule against the aligned oscillator replay
    from .drive import PAIR_A, PAIR_B

    vote = 0.0
    for t in range(min(2 * cycle, len(trajectory.states))):
        state = oscillator_at_offset(osc, (t + offset) % cycle)
        if state.substep == 0:
            continue  # hold or crossing tick, no pair information
        sign = 1.0 if state.half_cycles % 2 == 0 else -1.0
        c = trajectory.states[t].contact
        if c[1] and c[2] and not (c[0] or c[3]):
            vote += sign   # pair A (LF+RH) airborne
        elif c[0] and c[3] and not (c[1] or c[2]):
            vote -= sign   # pair B (RF+LH) airborne
    model.drive_positive_pair = PAIR_A if vote >= 0 else PAIR_B
    return model


def oscillator_at_offset(base, ticks: int):
    """Advances a fresh copy of `base` oscillator state by `ticks`."""
    from dataclasses import replace

    from .drive import advance_phase

    state = replace(base, half_cycles=0, substep=0, hold_count=0)
    for _ in range(ticks):
        state = advance_phase(state)
    return state


# ---------------------------------------------------------------------------
# Latent-structure evaluation


def stance_class(contact_row) -> int:
    """0 full support, 1 LF/RH airborne, 2 RF/LH airborne, 3 anything else."""
    c = np.asarray(contact_row) > 0.5
    if c.all():
        return 0
    if not c[0] and c[1] and c[2] and not c[3]:
        return 1
    if c[0] and not c[1] and not c[2] and c[3]:
        return 2
    return 3


def knn_stance_accuracy(model: VaeModel, data: TrainingData, ref_rows,
                        eval_rows, k: int = 5, max_ref: int = 2000,
                        seed: int = 0) -> float:
    """k-nearest-neighbour stance classification of held-out latent means.

    Reference latents come from `ref_rows` (subsampled to `max_ref`);
    each eval latent is labelled by majority vote among its k nearest
    reference latents and scored against the true stance.
    """
    rng = np.random.default_rng(seed)
    ref_rows = np.asarray(ref_rows)
    if len(ref_rows) > max_ref:
        ref_rows = rng.choice(ref_rows, size=max_ref, replace=False)
    wins_r, _, cts_r, _ = data.batch(ref_rows)
    wins_e, _, cts_e, _ = data.batch(np.asarray(eval_rows))
    z_ref = encode(model, wins_r, mode="mean").mean
    z_eval = encode(model, wins_e, mode="mean").mean
    y_ref = np.array([stance_class(c) for c in cts_r[:, :4]])
    y_eval = np.array([stance_class(c) for c in cts_e[:, :4]])
    correct = 0
    for i in range(len(z_eval)):
        d2 = np.sum((z_ref - z_eval[i]) ** 2, axis=1)
        votes = y_ref[np.argpartition(d2, k)[:k]]
        counts = np.bincount(votes, minlength=4)
        correct += int(counts.argmax() == y_eval[i])
    return correct / len(z_eval)
