"""The auxiliary frequency-prediction task end to end.

Online encoders feed a two-headed predictor (real and imaginary parts of the
half spectrum, flattened bin-major).  Bootstrap targets come from frozen
target copies via the one-step spectrum recursion; the three-term loss keeps
the lowest and highest bins raw and projects the middle bins before
comparison.  Gradient routing: auxiliary gradients never touch target
parameters, and RL losses consume representations as plain arrays, so they
never touch the online encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dtft import DtftConfig, DtftField, GammaDiagonal
from .mdp import TabularMdp
from .nn import autodiff as ad
from .nn.autodiff import ParamTree, Tensor, backward, zero_grad
from .nn.layers import LayerSpec, forward, forward_data, init_params, stack_out_width
from .nn.optim import Adam, ema_update

COSINE_EPS = 1e-8
# Network roles that have target copies; projection2 stays online-only.
TARGET_ROLES = ("encoder_s", "encoder_sa", "predictor_trunk", "predictor_re",
                "predictor_im", "projection")


@dataclass(frozen=True)
class FreqlossConfig:
    """Split of stored bins into raw low, projected middle, raw high bands.

    distance "one_minus_cosine" compares the middle band after projection;
    the "squared_error" profile compares every band raw, so its minimiser is
    the exact spectrum (used by the tabular convergence harness).
    """

    k_lo: int = 8
    k_hi: int = 8
    distance: str = "one_minus_cosine"
    w_lo: float = 1.0
    w_mid: float = 1.0
    w_hi: float = 1.0

    def __post_init__(self):
        if self.distance not in ("one_minus_cosine", "squared_error"):
            raise ValueError(f"unknown distance {self.distance!r}")
        if min(self.k_lo, self.k_hi) < 0 or min(self.w_lo, self.w_mid, self.w_hi) <= 0:
            raise ValueError("band sizes must be non-negative and weights positive")


@dataclass(frozen=True)
class NetConfig:
    state_dim: int
    action_dim: int
    n_freq: int = 128
    encoder_blocks: int = 4
    encoder_growth: int = 16
    encoder_activation: str = "swish"
    encoder_norm: bool = True
    predictor_hidden: int = 128
    proj_hidden: int = 128
    proj_dim: int = 64
    k_lo: int = 8
    k_hi: int = 8
    head_init_scale: float = 1.0
    proj2_identity_init: bool = False
    linear_tabular: bool = False   # empty encoder/trunk stacks: linear predictor harness

    @property
    def n_bins(self) -> int:
        return self.n_freq // 2 + 1

    @property
    def mid_bins(self) -> int:
        mid = self.n_bins - self.k_lo - self.k_hi
        if mid < 1:
            raise ValueError("k_lo + k_hi must leave at least one middle bin")
        return mid


class SpfNetworks:
    """Online and target parameter trees plus the layer stacks they share."""

    def __init__(self, cfg: NetConfig, rng: np.random.Generator):
        self.cfg = cfg
        act = cfg.encoder_activation
        if cfg.linear_tabular:
            enc_s: tuple[LayerSpec, ...] = ()
            enc_sa: tuple[LayerSpec, ...] = ()
            trunk: tuple[LayerSpec, ...] = ()
        else:
            block = LayerSpec("densenet_block", cfg.encoder_growth, act, norm=cfg.encoder_norm)
            enc_s = (block,) * cfg.encoder_blocks
            enc_sa = (block,) * cfg.encoder_blocks
            trunk = (LayerSpec("dense", cfg.predictor_hidden, "relu"),)
        self.rep_dim = stack_out_width(enc_s, cfg.state_dim)
        self.joint_dim = stack_out_width(enc_sa, self.rep_dim + cfg.action_dim)
        trunk_out = stack_out_width(trunk, self.joint_dim)
        out_width = cfg.n_bins * cfg.state_dim
        head = (LayerSpec("dense", out_width),)
        mid_width = cfg.mid_bins * cfg.state_dim
        projection = (
            LayerSpec("dense", cfg.proj_hidden, "relu"),
            LayerSpec("dense", cfg.proj_dim),
        )
        projection2 = (
            LayerSpec("dense", 2 * cfg.proj_dim, "relu"),
            LayerSpec("dense", cfg.proj_dim),
        )
        self.stacks = {
            "encoder_s": enc_s,
            "encoder_sa": enc_sa,
            "predictor_trunk": trunk,
            "predictor_re": head,
            "predictor_im": head,
            "projection": projection,
            "projection2": projection2,
        }
        online = ParamTree()
        online.update(init_params(enc_s, cfg.state_dim, "encoder_s", rng))
        online.update(init_params(enc_sa, self.rep_dim + cfg.action_dim, "encoder_sa", rng))
        online.update(init_params(trunk, self.joint_dim, "predictor_trunk", rng))
        online.update(init_params(head, trunk_out, "predictor_re", rng,
                                  weight_scale=cfg.head_init_scale))
        online.update(init_params(head, trunk_out, "predictor_im", rng,
                                  weight_scale=cfg.head_init_scale))
        online.update(init_params(projection, mid_width, "projection", rng))
        online.update(init_params(projection2, cfg.proj_dim, "projection2", rng))
        if cfg.proj2_identity_init:
            eye = np.eye(cfg.proj_dim)
            online["projection2/layer0/weight"].data[...] = np.concatenate([eye, -eye], axis=1)
            online["projection2/layer1/weight"].data[...] = np.concatenate([eye, -eye], axis=0)
        self.online = online
        self.target = ParamTree(
            {k: v for k, v in online.items() if not k.startswith("projection2/")}
        ).copy_values(requires_grad=False)

    def params(self, which: str) -> ParamTree:
        if which == "online":
            return self.online
        if which == "target":
            return self.target
        raise ValueError(f"which must be 'online' or 'target', got {which!r}")

    def sync_targets(self, tau: float) -> None:
        online_subset = ParamTree({k: self.online[k] for k in self.target})
        ema_update(online_subset, self.target, tau)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"nets/online/{k}": p.data for k, p in self.online.items()}
        out.update({f"nets/target/{k}": p.data for k, p in self.target.items()})
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, p in self.online.items():
            p.data[...] = arrays[f"nets/online/{k}"]
        for k, p in self.target.items():
            p.data[...] = arrays[f"nets/target/{k}"]


def predict_dtft(nets: SpfNetworks, which: str, states: np.ndarray,
                 actions: np.ndarray) -> tuple[Tensor, Tensor]:
    """Half-spectrum prediction, flattened bin-major: column = bin * D + dim."""
    params = nets.params(which)
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    if states.shape[1] != nets.cfg.state_dim or actions.shape[1] != nets.cfg.action_dim:
        raise ValueError(
            f"expected state dim {nets.cfg.state_dim} and action dim {nets.cfg.action_dim}, "
            f"got {states.shape[1]} and {actions.shape[1]}"
        )
    rep = forward(nets.stacks["encoder_s"], params, Tensor(states), "encoder_s")
    joint_in = ad.concat([rep, Tensor(actions)], axis=1)
    joint = forward(nets.stacks["encoder_sa"], params, joint_in, "encoder_sa")
    trunk = forward(nets.stacks["predictor_trunk"], params, joint, "predictor_trunk")
    re = forward(nets.stacks["predictor_re"], params, trunk, "predictor_re")
    im = forward(nets.stacks["predictor_im"], params, trunk, "predictor_im")
    return re, im


def representation(nets: SpfNetworks, states: np.ndarray) -> np.ndarray:
    """Detached state representation (plain array; gradients cannot reach the encoder)."""
    return forward_data(nets.stacks["encoder_s"], nets.online, states, "encoder_s")


def joint_representation(nets: SpfNetworks, reps: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Detached joint (state, action) representation."""
    reps = np.atleast_2d(np.asarray(reps, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    joint_in = np.concatenate([reps, actions], axis=1)
    return forward_data(nets.stacks["encoder_sa"], nets.online, joint_in, "encoder_sa")


def gamma_bands(nets: SpfNetworks, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary parts of the per-bin discount factors, expanded to
    the flattened bin-major layout."""
    cfg = DtftConfig(n_freq=nets.cfg.n_freq, dim=nets.cfg.state_dim, gamma=gamma)
    diag = GammaDiagonal.from_config(cfg)
    return (
        np.repeat(diag.real, nets.cfg.state_dim),
        np.repeat(diag.imag, nets.cfg.state_dim),
    )


def build_td_target(
    nets: SpfNetworks,
    next_states: np.ndarray,
    policy_actions: np.ndarray,
    gamma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Bootstrap targets from the target networks; returned as plain arrays,
    so no gradient can flow into them.

    real part: Stilde + g_re * F_re - g_im * F_im
    imag part:          g_im * F_re + g_re * F_im
    with every row block of Stilde equal to the raw observed next state.
    """
    next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
    params = nets.target
    rep = forward_data(nets.stacks["encoder_s"], params, next_states, "encoder_s")
    joint = forward_data(
        nets.stacks["encoder_sa"], params,
        np.concatenate([rep, np.atleast_2d(policy_actions)], axis=1), "encoder_sa",
    )
    trunk = forward_data(nets.stacks["predictor_trunk"], params, joint, "predictor_trunk")
    re_hat = forward_data(nets.stacks["predictor_re"], params, trunk, "predictor_re")
    im_hat = forward_data(nets.stacks["predictor_im"], params, trunk, "predictor_im")
    g_re, g_im = gamma_bands(nets, gamma)
    stilde = np.tile(next_states, (1, nets.cfg.n_bins))
    target_re = stilde + g_re * re_hat - g_im * im_hat
    target_im = g_im * re_hat + g_re * im_hat
    return target_re, target_im


def _cosine_distance(x: Tensor, y: Tensor) -> Tensor:
    # The tiny bias inside the square roots keeps the norm gradient finite at
    # exactly-zero vectors (e.g. imaginary parts at omega = 0 or pi).
    dot = ad.sum_(x * y, axis=1, keepdims=True)
    nx = ad.sqrt(ad.sum_(x * x, axis=1, keepdims=True) + COSINE_EPS**2)
    ny = ad.sqrt(ad.sum_(y * y, axis=1, keepdims=True) + COSINE_EPS**2)
    return ad.mean(1.0 - dot / (nx * ny + COSINE_EPS))


def _squared_distance(x: Tensor, y: Tensor) -> Tensor:
    diff = x - y
    return ad.mean(ad.sum_(diff * diff, axis=1))


def freqloss(
    pred_re: Tensor,
    pred_im: Tensor,
    target_re: np.ndarray,
    target_im: np.ndarray,
    nets: SpfNetworks,
    cfg: FreqlossConfig,
) -> tuple[Tensor, dict]:
    """Three-band loss applied separately to the real and imaginary stacks.

    Low and high bands are compared raw.  Under the cosine distance the
    middle band is compared after projection, with the extra nonlinear map
    applied to the online side only; the squared-error profile compares the
    middle band raw as well.
    """
    d = nets.cfg.state_dim
    n_bins = nets.cfg.n_bins
    if cfg.k_lo + cfg.k_hi >= n_bins:
        raise ValueError("k_lo + k_hi must be smaller than the stored bin count")
    lo_end = cfg.k_lo * d
    hi_start = (n_bins - cfg.k_hi) * d
    dist = _cosine_distance if cfg.distance == "one_minus_cosine" else _squared_distance
    parts = {"raw_lo_term": 0.0, "mid_term": 0.0, "raw_hi_term": 0.0}
    total: Tensor | None = None
    for pred, target in ((pred_re, target_re), (pred_im, target_im)):
        target_t = Tensor(target)
        zero = Tensor(np.zeros(()))
        lo = zero if cfg.k_lo == 0 else dist(
            ad.slice_cols(pred, 0, lo_end), ad.slice_cols(target_t, 0, lo_end)
        )
        hi = zero if cfg.k_hi == 0 else dist(
            ad.slice_cols(pred, hi_start, n_bins * d),
            ad.slice_cols(target_t, hi_start, n_bins * d),
        )
        mid_pred = ad.slice_cols(pred, lo_end, hi_start)
        mid_target = ad.slice_cols(target_t, lo_end, hi_start)
        if cfg.distance == "one_minus_cosine":
            proj_pred = forward(nets.stacks["projection"], nets.online, mid_pred, "projection")
            proj_pred = forward(nets.stacks["projection2"], nets.online, proj_pred, "projection2")
            proj_target = Tensor(
                forward_data(nets.stacks["projection"], nets.target, mid_target.data,
                             "projection")
            )
            mid = dist(proj_pred, proj_target)
        else:
            mid = dist(mid_pred, mid_target)
        term = cfg.w_lo * lo + cfg.w_mid * mid + cfg.w_hi * hi
        total = term if total is None else total + term
        parts["raw_lo_term"] += lo.item()
        parts["mid_term"] += mid.item()
        parts["raw_hi_term"] += hi.item()
    return total, parts


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int,
                 rng: np.random.Generator):
        self.capacity = capacity
        self.rng = rng
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.rewards = np.zeros(capacity)
        self.state_index = np.full(capacity, -1, dtype=np.int64)
        self.action_index = np.full(capacity, -1, dtype=np.int64)
        self.next_state_index = np.full(capacity, -1, dtype=np.int64)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, action, next_state, reward, info=None) -> None:
        i = self.ptr
        self.states[i] = state
        self.actions[i] = action
        self.next_states[i] = next_state
        self.rewards[i] = reward
        info = info or {}
        self.state_index[i] = info.get("state_index", -1)
        self.action_index[i] = info.get("action_index", -1)
        self.next_state_index[i] = info.get("next_state_index", -1)
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> dict:
        if self.size < 1:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(self.size, size=batch_size)
        return {
            "state": self.states[idx].copy(),
            "action": self.actions[idx].copy(),
            "next_state": self.next_states[idx].copy(),
            "reward": self.rewards[idx].copy(),
            "state_index": self.state_index[idx].copy(),
            "action_index": self.action_index[idx].copy(),
            "next_state_index": self.next_state_index[idx].copy(),
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "buffer/states": self.states,
            "buffer/actions": self.actions,
            "buffer/next_states": self.next_states,
            "buffer/rewards": self.rewards,
            "buffer/state_index": self.state_index,
            "buffer/action_index": self.action_index,
            "buffer/next_state_index": self.next_state_index,
            "buffer/meta": np.array([self.ptr, self.size], dtype=np.int64),
        }

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.states[...] = arrays["buffer/states"]
        self.actions[...] = arrays["buffer/actions"]
        self.next_states[...] = arrays["buffer/next_states"]
        self.rewards[...] = arrays["buffer/rewards"]
        self.state_index[...] = arrays["buffer/state_index"]
        self.action_index[...] = arrays["buffer/action_index"]
        self.next_state_index[...] = arrays["buffer/next_state_index"]
        self.ptr, self.size = (int(v) for v in arrays["buffer/meta"])


def auxiliary_step(
    nets: SpfNetworks,
    buffer: ReplayBuffer,
    batch_size: int,
    opt: Adam,
    loss_cfg: FreqlossConfig,
    policy_actions_fn,
    gamma: float,
) -> dict | None:
    """One gradient step on the prediction loss for the online parameters.

    Returns None (skipped) while the buffer holds fewer than batch_size
    transitions.  Target parameters are never touched here.
    """
    if len(buffer) < batch_size:
        return None
    batch = buffer.sample(batch_size)
    policy_actions = policy_actions_fn(batch)
    target_re, target_im = build_td_target(nets, batch["next_state"], policy_actions, gamma)
    pred_re, pred_im = predict_dtft(nets, "online", batch["state"], batch["action"])
    loss, parts = freqloss(pred_re, pred_im, target_re, target_im, nets, loss_cfg)
    zero_grad(nets.online)
    backward(loss, nets.online)
    opt.step()
    return {"loss": loss.item(), **parts}


def target_sync(nets: SpfNetworks, tau: float, step: int, interval: int) -> bool:
    """EMA-update the target trees when the step counter hits the interval."""
    if interval < 1:
        raise ValueError("interval must be positive")
    if step % interval == 0:
        nets.sync_targets(tau)
        return True
    return False


def one_hot(indices: np.ndarray, width: int) -> np.ndarray:
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    out = np.zeros((indices.shape[0], width))
    out[np.arange(indices.shape[0]), indices] = 1.0
    return out


def predict_field_tabular(nets: SpfNetworks, mdp: TabularMdp, gamma: float) -> DtftField:
    """Assemble the predicted spectra of every (state, action) pair of a
    tabular MDP into a field (actions fed one-hot)."""
    bins = nets.cfg.n_bins
    d = nets.cfg.state_dim
    values = np.empty((mdp.n_states, mdp.n_actions, bins, d), dtype=np.complex128)
    for a in range(mdp.n_actions):
        states = mdp.embedding
        actions = one_hot(np.full(mdp.n_states, a), mdp.n_actions)
        re, im = predict_dtft(nets, "online", states, actions)
        values[:, a] = (re.data + 1j * im.data).reshape(mdp.n_states, bins, d)
    cfg = DtftConfig(n_freq=nets.cfg.n_freq, dim=d, gamma=gamma, half_spectrum=True)
    return DtftField(values=values, config=cfg)
