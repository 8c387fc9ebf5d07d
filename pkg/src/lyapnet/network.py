"""Feed-forward Lyapunov networks with closed-form derivatives.

Three architectures share one implementation:

``DenseNet1``
    one hidden layer over the full state.
``SublayerNet``
    one hidden layer split into sublayers, sublayer i reading only block z_i.
``TransformNet``
    an identity-activation layer y2 = W2 x + b2 of width n*d_max feeding n
    sublayers, sublayer i reading y2[i*d_max:(i+1)*d_max].

All parameters live in one flat float64 vector ``theta``; the named arrays
(``W2``, ``b2``, ``w[i]``, ``b[i]``, ``a[i]``, ``c``) are views into it. Layout:
layer-2 weights (row-major), layer-2 biases, then per sublayer its weights
(M x d_i, row-major), biases and output weights, then the output constant.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .small_gain import partition_offsets


def _softplus(z):
    return np.logaddexp(0.0, z)


def _softplus_d1(z):
    return expit(z)


def _softplus_d2(z):
    s = expit(z)
    return s * (1.0 - s)


def _tanh_d1(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _tanh_d2(z):
    t = np.tanh(z)
    return -2.0 * t * (1.0 - t * t)


ACTIVATIONS = {
    "softplus": (_softplus, _softplus_d1, _softplus_d2),
    "tanh": (np.tanh, _tanh_d1, _tanh_d2),
    "identity": (lambda z: z, np.ones_like, np.zeros_like),
}


class LyapunovNetwork:
    arch = "base"

    def __init__(
        self,
        n: int,
        block_widths: Sequence[int],
        M: int,
        activation: str = "softplus",
        transform_width: int = 0,
        seed=0,
    ):
        if activation not in ("softplus", "tanh"):
            raise ValueError("hidden activation must be smooth and non-polynomial (softplus or tanh)")
        if M < 1:
            raise ValueError("sublayer width must be positive")
        self.n = int(n)
        self.M = int(M)
        self.activation = activation
        self.block_widths = tuple(int(d) for d in block_widths)
        self.transform_width = int(transform_width)
        in_dim = self.transform_width or self.n
        if sum(self.block_widths) != in_dim:
            raise ValueError("sublayer inputs must tile the layer below")
        self.block_offsets = partition_offsets(self.block_widths)
        self.sigma, self.dsigma, self.d2sigma = ACTIVATIONS[activation]

        nt = self.transform_width
        sizes = [nt * self.n, nt]
        for d in self.block_widths:
            sizes += [self.M * d, self.M, self.M]
        sizes.append(1)
        self.P = int(sum(sizes))
        self._theta = np.zeros(self.P)
        cuts = np.cumsum([0] + sizes)
        views = [self._theta[lo:hi] for lo, hi in zip(cuts[:-1], cuts[1:])]
        self._slices = [slice(lo, hi) for lo, hi in zip(cuts[:-1], cuts[1:])]
        self.W2 = views[0].reshape(nt, self.n)
        self.b2 = views[1]
        self.w, self.b, self.a = [], [], []
        for i, d in enumerate(self.block_widths):
            self.w.append(views[2 + 3 * i].reshape(self.M, d))
            self.b.append(views[3 + 3 * i])
            self.a.append(views[4 + 3 * i])
        self._c = views[-1]
        self.init_params(seed)

    # -- parameters -------------------------------------------------------

    @property
    def theta(self) -> np.ndarray:
        return self._theta

    @theta.setter
    def theta(self, value):
        value = np.asarray(value, dtype=float)
        if value.shape != (self.P,):
            raise ValueError(f"expected {self.P} parameters, got shape {value.shape}")
        self._theta[:] = value

    @property
    def c(self) -> float:
        return float(self._c[0])

    @c.setter
    def c(self, value):
        self._c[0] = value

    def init_params(self, seed=0) -> None:
        rng = np.random.default_rng(seed)
        self._theta[:] = 0.0
        if self.transform_width:
            lim = 1.0 / np.sqrt(self.n)
            self.W2[:] = rng.uniform(-lim, lim, self.W2.shape)
        n_hidden = self.M * len(self.block_widths)
        for w, a, d in zip(self.w, self.a, self.block_widths):
            w[:] = rng.uniform(-1.0 / np.sqrt(d), 1.0 / np.sqrt(d), w.shape)
            a[:] = rng.uniform(-1.0 / np.sqrt(n_hidden), 1.0 / np.sqrt(n_hidden), a.shape)

    def copy(self) -> "LyapunovNetwork":
        other = type(self)(**self.config())
        other.theta = self.theta
        return other

    def config(self) -> dict:
        raise NotImplementedError

    # -- evaluation -------------------------------------------------------

    def _inputs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n:
            raise ValueError(f"expected inputs of dimension {self.n}, got {X.shape[1]}")
        U = X @ self.W2.T + self.b2 if self.transform_width else X
        return X, U

    def _preacts(self, U):
        return np.concatenate(
            [U[:, o : o + d] @ w.T + b for o, d, w, b in zip(self.block_offsets, self.block_widths, self.w, self.b)],
            axis=1,
        )

    def _a_all(self):
        return np.concatenate(self.a)

    def forward(self, x):
        X, U = self._inputs(x)
        out = self.sigma(self._preacts(U)) @ self._a_all() + self.c
        return float(out[0]) if np.ndim(x) == 1 else out

    def _grad_u(self, U):
        S1 = self.dsigma(self._preacts(U)) * self._a_all()
        M = self.M
        return np.concatenate(
            [S1[:, i * M : (i + 1) * M] @ w for i, w in enumerate(self.w)],
            axis=1,
        )

    def grad_x(self, x):
        X, U = self._inputs(x)
        g = self._grad_u(U)
        if self.transform_width:
            g = g @ self.W2
        return g[0] if np.ndim(x) == 1 else g

    def directional(self, x, f):
        """DW(x) . f for matching batches of states and vectors."""
        out = np.sum(np.atleast_2d(self.grad_x(x)) * np.atleast_2d(f), axis=1)
        return float(out[0]) if np.ndim(x) == 1 else out

    # aliases used by the verification routines
    value = forward
    gradient = grad_x

    # -- parameter derivatives -------------------------------------------

    def param_grad(self, X, F=None, u=1.0, v=0.0, reduce: bool = True) -> np.ndarray:
        """Parameter gradient of u_b W(x_b) + v_b DW(x_b).f_b.

        ``u`` and ``v`` are scalars or per-sample weights. Returns the sum over
        the batch, or the per-sample rows (B, P) when ``reduce`` is false.
        """
        X, U = self._inputs(X)
        B = X.shape[0]
        u = np.broadcast_to(np.asarray(u, dtype=float), (B,))[:, None]
        v = np.broadcast_to(np.asarray(v, dtype=float), (B,))[:, None]
        with_dir = F is not None and np.any(v != 0)
        if with_dir:
            F = np.atleast_2d(np.asarray(F, dtype=float))
            Vin = F @ self.W2.T if self.transform_width else F
        G = np.zeros((B, self.P))
        E_parts, H_parts = [], []
        for i, (o, d) in enumerate(zip(self.block_offsets, self.block_widths)):
            w, a = self.w[i], self.a[i]
            Ui = U[:, o : o + d]
            Z = Ui @ w.T + self.b[i]
            S, S1 = self.sigma(Z), self.dsigma(Z)
            coef_u = u * a * S1
            sl_w, sl_b, sl_a = self._slices[2 + 3 * i : 5 + 3 * i]
            if with_dir:
                Vi = Vin[:, o : o + d]
                Q = Vi @ w.T
                S2 = self.d2sigma(Z)
                coef_z = coef_u + v * a * S2 * Q
                G[:, sl_a] = u * S + v * S1 * Q
                G[:, sl_b] = coef_z
                dW = coef_z[:, :, None] * Ui[:, None, :] + (v * a * S1)[:, :, None] * Vi[:, None, :]
                H_parts.append((a * S2 * Q) @ w)
            else:
                G[:, sl_a] = u * S
                G[:, sl_b] = coef_u
                dW = coef_u[:, :, None] * Ui[:, None, :]
            G[:, sl_w] = dW.reshape(B, -1)
            E_parts.append((a * S1) @ w)
        if self.transform_width:
            E = np.concatenate(E_parts, axis=1)
            dU = u * E
            if with_dir:
                dU = dU + v * np.concatenate(H_parts, axis=1)
            dW2 = dU[:, :, None] * X[:, None, :]
            if with_dir:
                dW2 += (v * E)[:, :, None] * F[:, None, :]
            G[:, self._slices[0]] = dW2.reshape(B, -1)
            G[:, self._slices[1]] = dU
        G[:, -1] = u[:, 0]
        return G.sum(axis=0) if reduce else G

    def grad_theta_of_scalar(self, x, upstream: tuple[float, float], f=None) -> np.ndarray:
        """Gradient of u*W(x) + v*(DW(x).f) for a single state ``x``."""
        u, v = upstream
        if v != 0 and f is None:
            raise ValueError("a direction f is needed when v != 0")
        return self.param_grad(np.asarray(x, dtype=float)[None, :], None if f is None else np.asarray(f)[None, :], u, v)

    # -- bookkeeping ------------------------------------------------------

    def count_neurons(self) -> tuple[int, dict]:
        layers = {"layer1": self.M * len(self.block_widths)}
        if self.transform_width:
            layers["layer2"] = self.transform_width
        return sum(layers.values()), layers


class DenseNet1(LyapunovNetwork):
    arch = "dense"

    def __init__(self, n: int, width: int, activation: str = "softplus", seed=0):
        super().__init__(n, (n,), width, activation, 0, seed)

    def config(self) -> dict:
        return {"n": self.n, "width": self.M, "activation": self.activation}


class SublayerNet(LyapunovNetwork):
    arch = "sublayer"

    def __init__(self, partition: Sequence[int], M: int, activation: str = "softplus", seed=0):
        self.partition = tuple(int(d) for d in partition)
        super().__init__(sum(self.partition), self.partition, M, activation, 0, seed)

    def config(self) -> dict:
        return {"partition": list(self.partition), "M": self.M, "activation": self.activation}

    def to_dense(self) -> DenseNet1:
        """The same function as a one-layer dense net with block-sparse weights."""
        dense = DenseNet1(self.n, self.M * len(self.partition), self.activation)
        dense.theta = np.zeros(dense.P)
        rows = []
        for o, d, w in zip(self.block_offsets, self.block_widths, self.w):
            full = np.zeros((self.M, self.n))
            full[:, o : o + d] = w
            rows.append(full)
        dense.w[0][:] = np.concatenate(rows)
        dense.b[0][:] = np.concatenate(self.b)
        dense.a[0][:] = self._a_all()
        dense.c = self.c
        return dense


class TransformNet(LyapunovNetwork):
    arch = "transform"

    def __init__(self, n: int, d_max: int, M: int, activation: str = "softplus", seed=0):
        self.d_max = int(d_max)
        super().__init__(n, (self.d_max,) * n, M, activation, n * self.d_max, seed)

    def config(self) -> dict:
        return {"n": self.n, "d_max": self.d_max, "M": self.M, "activation": self.activation}


def assign_transform(net: TransformNet, matrix: np.ndarray, partition: Sequence[int]) -> None:
    """Set the identity layer so sublayer i reads (x~_i, 0, ..., 0), x~ = matrix @ x.

    Sublayers beyond ``len(partition)`` get zero inputs.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (net.n, net.n):
        raise ValueError("transform must be n x n")
    if sum(partition) > net.n:
        raise ValueError("partition exceeds the state dimension")
    if any(d > net.d_max for d in partition):
        raise ValueError(f"subsystem dimension exceeds d_max={net.d_max}")
    net.W2[:] = 0.0
    net.b2[:] = 0.0
    for i, (p, d) in enumerate(zip(partition_offsets(partition), partition)):
        net.W2[i * net.d_max : i * net.d_max + d] = matrix[p : p + d]


def copy_upper(src: SublayerNet, dst: TransformNet) -> None:
    """Copy sublayer parameters of an F1 net into a transform net (zero-padded)."""
    if len(src.partition) > dst.n or src.M != dst.M:
        raise ValueError("incompatible networks")
    for i in range(dst.n):
        dst.w[i][:] = 0.0
        dst.b[i][:] = 0.0
        dst.a[i][:] = 0.0
    for i, d in enumerate(src.partition):
        dst.w[i][:, :d] = src.w[i]
        dst.b[i][:] = src.b[i]
        dst.a[i][:] = src.a[i]
    dst.c = src.c


def count_neurons(net: LyapunovNetwork) -> tuple[int, dict]:
    return net.count_neurons()


_ARCHES = {"dense": DenseNet1, "sublayer": SublayerNet, "transform": TransformNet}


def build_network(arch: str, **kwargs) -> LyapunovNetwork:
    try:
        cls = _ARCHES[arch]
    except KeyError:
        raise ValueError(f"unknown architecture {arch!r}") from None
    return cls(**kwargs)


def save_checkpoint(net: LyapunovNetwork, path) -> tuple[Path, Path]:
    """Write theta as little-endian float64 to ``<path>.bin`` plus a JSON sidecar."""
    path = Path(path)
    bin_path, meta_path = path.with_suffix(".bin"), path.with_suffix(".json")
    bin_path.write_bytes(net.theta.astype("<f8").tobytes())
    meta = {
        "arch": net.arch,
        "config": net.config(),
        "P": net.P,
        "dtype": "float64-le",
        "layout": ["layer2.W (row-major)", "layer2.b", "per sublayer: w (M x d, row-major), b, a", "c"],
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return bin_path, meta_path


def load_checkpoint(path) -> LyapunovNetwork:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    net = build_network(meta["arch"], **meta["config"])
    theta = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    net.theta = theta.astype(float)
    return net
