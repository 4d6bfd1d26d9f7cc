"""Dense networks with manual reverse-mode gradients, plus Adam.

Everything is numpy; no autograd.  The policy is a diagonal Gaussian with a
state-independent log-std vector.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)


class Mlp:
    """Tanh MLP with linear output; parameters are (W, b) per layer."""

    def __init__(self, sizes, rng, final_scale=1.0):
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        for i in range(len(sizes) - 1):
            fan_in = sizes[i]
            scale = np.sqrt(2.0 / fan_in)
            if i == len(sizes) - 2:
                scale *= final_scale
            self.weights.append(rng.standard_normal((fan_in, sizes[i + 1]))
                                * scale)
            self.biases.append(np.zeros(sizes[i + 1]))

    @property
    def num_params(self):
        return sum(w.size for w in self.weights) + \
            sum(b.size for b in self.biases)

    def forward(self, x):
        """Batch forward; caches activations for backward."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [x]
        h = x
        n = len(self.weights)
        for i in range(n):
            z = h @ self.weights[i] + self.biases[i]
            h = np.tanh(z) if i < n - 1 else z
            acts.append(h)
        self._acts = acts
        return h

    def backward(self, grad_out):
        """Gradients of sum(out * grad_out) w.r.t. params and input."""
        acts = self._acts
        n = len(self.weights)
        g = np.atleast_2d(np.asarray(grad_out, dtype=float))
        grads_w = [None] * n
        grads_b = [None] * n
        for i in reversed(range(n)):
            if i < n - 1:  # tanh derivative on this layer's output
                g = g * (1.0 - acts[i + 1] ** 2)
            grads_w[i] = acts[i].T @ g
            grads_b[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads_w, grads_b, g

    def get_params(self):
        return [w.copy() for w in self.weights], \
            [b.copy() for b in self.biases]

    def set_params(self, weights, biases):
        self.weights = [w.copy() for w in weights]
        self.biases = [b.copy() for b in biases]

    def flat_params(self):
        return np.concatenate([w.ravel() for w in self.weights]
                              + [b.ravel() for b in self.biases])


class Adam:
    """Adam over a list of parameter arrays (updated in place)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class GaussianPolicy:
    """Diagonal Gaussian over actions; mean from an MLP, global log-std."""

    def __init__(self, obs_dim, act_dim, hidden=(512, 256, 128), rng=None,
                 log_std_init=0.0):
        rng = rng or np.random.default_rng(0)
        self.net = Mlp([obs_dim] + list(hidden) + [act_dim], rng,
                       final_scale=0.01)
        self.log_std = np.full(act_dim, float(log_std_init))
        self.act_dim = act_dim

    def parameters(self):
        return self.net.weights + self.net.biases + [self.log_std]

    def mean(self, obs):
        return self.net.forward(obs)

    def sample(self, obs, rng):
        mu = self.mean(obs)
        std = np.exp(self.log_std)
        a = mu + std * rng.standard_normal(mu.shape)
        return a, self.log_prob_given_mean(mu, a)

    def log_prob_given_mean(self, mu, a):
        std = np.exp(self.log_std)
        z = (a - mu) / std
        return -0.5 * np.sum(z * z + LOG_2PI, axis=-1) - np.sum(self.log_std)

    def log_prob(self, obs, a):
        return self.log_prob_given_mean(self.mean(obs), a)

    def entropy(self):
        """Closed form: sum(log sigma + 0.5 log(2 pi e))."""
        return float(np.sum(self.log_std + 0.5 * (LOG_2PI + 1.0)))

    def kl_against(self, old_mu, old_log_std, mu):
        """KL(old || new) per sample for diagonal Gaussians."""
        var_new = np.exp(2.0 * self.log_std)
        var_old = np.exp(2.0 * old_log_std)
        return np.sum(
            self.log_std - old_log_std
            + (var_old + (mu - old_mu) ** 2) / (2.0 * var_new) - 0.5,
            axis=-1)


class ValueNet:
    def __init__(self, obs_dim, hidden=(512, 256, 128), rng=None):
        rng = rng or np.random.default_rng(1)
        self.net = Mlp([obs_dim] + list(hidden) + [1], rng)

    def parameters(self):
        return self.net.weights + self.net.biases

    def value(self, obs):
        return self.net.forward(obs)[:, 0]


class RunningMeanStd:
    """Streaming mean/std (Welford over batches)."""

    def __init__(self, shape=()):
        self.mean = np.zeros(shape)
        self.var = np.ones(shape)
        self.count = 1e-4

    def update(self, batch):
        batch = np.atleast_2d(np.asarray(batch, dtype=float)) \
            if np.ndim(self.mean) else np.asarray(batch, dtype=float).ravel()
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        b_count = batch.shape[0]
        delta = b_mean - self.mean
        tot = self.count + b_count
        self.mean = self.mean + delta * b_count / tot
        m_a = self.var * self.count
        m_b = b_var * b_count
        self.var = (m_a + m_b + delta ** 2 * self.count * b_count / tot) / tot
        self.count = tot

    def normalize(self, x, clip=10.0):
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8),
                       -clip, clip)

    def scale(self, x, clip=10.0):
        """Divide by the running std only (reward normalization)."""
        return np.clip(x / np.sqrt(self.var + 1e-8), -clip, clip)

    def state_dict(self):
        return {"mean": self.mean, "var": self.var, "count": self.count}

    def load_state_dict(self, d):
        self.mean = np.asarray(d["mean"], dtype=float)
        self.var = np.asarray(d["var"], dtype=float)
        self.count = float(d["count"])
