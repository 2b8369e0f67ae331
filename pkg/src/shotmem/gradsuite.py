"""Finite-difference check of every differentiable op and of the composed
selector -> conditioner -> denoiser training loss on a shrunken config."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, backward, finite_diff, ops, rel_error, zero_grads
from .config import Config
from .model import context_from_selection, generation_loss, init_model, scores
from .selection import choose_frames

TOLERANCE = 1e-6
EPS = 1e-5

# D=8, one block, two heads, one-frame context
SMALL = Config(model_dim=8, blocks=1, heads=2, num_queries=2, k_sel=2, kernels=(2, 4), caption_tokens=6)


def _leaf(rng, shape, scale=1.0):
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True)


def _op_error(fn, leaves, rng) -> float:
    w = rng.normal(size=fn(*leaves).shape)

    def loss(*_):
        return ops.mean(ops.mul(fn(*leaves), w))

    zero_grads(leaves)
    backward(loss())
    errs = [rel_error(t.grad, finite_diff(loss, t, EPS)) for t in leaves]
    zero_grads(leaves)
    return max(errs)


def op_cases(rng) -> dict[str, tuple]:
    L = lambda *s: _leaf(rng, s)  # noqa: E731
    mask = rng.random((2, 1, 5)) < 0.6
    mask[..., 0] = True
    idx = np.array([2, 0, 2])
    rows = rng.integers(0, 4, size=(3, 2))
    return {
        "add": (ops.add, [L(2, 3, 4), L(3, 1)]),
        "sub": (ops.sub, [L(2, 3, 4), L(4)]),
        "mul": (ops.mul, [L(2, 3, 4), L(3, 4)]),
        "scale": (lambda a: ops.scale(a, -1.7), [L(3, 4)]),
        "tanh": (ops.tanh, [L(3, 4)]),
        "matmul": (ops.matmul, [L(2, 3, 4), L(4, 5)]),
        "linear": (ops.linear, [L(2, 3, 4), L(4, 5), L(5)]),
        "softmax": (ops.softmax, [L(3, 6)]),
        "attention": (lambda q, k, v: ops.attention(q, k, v, mask), [L(2, 3, 4), L(2, 5, 4), L(2, 5, 3)]),
        "layer_norm": (ops.layer_norm, [L(3, 6)]),
        "mean": (lambda x: ops.mean(x, axis=(1, 2)), [L(2, 3, 4, 2)]),
        "sum": (ops.sum, [L(3, 4)]),
        "avg_pool2d": (lambda x: ops.avg_pool2d(x, 2), [L(2, 4, 4, 3)]),
        "patchify": (lambda x: ops.patchify(x, 2), [L(2, 4, 4, 3)]),
        "mse": (ops.mse, [L(3, 4), L(3, 4)]),
        "reshape": (lambda x: ops.reshape(x, (4, 3)), [L(3, 4)]),
        "transpose": (lambda x: ops.transpose(x, (1, 0, 2)), [L(2, 3, 4)]),
        "concat": (lambda a, b: ops.concat([a, b], axis=1), [L(2, 3), L(2, 2)]),
        "take": (lambda x: ops.take(x, idx, axis=0), [L(3, 4)]),
        "gather_rows": (lambda x: ops.gather_rows(x, rows), [L(3, 4, 2)]),
    }


def composed_loss_errors(seed: int = 0, cfg: Config = SMALL) -> dict[str, float]:
    """Relative error per trainable parameter of L_shot + lambda * L_sel."""
    rng = np.random.default_rng([seed, 0x6AD])
    p = init_model(cfg, seed)
    # a trained model has non-zero modulation and head; zero init would make
    # most denoiser gradients vanish and the check vacuous
    for name, t in p.trainable():
        if not t.data.any():
            t.data[...] = rng.normal(scale=0.3, size=t.shape)
    b, f = 2, 2 * cfg.latent_frames
    mem = rng.normal(size=(b, f, cfg.n_spatial, cfg.latent_dim))
    x0 = rng.normal(size=(b, cfg.latent_frames * cfg.n_spatial, cfg.latent_dim))
    eps = rng.normal(size=x0.shape)
    t = rng.uniform(0.1, 0.9, size=b)
    cap = rng.normal(size=(b, cfg.caption_tokens, cfg.caption_dim))
    cmask = np.arange(cfg.caption_tokens)[None, :] < np.array([[4], [6]])
    y = rng.uniform(-1, 1, size=(b, f))
    # the hard top-K choice is a constant of the graph
    chosen = np.stack([choose_frames(s, cfg.k_sel, "learned") for s in scores(mem, cap, cmask, p).S.data])

    def loss(*_):
        sc = scores(mem, cap, cmask, p)
        ctx = context_from_selection(mem, chosen, p, cfg)
        l_shot = generation_loss(x0, eps, t, cap, cmask, ctx, p, cfg)
        return ops.add(l_shot, ops.scale(ops.mse(sc.S, y), cfg.lambda_sel))

    tensors = [t for _, t in p.trainable()]
    zero_grads(tensors)
    backward(loss())
    analytic = {n: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for n, t in p.trainable()}
    zero_grads(tensors)
    return {n: rel_error(analytic[n], finite_diff(loss, t, EPS)) for n, t in p.trainable()}


def run_suite(seed: int = 0) -> dict[str, float]:
    """Relative error per check; op names, then ``model/<param>``."""
    rng = np.random.default_rng([seed, 0x0F5])
    out = {f"op/{name}": _op_error(fn, leaves, rng) for name, (fn, leaves) in op_cases(rng).items()}
    out.update({f"model/{n}": e for n, e in composed_loss_errors(seed).items()})
    return out
