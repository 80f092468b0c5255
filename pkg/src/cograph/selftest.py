"""Built-in verification battery: gradient checks against central finite
differences, the loss-equivalence oracle, closed-form loss values, and the
structural invariance suites. Exits nonzero on any failure; meant to run
in well under a minute."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .contrastive import info_nce, loss_equivalence_oracle
from .encoders import EncoderSpec, forward_graphs, init_params
from .graphs import Graph, GraphBatch
from .optim import AdamState, adam_step
from .rng import stream

FD_EPS = 1e-5
GRAD_TOL = 1e-4
EXACT_TOL = 1e-10


def _fd(f, buf, eps=FD_EPS):
    grad = np.zeros_like(buf)
    for idx in np.ndindex(buf.shape):
        orig = buf[idx]
        buf[idx] = orig + eps
        fp = f()
        buf[idx] = orig - eps
        fm = f()
        buf[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * eps)
    return grad


def _rel(a, b):
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    gap = np.abs(a - b).max(initial=0.0)
    return gap if scale == 0.0 else gap / scale


def _random_graph(rng, n=6, dim=3):
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.5]
    if not edges:
        edges = [(0, 1)]
    return Graph(n, edges, features=rng.uniform(-1, 1, (n, dim)), graph_label=0)


def _check_encoder_gradients(kind):
    rng = stream(555, "selftest", kind)
    batch = GraphBatch.from_graphs([_random_graph(rng) for _ in range(3)])
    spec = EncoderSpec(kind, input_dim=3, hidden_dim=4, num_layers=2, dropout=0.0)
    params = init_params(spec, stream(555, "init", kind))
    keys = Tensor(rng.uniform(-1, 1, (3, 4)))

    def loss_value():
        return float(info_nce(forward_graphs(params, batch), keys, 0.5).data[0, 0])

    with Tape() as tape:
        loss = info_nce(forward_graphs(params, batch), keys, 0.5)
    backward(loss, tape)
    worst = 0.0
    for name, t in params.named():
        worst = max(worst, _rel(t.grad, _fd(loss_value, t.data)))
    return worst


def _check_invariances(kind):
    rng = stream(556, "selftest", kind)
    g = _random_graph(rng)
    spec = EncoderSpec(kind, input_dim=3, hidden_dim=4, num_layers=2, dropout=0.0)
    params = init_params(spec, stream(556, "init", kind))
    perm = rng.permutation(g.num_nodes)
    inv = np.argsort(perm)
    permuted = Graph(g.num_nodes,
                     np.stack([inv[g.edges[:, 0]], inv[g.edges[:, 1]]], axis=1),
                     features=g.features[perm], graph_label=0)
    a = forward_graphs(params, GraphBatch.from_graphs([g])).data
    b = forward_graphs(params, GraphBatch.from_graphs([permuted])).data
    perm_gap = np.abs(a - b).max()

    others = [_random_graph(stream(557, "selftest", kind, i)) for i in range(3)]
    batched = forward_graphs(params, GraphBatch.from_graphs([g] + others)).data
    batch_gap = np.abs(batched[0] - a[0]).max()
    return max(perm_gap, batch_gap)


def run_selftest(verbose: bool = True) -> int:
    """Execute the battery; returns the number of failed checks."""
    checks: list[tuple[str, bool, str]] = []

    def record(name, ok, detail=""):
        checks.append((name, bool(ok), detail))

    rng = stream(554, "ops")

    # gradient checks for the raw ops through a weighted-sum readout
    x = Tensor(rng.uniform(0.2, 1.0, (4, 4)) * rng.choice([-1.0, 1.0], (4, 4)),
               requires_grad=True)
    w = rng.uniform(-1, 1, (4, 4))
    for name, op in [("relu", ad.relu), ("elu", ad.elu),
                     ("leaky_relu", lambda t: ad.leaky_relu(t, 0.2)),
                     ("exp", ad.exp), ("row_log_softmax", ad.row_log_softmax),
                     ("row_normalize", ad.row_normalize)]:
        with Tape() as tape:
            loss = ad.sum_all(ad.mul(op(x), Tensor(w)))
        backward(loss, tape)

        def f(op=op):
            return float((op(Tensor(x.data)).data * w).sum())

        err = _rel(x.grad, _fd(f, x.data))
        record(f"grad/{name}", err < GRAD_TOL, f"rel err {err:.2e}")

    hp = Tensor(rng.uniform(-1, 1, (5, 3)), requires_grad=True)
    hq = Tensor(rng.uniform(-1, 1, (5, 3)), requires_grad=True)
    with Tape() as tape:
        loss = info_nce(hp, hq, 0.3)
    backward(loss, tape)

    def f_hp():
        return float(info_nce(Tensor(hp.data), Tensor(hq.data), 0.3).data[0, 0])

    err = max(_rel(hp.grad, _fd(f_hp, hp.data)), _rel(hq.grad, _fd(f_hp, hq.data)))
    record("grad/info_nce", err < GRAD_TOL, f"rel err {err:.2e}")

    for kind in ("gcn", "gin", "gat"):
        err = _check_encoder_gradients(kind)
        record(f"grad/{kind}+info_nce", err < GRAD_TOL, f"rel err {err:.2e}")

    # loss oracle equivalence on random instances
    worst = 0.0
    orng = stream(558, "oracle")
    for _ in range(20):
        a = orng.uniform(-1, 1, (8, 4))
        b = orng.uniform(-1, 1, (8, 4))
        worst = max(worst, loss_equivalence_oracle(a, b, 0.5))
    record("loss/equivalence", worst < EXACT_TOL, f"max dev {worst:.2e}")

    # closed-form loss values
    single = info_nce(Tensor([[1.0, 2.0]]), Tensor([[1.0, 2.0]]), 0.5).data[0, 0]
    record("loss/single_item_zero", single == 0.0)
    eye = Tensor(np.eye(2))
    ident = info_nce(eye, eye, 1.0).data[0, 0]
    record("loss/identity_closed_form",
           abs(ident - 2.0 * math.log(1.0 + math.exp(-1.0))) < 1e-12)
    flat = info_nce(Tensor(orng.uniform(-1, 1, (4, 3))),
                    Tensor(orng.uniform(-1, 1, (4, 3))), 1e6).data[0, 0]
    record("loss/uniform_limit", abs(flat - 4 * math.log(4)) / (4 * math.log(4)) < 0.01)

    # row softmax normalization
    sm = ad.row_log_softmax(Tensor(orng.uniform(-40, 40, (6, 6)))).data
    record("softmax/rows_sum_to_one",
           np.abs(np.exp(sm).sum(axis=1) - 1.0).max() < 1e-12)

    # structural invariances
    for kind in ("gcn", "gin", "gat"):
        gap = _check_invariances(kind)
        record(f"invariance/{kind}", gap < EXACT_TOL, f"max gap {gap:.2e}")

    # optimizer hand values
    p = Tensor([[1.0]], requires_grad=True)
    st = AdamState.for_params([("p", p)])
    adam_step([("p", p)], [np.array([[1.0]])], st, lr=0.1)
    record("adam/first_step", abs(p.data[0, 0] - 0.9) < 1e-6)
    p2 = Tensor([[1.0]], requires_grad=True)
    st2 = AdamState.for_params([("p", p2)])
    adam_step([("p", p2)], [np.array([[0.0]])], st2, lr=0.01, weight_decay=0.1)
    record("adam/decay_only", abs(p2.data[0, 0] - 0.999) < 1e-15)

    # dropout statistics
    drop = ad.dropout(Tensor(np.ones((700, 700))), 0.5, True, stream(559, "mc"))
    rate = (drop.data != 0).mean()
    record("dropout/survival_rate", 0.495 <= rate <= 0.505, f"rate {rate:.4f}")

    failed = sum(1 for _, ok, _ in checks if not ok)
    if verbose:
        for name, ok, detail in checks:
            status = "PASS" if ok else "FAIL"
            suffix = f"  ({detail})" if detail else ""
            print(f"[{status}] {name}{suffix}")
        print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return failed
