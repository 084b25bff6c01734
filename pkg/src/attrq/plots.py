"""Optional figures (matplotlib is imported lazily)."""

from __future__ import annotations


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_firefront(trace: list, path) -> None:
    """State counts and cumulative probabilities of F, N and A per iteration."""
    plt = _pyplot()
    it = [r[0] for r in trace]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    for col, name in ((1, "F"), (2, "N"), (3, "A")):
        ax1.plot(it, [r[col] for r in trace], label=name)
    ax1.set_ylabel("# states")
    ax1.set_yscale("symlog")
    ax1.legend()
    for col, name in ((4, "P(F)"), (5, "P(N)"), (6, "P(A)")):
        ax2.plot(it, [r[col] for r in trace], label=name)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("probability")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_avatar(run, path) -> None:
    """Running probability estimates and trajectory lengths across simulations."""
    from .results import attractor_ids

    plt = _pyplot()
    res = run.result
    ids = {id(e): aid for aid, e in zip(attractor_ids(res), res.sorted_attractors())}
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    n = len(run.outcomes)
    xs = list(range(1, n + 1))
    for est in res.sorted_attractors():
        hits, series = 0, []
        for e in run.hit:
            hits += e is est
            series.append(hits)
        ax1.plot(xs, [h / x for h, x in zip(series, xs)], label=ids[id(est)])
    ax1.set_ylabel("estimated probability")
    ax1.legend()
    ax2.plot(xs, [o.steps for o in run.outcomes], ",", alpha=0.5)
    ax2.set_xlabel("simulation")
    ax2.set_ylabel("trajectory length")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
