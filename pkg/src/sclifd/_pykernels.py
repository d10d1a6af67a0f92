"""Pure numpy implementations of the hot kernels.

Same signatures as the compiled ``_ckernels`` module; used when the
extension is not built or when ``SCLIFD_PURE_PYTHON=1``.  Inputs are assumed
validated by the caller (see ``losses`` and ``memory``).
"""
import numpy as np

TIE_RTOL = 1e-12


def _offdiag_log_softmax(z, tau):
    logits = (z @ z.T) / tau
    np.fill_diagonal(logits, -np.inf)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - log_norm


def scl_loss_grad(z, labels, tau):
    """Summed supervised contrastive loss and its gradient wrt the rows of z."""
    n = z.shape[0]
    log_prob = _offdiag_log_softmax(z, tau)
    prob = np.exp(log_prob)
    pos = labels[:, None] == labels[None, :]
    np.fill_diagonal(pos, False)
    n_pos = pos.sum(axis=1)
    pos_log = np.where(pos, log_prob, 0.0)
    loss = -float(np.sum(pos_log.sum(axis=1) / n_pos))
    coef = prob - pos / n_pos[:, None]
    coef[np.arange(n), np.arange(n)] = 0.0
    grad = (coef + coef.T) @ z / tau
    return loss, grad


def similarity_softmax(z, tau):
    """Full n x n off-diagonal softmax matrix (diagonal entries are 0)."""
    return np.exp(_offdiag_log_softmax(z, tau))


def kd_loss_grad(teacher, student, tau):
    """Cross-entropy between teacher and student similarity distributions."""
    n = student.shape[0]
    p_t = np.exp(_offdiag_log_softmax(teacher, tau))
    log_ps = _offdiag_log_softmax(student, tau)
    np.fill_diagonal(log_ps, 0.0)
    loss = -float(np.sum(p_t * log_ps)) / n
    p_s = np.exp(log_ps)
    np.fill_diagonal(p_s, 0.0)
    coef = (p_s - p_t) / n
    grad = (coef + coef.T) @ student / tau
    return loss, grad


def herding_order(features, m, tie_rtol=TIE_RTOL):
    """Greedy herding picks, lowest index on ties.

    Distances are compared in the scaled form ||k*T - n*(x + S)||, which is
    exact for integer inputs.  Candidates within ``tie_rtol`` times the
    rounding scale of the minimum count as tied, so symmetric configurations
    (e.g. two points about their mean) resolve by index, not rounding noise.
    """
    n = features.shape[0]
    m = min(m, n)
    total = features.sum(axis=0)
    running = np.zeros_like(total)
    taken = np.zeros(n, dtype=bool)
    order = np.empty(m, dtype=np.int64)
    abs_total = np.abs(total)
    abs_f = np.abs(features)
    for k in range(1, m + 1):
        diff = k * total - n * (features + running)
        d2 = np.einsum("ij,ij->i", diff, diff)
        mag = k * abs_total + n * (abs_f + np.abs(running))
        scale = np.einsum("ij,ij->i", mag, mag)
        d2[taken] = np.inf
        tol = tie_rtol * scale[~taken].max()
        best = int(np.flatnonzero(d2 <= d2.min() + tol)[0])
        order[k - 1] = best
        taken[best] = True
        running += features[best]
    return order


def majority_counts(context, labels, query_rows, n_neighbors):
    """Number of other-label points among each query's n nearest neighbours.

    The query row itself is excluded; distance ties go to the lower row.
    """
    counts = np.empty(len(query_rows), dtype=np.int64)
    rows = np.arange(context.shape[0])
    for i, q in enumerate(query_rows):
        diff = context - context[q]
        d2 = np.einsum("ij,ij->i", diff, diff)
        d2[q] = np.inf
        nearest = np.lexsort((rows, d2))[:n_neighbors]
        counts[i] = int(np.count_nonzero(labels[nearest] != labels[q]))
    return counts
