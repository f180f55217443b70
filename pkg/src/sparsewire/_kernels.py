"""Compiled inner loops for the batched trainer.

The eligibility recursion touches every (replica, row, slot) triple each
step; a fused kernel keeps that single pass instead of a dozen numpy
passes.  Loop order (replica, row, slot ascending) is fixed, so results
are deterministic and match the unbatched reference implementation in
``plasticity.EpropSynapses`` (see tests).
"""

from __future__ import annotations

import numba


@numba.njit(cache=True)
def eprop_accumulate_batch(targets, row_length, pre_trace, psi, lsig,
                           eps, ebar, grad, beta, rho, alpha):
    """One step of the eligibility recursion for all replicas of one matrix.

    targets:    (P, S) int32 postsynaptic indices
    row_length: (P,)   int32 valid slots per row
    pre_trace:  (B, P) filtered presynaptic spikes
    psi:        (B, H) surrogate gradient of the postsynaptic layer
    lsig:       (B, H) learning signal of the postsynaptic layer
    eps, ebar:  (B, P, S) eligibility state, updated in place
    grad:       (P, S) float64 gradient accumulator (summed over replicas)
    """
    n_batch = pre_trace.shape[0]
    n_pre = targets.shape[0]
    for b in range(n_batch):
        for i in range(n_pre):
            zb = pre_trace[b, i]
            for s in range(row_length[i]):
                j = targets[i, s]
                e = psi[b, j] * (zb - beta * eps[b, i, s])
                eb = alpha * ebar[b, i, s] + e
                ebar[b, i, s] = eb
                grad[i, s] += lsig[b, j] * eb
                eps[b, i, s] = rho * eps[b, i, s] + e
