"""Pure-Python reference kernels.

These mirror ``degf._kernels`` (the Cython extension) operation for
operation: identical evaluation order, identical compensated-summation
scheme. On one platform the two backends produce bit-identical results,
which ``tests/test_kernel_backends.py`` asserts.

Summation convention for divergences: ascending token id with Kahan
compensation. Zero-probability terms contribute exactly 0; a p-term with
q == 0 makes the KL divergence +inf. All logarithms are base 2 so the
Jensen-Shannon divergence of two distributions lies in [0, 1].
"""

from math import exp, inf, log2

BACKEND_NAME = "python"


def softmax(values, masked, temperature, out):
    """Masked, temperature-scaled softmax into ``out``.

    ``values``/``out`` are float64 arrays, ``masked`` a uint8 array where
    nonzero means the entry is MASKED and must come out exactly 0.0.
    The caller guarantees at least one unmasked entry and temperature > 0.
    Stability: the running maximum of the unmasked entries is subtracted
    before exponentiation.
    """
    n = len(values)
    vals = [float(v) for v in values]
    msk = [bool(m) for m in masked]
    m = -inf
    for i in range(n):
        if not msk[i] and vals[i] > m:
            m = vals[i]
    s = 0.0
    c = 0.0
    exps = [0.0] * n
    for i in range(n):
        if msk[i]:
            continue
        e = exp((vals[i] - m) / temperature)
        exps[i] = e
        y = e - c
        t = s + y
        c = (t - s) - y
        s = t
    for i in range(n):
        out[i] = 0.0 if msk[i] else exps[i] / s


def kl_div(p, q):
    """KL(P || Q) in bits; +inf when P puts mass where Q has exact zeros."""
    ps = [float(v) for v in p]
    qs = [float(v) for v in q]
    s = 0.0
    c = 0.0
    for i in range(len(ps)):
        pi = ps[i]
        if pi > 0.0:
            if qs[i] == 0.0:
                return inf
            term = pi * log2(pi / qs[i])
            y = term - c
            t = s + y
            c = (t - s) - y
            s = t
    return s


def js_div(p, q):
    """Jensen-Shannon divergence in bits, clipped to [0, 1].

    Computed as 0.5*KL(P||M) + 0.5*KL(Q||M) with M = (P+Q)/2 formed
    elementwise inside the same pass. The mixture is strictly positive
    wherever either input is, so no +inf can arise. Rounding can push the
    raw sum a few ulp outside [0, 1]; the result is clipped back.
    """
    ps = [float(v) for v in p]
    qs = [float(v) for v in q]
    sp = 0.0
    cp = 0.0
    sq = 0.0
    cq = 0.0
    for i in range(len(ps)):
        pi = ps[i]
        qi = qs[i]
        m = 0.5 * (pi + qi)
        if pi > 0.0:
            term = pi * log2(pi / m)
            y = term - cp
            t = sp + y
            cp = (t - sp) - y
            sp = t
        if qi > 0.0:
            term = qi * log2(qi / m)
            y = term - cq
            t = sq + y
            cq = (t - sq) - y
            sq = t
    d = 0.5 * sp + 0.5 * sq
    if d < 0.0:
        return 0.0
    if d > 1.0:
        return 1.0
    return d
