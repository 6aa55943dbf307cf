"""
Closed-form right-hand sides of the claimed moment bounds, N^eps dropped.

delta, Delta and lam are values at the given N, not exponents.
"""
import math

from .exceptions import PreconditionError


def n8_bound(N, delta):
    """delta*N^5 + N^4."""
    return delta * N ** 5 + N ** 4


def n10_diagonal_bound(N, delta):
    """delta*N^7 + N^5, for Delta = delta*N."""
    return delta * N ** 7 + N ** 5


def n10_mid_range_bound(N, delta):
    """delta*N^7, for Delta = delta*N and 1/N^2 < delta < 1/N."""
    return delta * N ** 7


def n10_bound(N, delta, Delta):
    """delta*Delta^(3/4)*N^7 + (delta + Delta)*N^6 + N^5."""
    return delta * Delta ** 0.75 * N ** 7 + (delta + Delta) * N ** 6 + N ** 5


def lower_bound_term(N, delta, Delta):
    """delta*Delta^(3/4)*N^7, the part of n10_bound that is also a lower bound."""
    return delta * Delta ** 0.75 * N ** 7


def n10_narrow_bound(N, delta, Delta):
    if N * Delta <= 1:
        raise PreconditionError(f"needs N*Delta > 1, got {N * Delta:.4g}")
    if delta >= N ** -1.4 * (Delta * N) ** 0.2:
        raise PreconditionError("needs delta < N^(-7/5) (Delta N)^(1/5)")
    dn = Delta * N
    return ((math.sqrt(delta) * Delta ** 0.25 * N + math.sqrt(dn)) * N ** 5
            + (Delta * delta * N + Delta ** 1.5) * dn ** -0.1 * N ** 6.2)


def n10_iterated_bound(N, delta, Delta):
    if not 1 / N ** 2 < delta < 1 / N:
        raise PreconditionError("needs 1/N^2 < delta < 1/N")
    if not 1 / N < Delta < delta * N:
        raise PreconditionError("needs 1/N < Delta < delta*N")
    if Delta * math.sqrt(delta) * N ** 1.5 >= 1:
        raise PreconditionError("needs Delta * delta^(1/2) * N^(3/2) < 1")
    dn = Delta * N
    return ((1 + delta * dn ** 1.6 * N ** 1.4) * (1 + math.sqrt(delta * dn) * N ** 0.75) * N ** 5
            + (delta * dn ** 2.8 + dn ** 0.3 * Delta ** 1.5) * N ** 6.2)


def bilinear_contribution(N, n=3):
    """N^((n-1)/2), the size of the diagonal-type contribution for n separated pieces."""
    return N ** ((n - 1) / 2)

