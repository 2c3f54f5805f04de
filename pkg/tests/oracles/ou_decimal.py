"""Stationary OU scale gap evaluated with the standard-library decimal module."""

from decimal import Decimal, getcontext


def P(alpha, eta, digits=60):
    getcontext().prec = digits
    a = Decimal(repr(alpha))
    e = Decimal(repr(eta))
    one = Decimal(1)
    sy = (e / (one - (one - e) ** a)) ** (one / a)
    sx = (one / a) ** (one / a)
    return sy - sx, sx, sy


def first_order_coeff(alpha, digits=60):
    getcontext().prec = digits
    a = Decimal(repr(alpha))
    one = Decimal(1)
    return (one / a) ** (one / a) * (a + one) / (2 * a)


def series_coeff(alpha, digits=60):
    """Taylor coefficient of P in eta, from 1 - (1-eta)^a = a eta - a(a-1)/2 eta^2 + ..."""
    getcontext().prec = digits
    a = Decimal(repr(alpha))
    one = Decimal(1)
    return (one / a) ** (one / a) * (a - one) / (2 * a)
