"""Extended-precision reference values frozen into the Rust unit tests.

Run with `python3 scripts/oracle_values.py`; requires mpmath.
"""
from mpmath import mp, mpf, ncdf, npdf, log, sqrt, quad, exp, erfc, pi

mp.dps = 120


def phi(z):
    return npdf(mpf(z))


def cdf(z):
    return ncdf(mpf(z))


def log_cdf_diff(a, b):
    a, b = mpf(a), mpf(b)
    if a + b > 0:
        a, b = -b, -a
    # integrate the density directly so the reference does not share the erf
    # path; factor out phi(a) and integrate phi(a - s) / phi(a) over s
    w = a - b
    pts = [mpf(0)] + [x for x in (w / 1000, w / 100, w / 10, w / 2) if x > 0] + [w]
    pts += [x for x in (mpf(1) / abs(a) / 100, mpf(1) / abs(a) / 10, mpf(1) / abs(a))
            if a != 0 and 0 < x < w]
    pts = sorted(set(pts))
    v = quad(lambda s: exp(a * s - s * s / 2), pts)
    return log(v) + log(npdf(a))


def bvm(t, mu, s2, eps):
    s = sqrt(mpf(s2))
    a = (mpf(t) + eps - mu) / s
    b = (mpf(t) - eps - mu) / s
    # difference of upper tails avoids cancellation when both are near one
    p = cdf(a) - cdf(b) if a + b <= 0 else cdf(-b) - cdf(-a)
    loss = -log(p)
    dmu = (phi(a) - phi(b)) / (s * p)
    dsig = (a * phi(a) - b * phi(b)) / (s * p)
    return loss, dmu, dsig


print("pdf(1)", mp.nstr(phi(1), 20))
for z in [-8, -7.5, -6, -5, -3.3, -2, -1, -0.5, -1e-3, 0, 0.25, 0.7, 1, 1.5, 2.2, 3, 4.5, 6, 8]:
    print("cdf", z, mp.nstr(cdf(z), 20))
for z in [-5, -10, -20, -30, -38, -40]:
    print("logcdf", z, mp.nstr(log(cdf(z)), 20))
for a, b in [(1, -1), (40, -40), (10.01, 9.99), (-9.99, -10.01), (3, 2), (-20, -25),
             (-30, -30.02), (-37, -38), (25, 24.5), (0.3, 0.3 - 1e-9), (2.0, -0.5),
             (-39.9, -40)]:
    print("lcd", a, b, mp.nstr(log_cdf_diff(a, b), 20))
for t, mu, s2, eps in [(0, 0, 1e-4, 0.01), (0.3, 0.5, 0.01, 0.01), (0.9, 0.1, 0.0025, 0.01),
                       (0.2, 0.25, 0.04, 0.1), (0.0, 0.6, 0.0036, 0.01)]:
    l, dm, ds = bvm(t, mu, s2, eps)
    print("bvm", t, mu, s2, eps, mp.nstr(l, 20), mp.nstr(dm, 20), mp.nstr(ds, 20))
