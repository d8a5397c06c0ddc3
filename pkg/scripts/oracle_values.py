"""Brute-force high-precision recomputation of every closed-form value the test suite freezes.

Written with explicit loops over mpmath numbers so it shares no code with the
package. Run it to regenerate the constants in ``tests/oracles.py``:

    python scripts/oracle_values.py
"""

import mpmath as mp

mp.mp.dps = 50


def cos(a, b):
    num = mp.fsum(x * y for x, y in zip(a, b))
    na = mp.sqrt(mp.fsum(x * x for x in a))
    nb = mp.sqrt(mp.fsum(y * y for y in b))
    return num / (na * nb)


def ntxent_pair(zs, zr, tau, lam):
    """Symmetric global NTXent, written from the raw definition."""
    n = len(zs)
    total = mp.mpf(0)
    for i in range(n):
        num = mp.exp(cos(zs[i], zr[i]) / tau)
        den_sr = mp.fsum(mp.exp(cos(zs[i], zr[j]) / tau) for j in range(n))
        den_rs = mp.fsum(mp.exp(cos(zr[i], zs[j]) / tau) for j in range(n))
        total += lam * -mp.log(num / den_sr) + (1 - lam) * -mp.log(num / den_rs)
    return total / n


def local_image(zs, zrs, w, p, tau_p):
    k_count = len(zs)
    total = mp.mpf(0)
    for k in range(k_count):
        den1 = mp.fsum(mp.exp(cos(zs[k], zrs[kk]) / tau_p) for kk in range(k_count))
        den2 = mp.fsum(mp.exp(cos(zrs[k], zs[kk]) / tau_p) for kk in range(k_count))
        l1 = -mp.fsum(p[k][l] * mp.log(mp.exp(cos(zs[k], zrs[l]) / tau_p) / den1) for l in range(k_count))
        l2 = -mp.fsum(p[k][l] * mp.log(mp.exp(cos(zrs[k], zs[l]) / tau_p) / den2) for l in range(k_count))
        total += w[k] * (l1 + l2)
    return total / 2


def uni_gauss(rows, tau_p):
    k = len(rows)
    s = mp.fsum(mp.exp(cos(a, b) / tau_p) for a in rows for b in rows)
    return mp.log(s / k**2)


def uni_gauss_distance_form(rows, tau_p):
    k = len(rows)
    s = mp.mpf(0)
    for a in rows:
        for b in rows:
            d2 = mp.fsum((x - y) ** 2 for x, y in zip(a, b))
            s += mp.exp(-d2 / (2 * tau_p))
    return mp.log(s / k**2)


def uni_xent(rows, tau_p):
    k = len(rows)
    return mp.fsum(mp.log(mp.fsum(mp.exp(cos(a, b) / tau_p) for b in rows)) for a in rows) / k


def wang_isola(rows, t):
    n = len(rows)
    s = mp.mpf(0)
    for a in rows:
        for b in rows:
            s += mp.exp(-t * mp.fsum((x - y) ** 2 for x, y in zip(a, b)))
    return -mp.log(s / n**2)


def positiveness_2x1(bandwidth):
    d2 = mp.mpf(1)
    e = mp.exp(-d2 / (2 * bandwidth**2))
    return 1 / (1 + e)


def lse(values):
    m = max(values)
    return m + mp.log(mp.fsum(mp.exp(v - m) for v in values))


VALUES = {
    "COS_45_DEG": cos([1, 1], [1, 0]),
    "LSE_1000_1000": lse([mp.mpf(1000), mp.mpf(1000)]),
    "NTXENT_2WAY": ntxent_pair([[1, 0], [0, 1]], [[1, 0], [0, 1]], mp.mpf(1), mp.mpf("0.5")),
    "LOCAL_IMAGE_2WAY": local_image(
        [[1, 0], [0, 1]], [[1, 0], [0, 1]], [mp.mpf("0.5")] * 2, [[1, 0], [0, 1]], mp.mpf(1)
    ),
    "UNI_GAUSS_ORTHO_T05": uni_gauss([[1, 0], [0, 1]], mp.mpf("0.5")),
    "UNI_GAUSS_ANTIPODAL_T1": uni_gauss([[1, 0], [-1, 0]], mp.mpf(1)),
    "UNI_GAUSS_COLLAPSED_T02": uni_gauss([[1, 0], [1, 0], [1, 0]], mp.mpf("0.2")),
    "UNI_XENT_COLLAPSED_K3_T02": uni_xent([[1, 0], [1, 0], [1, 0]], mp.mpf("0.2")),
    "GAUSS_DIST_FORM_ORTHO_T1": uni_gauss_distance_form([[1, 0], [0, 1]], mp.mpf(1)),
    "GAUSS_COS_FORM_ORTHO_T1": uni_gauss([[1, 0], [0, 1]], mp.mpf(1)),
    "WANG_ISOLA_ANTIPODAL_T2": wang_isola([[1, 0], [-1, 0]], mp.mpf(2)),
    "POSITIVENESS_2X1_BW1": positiveness_2x1(mp.mpf(1)),
}


if __name__ == "__main__":
    for name, value in VALUES.items():
        print(f"{name} = {mp.nstr(value, 20)}  # float: {float(value)!r}")
