"""Formula-by-formula re-evaluation of the unique-continuation constants.

Independent of the Rust implementation: every quantity is recomputed from the
printed formulas with 50-digit arithmetic. Values that underflow double
precision are reported through their natural logarithm.

Run: python3 constants_oracle.py
"""
from mpmath import mp, mpf, e, sqrt, log, ceil, exp

mp.dps = 50


def eps(d, theta1, theta2, G=1, R=None):
    if R is None:
        return 1 - 33 * e * d * (sqrt(d) + 2) * theta1**6 * G * theta2
    return 1 - 33 * e * d * R * theta1**6 * theta2


def side_T(d, theta1):
    return int(ceil(2 * (sqrt(d) + 2) * (2 * e * theta1 + 1)))


def quc(d, theta1, theta2, R, D0, delta, beta, KV=0, nb=0, nc=0, M=1, Cp=1):
    eps0 = 1 - 33 * e * d * R * theta1**6 * theta2
    rho = 2 * e * theta1 * R + 2 * D0
    mu = 33 * d * rho * theta1**mpf(5.5) * theta2 + rho * eps0 / (2 * e * R * sqrt(theta1))
    s = sqrt(theta1) * mu
    mu1 = exp(s) if s <= 1 else e * s
    cmu = mu - 33 * d * theta1**mpf(5.5) * theta2 * rho
    ctil = 2 * d**2 * theta1**8 * exp(4 * mu * sqrt(theta1)) * mu1**4 * (
        3 * mu**2 + (9 * rho * theta2 + 3) * mu + 1) / cmu
    a0til = 11 * d**4 * theta1**mpf(16.5) * exp(6 * mu * sqrt(theta1)) * mu1**6 * (
        3 * rho * theta2 + mu + 1)**2 * (1 + mu * (mu + 1) / cmu)
    C = 6 * ctil
    a0 = max(a0til, C * rho**2 * nb**2 * theta1**mpf(1.5),
             C**(mpf(1) / 3) * rho**(mpf(4) / 3) * mpf(nc)**(mpf(2) / 3) * sqrt(theta1))
    a1 = (16 * rho**4 * C * KV**2 * theta1**mpf(1.5))**(mpf(1) / 3)

    def cac(r):
        return 2 * KV**2 + 1 + 2 * nb**2 + 8 * theta1**2 * Cp / r**2 + 2 * nc

    q = rho / (sqrt(theta1) * e * R * mu)
    bracket = 3 * theta1**2 + 3 * theta1**2 * d**2 / (2 * e * theta1 * R)**2 + \
        3 * (theta2 * d**2 + nb)**2 + 4 * theta1 * cac(D0 / 2)
    arg = 8 * C * rho**3 * sqrt(theta1) * R * beta / (e**2 * mu**2) * (M / D0)**4 * bracket
    a3 = log(arg) / (2 * log(q)) if arg > 1 else mpf(0)
    astar = max(a0, a1, mpf(1), a3)
    first = 4 * mu1**2 * sqrt(theta1) * delta**2 / (3 * R * rho * C * M**4) / (
        3 * theta1**2 + 768 * theta1**2 * d**2 / delta**2 + 3 * (theta2 * d**2 + nb)**2
        + 4 * theta1 * cac(delta / 2))
    log_cquc = log(first) + 2 * astar * log(delta / (4 * mu1 * theta1 * R))
    return dict(eps0=eps0, rho=rho, mu=mu, mu1=mu1, C=C, alpha0=a0, alpha1=a1,
                alpha3=a3, alpha_star=astar, cac_delta_half=cac(delta / 2),
                cac_D0_half=cac(D0 / 2), log_c_quc=log_cquc)


def sfuc(d, theta1, theta2, G, delta, nV=0, nb=0, nc=0, K2=1):
    e2 = 1 - 33 * e * d * (sqrt(d) + 2) * theta1**6 * G * theta2
    D1 = K2 * theta1**(-mpf(31) / 2 - d) * exp(-10 * theta1) / (
        (1 + G * theta2) * (theta1 + G**2 * theta2**2))
    D2 = K2 * theta1**2
    D3 = K2 * theta1**25 * exp(15 * theta1) * (1 + G * theta2)**2
    expo = D3 / e2 * (1 + G**(mpf(4) / 3) * mpf(nV)**(mpf(2) / 3) + G**2 * nb**2
                      + G**(mpf(4) / 3) * mpf(nc)**(mpf(2) / 3)) - log(e2)
    return dict(eps2=e2, D1=D1, D2=D2, D3=D3, exponent=expo,
                log_c_sfuc=log(D1) + expo * log(delta / (G * D2)))


def quc_lower(d, theta1, theta2, R, delta, beta, eps0, KV=0, nb=0, nc=0, K1=1):
    C1 = K1 * theta1**(-mpf(31) / 2) * exp(-10 * theta1) / ((1 + theta2) * (theta1 + theta2**2))
    C2 = 10 * e * theta1**2
    C3 = K1 * theta1**25 * exp(15 * theta1) * (1 + theta2)**2
    expo = C3 / eps0 * (1 + mpf(KV)**(mpf(2) / 3) + nb**2 + mpf(nc)**(mpf(2) / 3)) * R**3 \
        - log(eps0) + log(beta)
    return dict(C1=C1, C2=C2, C3=C3, exponent=expo, log_value=log(C1) + expo * log(delta / (C2 * R)))


def show(title, dct):
    print(title)
    for k, v in dct.items():
        print(f"  {k} = {mp.nstr(v, 20) if not isinstance(v, int) else v}")


if __name__ == "__main__":
    print("eps sampling_G d=1 theta2=1e-3:", mp.nstr(eps(1, 1, mpf('1e-3')), 20))
    print("eps sampling_G d=1 theta2=1:", mp.nstr(eps(1, 1, 1), 20))
    print("T(1,1) =", side_T(1, 1), " T(4,1) =", side_T(4, 1))
    # canonical sampling path: d=1, theta1=1, theta2=0, G=1, delta=1/4
    d = 1
    T = side_T(d, 1)
    R = sqrt(d) + 2
    show("canonical sampling-path qUC (R=sqrt(d)+2, D0=R/2, beta=2T^d)",
         quc(d, mpf(1), mpf(0), R, R / 2, mpf(1) / 4, 2 * T**d))
    show("canonical C_sfUC", sfuc(d, mpf(1), mpf(0), mpf(1), mpf(1) / 4))
    # raw qUC example: R=1, D0=1/2, delta=1/4, beta=2T
    show("raw qUC R=1 D0=1/2 delta=1/4 beta=2T", quc(1, mpf(1), mpf(0), mpf(1), mpf(1) / 2,
                                                     mpf(1) / 4, 2 * T))
    show("raw qUC R=1 D0=1/2 beta=1 (alpha3 example)", quc(1, mpf(1), mpf(0), mpf(1), mpf(1) / 2,
                                                           mpf(1) / 4, mpf(1)))
    show("lemma lower bound R=1 delta=1/4 beta=1 eps0=1", quc_lower(1, mpf(1), mpf(0), mpf(1),
                                                                   mpf(1) / 4, mpf(1), mpf(1)))
    # gamma window: G=1, delta=1/4, E=1
    g = sfuc(1, mpf(1), mpf(0), mpf(1), mpf(1) / 4, nV=1)
    print("log gamma (G=1, delta=1/4, E=1):", mp.nstr((log(g['D1']) + g['exponent'] * log(mpf(1) / 4)) / 2, 20))
