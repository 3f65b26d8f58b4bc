"""Scalar, dependency-free re-transcription of the RCAM right-hand side.

Written independently of ``landing_scp.model`` (plain ``math``, explicit matrix
products, parameters re-typed from the aircraft data table) and used only to
generate the frozen reference values in ``test_model.py``. Run as a script to
print them.
"""

import math

D = math.pi / 180

m, g = 120000.0, 9.81
Jx, Jy, Jz, Jxz = (r * m for r in (40.07, 64.0, 99.92, 2.0923))
rho = 1.225
CLa, CLat, CLqV = 5.5, 3.1, 1.3
a0, ea = -11.5 * D, 0.25
St, S = 64.0, 260.0
CD0, CD1, CD2, CDa = 0.13, 0.654, 0.07, 5.5
CYb, CYdr = -1.6, 0.24
cbar = 6.6
lt = 24.8
Clb, Clp, Clr, Clda, Cldr = -1.4, -11.0, 5.0, -0.6, 0.22
Cm0, Cma, Cmq, Cmde = -0.59, -3.1, -4.03, -3.1
Cnb, Cnab, Cnp, Cnr, Cnda, Cndr = 1.0, -3.82, 1.7, -11.5, 0.0, -0.63
pcg = (0.23 * cbar, 0.0, 0.1 * cbar)
pac = (0.12 * cbar, 0.0, 0.0)
pT = (0.0, 0.0, -1.9)
tau = 1.5


def matmul(A, B):
    return [[sum(A[i][k] * B[k][j] for k in range(3)) for j in range(3)] for i in range(3)]


def matvec(A, v):
    return [sum(A[i][k] * v[k] for k in range(3)) for i in range(3)]


def transpose(A):
    return [[A[j][i] for j in range(3)] for i in range(3)]


def cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def R_i2b(phi, th, psi):
    Rpsi = [[math.cos(psi), math.sin(psi), 0], [-math.sin(psi), math.cos(psi), 0], [0, 0, 1]]
    Rth = [[math.cos(th), 0, -math.sin(th)], [0, 1, 0], [math.sin(th), 0, math.cos(th)]]
    Rphi = [[1, 0, 0], [0, math.cos(phi), math.sin(phi)], [0, -math.sin(phi), math.cos(phi)]]
    return matmul(Rphi, matmul(Rth, Rpsi))


def coefficients(x, u):
    uu, vv, ww = x[3:6]
    p, q, r = x[9:12]
    dA, dE, dR = u[0:3]
    V = math.sqrt(uu * uu + vv * vv + ww * ww)
    alpha = math.atan(ww / uu)
    beta = math.asin(vv / V)
    eps = ea * (alpha - a0)
    at = alpha - eps + dE + CLqV * q * lt / V
    CL = CLa * (alpha - a0) + CLat * St / S * at
    CD = CD0 + CD2 * (CDa * alpha + CD1) ** 2
    CY = CYb * beta + CYdr * dR
    Cl = Clb * beta + Clp * p * cbar / V + Clr * r * cbar / V + Clda * dA + Cldr * dR
    Cm = (
        Cm0
        + Cma * St * lt / (S * cbar) * (alpha - eps)
        + Cmq * St * lt * lt / (S * cbar) * q / V
        + Cmde * St * lt / (S * cbar) * dE
    )
    Cn = Cnb * beta + Cnab * alpha * beta + Cnp * cbar * p / V + Cnr * cbar * r / V + Cnda * dA + Cndr * dR
    return [CL, CD, CY, Cl, Cm, Cn], alpha, beta, V


def rhs(x, u, wind=(0.0, 0.0, 0.0)):
    (CL, CD, CY, Cl, Cm, Cn), alpha, beta, V = coefficients(x, u)
    qbar = 0.5 * rho * V * V
    L, Dr, Y = qbar * S * CL, qbar * S * CD, qbar * S * CY
    ca, sa, cb, sb = math.cos(alpha), math.sin(alpha), math.cos(beta), math.sin(beta)
    Fa = [
        L * sa - Dr * ca * cb - Y * ca * sb,
        -Dr * sb + Y * cb,
        -L * ca - Dr * sa * cb - Y * sa * sb,
    ]
    arm = [pcg[i] - pac[i] for i in range(3)]
    Ma = [a + b for a, b in zip([qbar * S * cbar * c for c in (Cl, Cm, Cn)], cross(Fa, arm))]
    phi, th, psi = x[6:9]
    R = R_i2b(phi, th, psi)
    Fg = matvec(R, [0.0, 0.0, m * g])
    Fe = [2 * x[12] * m * g, 0.0, 0.0]
    Me = cross([pcg[i] - pT[i] for i in range(3)], Fe)

    v = x[3:6]
    Om = x[9:12]
    F = [Fa[i] + Fg[i] + Fe[i] for i in range(3)]
    OxV = cross(Om, v)
    vdot = [F[i] / m - OxV[i] for i in range(3)]

    J = [[Jx, 0, -Jxz], [0, Jy, 0], [-Jxz, 0, Jz]]
    JOm = matvec(J, Om)
    rhs_rot = [Ma[i] + Me[i] - cross(Om, JOm)[i] for i in range(3)]
    # J has the xz-coupled 2x2 block; invert by hand
    det = Jx * Jz - Jxz * Jxz
    pdot_ = (Jz * rhs_rot[0] + Jxz * rhs_rot[2]) / det
    rdot_ = (Jxz * rhs_rot[0] + Jx * rhs_rot[2]) / det
    qdot_ = rhs_rot[1] / Jy
    omdot = [pdot_, qdot_, rdot_]

    posdot = [a + w for a, w in zip(matvec(transpose(R), v), wind)]
    t, s, c = math.tan(th), math.sin(phi), math.cos(phi)
    sec = 1 / math.cos(th)
    attdot = [
        Om[0] + s * t * Om[1] + c * t * Om[2],
        c * Om[1] - s * Om[2],
        s * sec * Om[1] + c * sec * Om[2],
    ]
    thrdot = (u[3] - x[12]) / tau
    return posdot + vdot + attdot + omdot + [thrdot]


# reference points used by the tests
X_COEF = [0, 0, 0, 85.0, 0, 3.0, 0, 0, 0, 0, 0, 0, 0]
U_COEF = [0, 0, 0, 0]
X_MIX = [-50000.0, -30000.0, -5000.0, 100.0, 5.0, 3.0, 0.3, -0.2, 1.1, 0.05, -0.03, 0.02, 0.06]
U_MIX = [0.1, -0.05, 0.07, 0.08]
WIND_MIX = (1.0, -2.0, 0.5)

if __name__ == "__main__":
    coef, *_ = coefficients(X_COEF, U_COEF)
    print("coef", repr(coef))
    print("rhs_mix", repr(rhs(X_MIX, U_MIX, WIND_MIX)))
