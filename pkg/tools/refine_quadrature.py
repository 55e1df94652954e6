"""Refine symmetric triangle quadrature rules to 30 digits.

Starting values are the published 15-digit Dunavant tables. Each rule is
parametrized by its symmetry orbits and polished by Gauss-Newton on the
monomial moment equations in extended precision. The printed literals are
pasted into ``stokes_lps/quadrature.py``.

Run: python tools/refine_quadrature.py
"""
import mpmath as mp

mp.mp.dps = 50

# (degree, [(orbit, params..., weight)]) with weights normalized to sum 1
START = {
    4: [("s21", 0.445948490915965, 0.223381589678011),
        ("s21", 0.091576213509771, 0.109951743655322)],
    5: [("s3", 0.225),
        ("s21", 0.470142064105115, 0.132394152788506),
        ("s21", 0.101286507323456, 0.125939180544827)],
    6: [("s21", 0.249286745170910, 0.116786275726379),
        ("s21", 0.063089014491502, 0.050844906370207),
        ("s111", 0.053145049844817, 0.310352451033784, 0.082851075618374)],
    8: [("s3", 0.144315607677787),
        ("s21", 0.459292588292723, 0.095091634267285),
        ("s21", 0.170569307751760, 0.103217370534718),
        ("s21", 0.050547228317031, 0.032458497623198),
        ("s111", 0.008394777409958, 0.263112829634638, 0.027230314174435)],
}


def expand(orbits, params):
    pts, wts = [], []
    k = 0
    for kind, *_ in orbits:
        if kind == "s3":
            w = params[k]; k += 1
            pts.append((mp.mpf(1) / 3, mp.mpf(1) / 3)); wts.append(w)
        elif kind == "s21":
            a, w = params[k], params[k + 1]; k += 2
            b = 1 - 2 * a
            for bc in ((a, a, b), (a, b, a), (b, a, a)):
                pts.append((bc[1], bc[2])); wts.append(w / 3)
        else:
            a, b, w = params[k], params[k + 1], params[k + 2]; k += 3
            c = 1 - a - b
            for bc in ((a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)):
                pts.append((bc[1], bc[2])); wts.append(w / 6)
    return pts, wts


def residual(orbits, params, deg):
    pts, wts = expand(orbits, params)
    res = []
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            exact = mp.factorial(a) * mp.factorial(b) / mp.factorial(a + b + 2)
            q = sum(w * x**a * y**b for (x, y), w in zip(pts, wts)) / 2
            res.append(q - exact)
    return mp.matrix(res)


def refine(deg, orbits):
    params = [mp.mpf(v) for o in orbits for v in o[1:]]
    for _ in range(30):
        r = residual(orbits, params, deg)
        jac = mp.matrix(len(r), len(params))
        for j in range(len(params)):
            h = mp.mpf(10) ** -25
            p2 = list(params); p2[j] += h
            rj = residual(orbits, p2, deg)
            for i in range(len(r)):
                jac[i, j] = (rj[i] - r[i]) / h
        jt = jac.T
        step = mp.lu_solve(jt * jac, -(jt * r))
        params = [p + s for p, s in zip(params, step)]
        if mp.norm(step) < mp.mpf(10) ** -40:
            break
    return params, mp.norm(residual(orbits, params, deg))


if __name__ == "__main__":
    for deg, orbits in START.items():
        params, res = refine(deg, orbits)
        print(f"degree {deg}: residual {mp.nstr(res, 5)}")
        k = 0
        for kind, *_ in orbits:
            n = {"s3": 1, "s21": 2, "s111": 3}[kind]
            print("   ", kind, [mp.nstr(v, 30) for v in params[k:k + n]])
            k += n
