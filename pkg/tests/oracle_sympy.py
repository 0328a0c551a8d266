"""Independent sympy computation of the frozen values used in the tests.

Run ``python3 tests/oracle_sympy.py`` to regenerate; the printed values are
pasted into the test modules as literals.
"""

import sympy as sp

from funneldae import registry

s = sp.symbols("s")


def mats(sys):
    def conv(M):
        return sp.Matrix([[sp.Rational(x.numerator, x.denominator) for x in row] for row in M])
    return conv(sys.E), conv(sys.A), conv(sys.B), conv(sys.C)


def report(name):
    E, A, B, C = mats(registry.linear_system(name))
    pencil = s * E - A
    det = sp.factor(pencil.det())
    G = sp.simplify(C * pencil.inv() * B)
    print(f"== {name}")
    print("det(sE-A) =", sp.expand(det))
    print("G =", [[sp.factor(x) for x in G.row(i)] for i in range(G.rows)])
    if G.rows == G.cols and sp.simplify(G.det()) != 0:
        H = sp.simplify(G.inv())
        print("H =", [[sp.factor(x) for x in H.row(i)] for i in range(H.rows)])
    P = sp.Matrix(sp.BlockMatrix([[-pencil, B], [C, sp.zeros(C.rows, B.cols)]]))
    if P.rows == P.cols:
        print("det P =", sp.factor(P.det()))


for name in ("tvrd-nonexist", "exlin", "feedback-minus-s", "linear-normalform-demo"):
    report(name)

# output feedback u = K y + v on the G = -s example with K = 3
E, A, B, C = mats(registry.linear_system("feedback-minus-s"))
GK = sp.simplify(C * (s * E - (A + B * sp.Matrix([[3]]) * C)).inv() * B)
print("feedback K=3:", sp.factor(GK[0, 0]))
