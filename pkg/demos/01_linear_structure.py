"""Structural analysis of a small linear DAE, done in exact arithmetic.

Run:  python3 demos/01_linear_structure.py
"""

from funneldae import registry
from funneldae.dae_analysis import analyze, invariant_zeros, transfer_function, truncated_vrd, vector_rd

sys_ = registry.linear_system("exlin")

# The transfer function G(s) = C (sE - A)^{-1} B is computed over Q(s), so
# every entry below is an exact rational function.
G = transfer_function(sys_)
print("G(s) =")
for row in G.entries:
    print("   ", "   ".join(str(e) for e in row))

# The ordinary vector relative degree needs an invertible high-frequency
# gain. Here that gain is singular, so the ordinary notion does not apply.
vrd = vector_rd(sys_)
print(f"\nvector relative degree exists: {vrd.exists}, rank of its gain = {vrd.rank_gamma}")

# The truncated variant works on H = G^{-1} and only needs the first q
# columns of its gain to have full rank.
tv = truncated_vrd(sys_)
print(f"truncated vector relative degree: exists = {tv.exists}, r = {tv.r}, q = {tv.q}")
print("H(s) =")
for row in tv.H.entries:
    print("   ", "   ".join(str(e) for e in row))

# Zero dynamics: stability is settled by an exact Routh-Hurwitz test on the
# rational coefficients; the floating point roots are only for display.
z = invariant_zeros(sys_)
print(f"\ndeterminant of the zero pencil: {z.determinant}")
print(f"invariant zeros (display only): {z.zeros}")
print(f"zero dynamics asymptotically stable: {z.stable}")

report = analyze(sys_)
print(f"\nall structural preconditions hold: {report.preconditions_ok}")
