# Regenerates the frozen log I_nu(x) table used by tests/directional.rs.
# Arbitrary-precision evaluation (mpmath, 60 digits) of the defining series.
import mpmath as mp

mp.mp.dps = 60
orders = [0, 0.5, 1, 2, 29, 30]
args = [1e-6, 0.1, 1, 10, 100, 1e4]
extra = [(2, 500), (2, 20), (2, 19.999), (30, 450), (30, 449.9), (2.5, 150), (3, 150), (0.5, 2), (1.5, 2)]

def log_i(nu, x):
    return mp.log(mp.besseli(mp.mpf(nu), mp.mpf(x)))

for nu in orders:
    for x in args:
        print(f"    ({nu:?}, {x:?}, {mp.nstr(log_i(nu, x), 25)}),".replace(":?", ""))
for nu, x in extra:
    print(f"    ({nu}, {x}, {mp.nstr(log_i(nu, x), 25)}),")
