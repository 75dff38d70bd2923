# Regenerates the frozen AMI values used by tests/eval.rs.
# Reference implementation: scikit-learn, max normalization.
from sklearn.metrics import adjusted_mutual_info_score

cases = [
    ([0, 0, 1, 1, 2, 2], [0, 0, 1, 2, 2, 2]),
    ([0, 0, 0, 1, 1, 1, 2, 2, 2, 3], [1, 1, 0, 0, 0, 2, 2, 2, 3, 3]),
    ([i % 4 for i in range(30)], [(i * 7) % 5 for i in range(30)]),
    ([i // 5 for i in range(40)], [(i // 4 + (i % 3 == 0)) % 9 for i in range(40)]),
]
for a, b in cases:
    print(f"{adjusted_mutual_info_score(a, b, average_method='max')!r}")
