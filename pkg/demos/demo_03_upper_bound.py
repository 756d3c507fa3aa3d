"""
How much is there to gain near the boundary?
============================================

Replace predicted labels with ground truth for every pixel within d px of
the predicted boundary and re-evaluate. Most of the error of a coarse mask
sits in a thin band, so even d = 1 recovers a large share of the AP.
"""
from bpr.metrics import format_table, upper_bound_report
from bpr.synthgen import SynthConfig, generate_corpus

corpus = generate_corpus(SynthConfig(seed=42), 20)
rows = upper_bound_report(corpus, bands=(1, 2, 3, float("inf")))
print(format_table(rows, "Dist."))
