"""A short BER sweep: GMUD precoding against principal-eigenvector precoding.

The full experiment (2000 trials per point) is available from the command
line, e.g. ``simcli run --precoder svd --out svd.csv``. This script uses a
smaller budget so it finishes in well under a minute.
"""
import sys

from gmudprec import parse_config, run_sweep
from gmudprec.simcli import format_csv

budget = {"trials": 150, "blocks_per_trial": 50, "snr_db_min": 0, "snr_db_max": 20, "snr_db_step": 4}

results = {}
for precoder in ("gmud", "svd"):
    cfg = parse_config(None, dict(budget, precoder=precoder))
    results[precoder] = run_sweep(cfg)

print("SNR dB    BER gmud     BER svd    predicted 1/SINR (gmud)")
for g, s in zip(results["gmud"], results["svd"]):
    print(f"{g.snr_db:6.1f}   {g.ber:.3e}   {s.ber:.3e}   {g.mean_inv_sinr_pred:.4f}")

# The same numbers as CSV, exactly as the command line writes them.
sys.stdout.write("\n" + format_csv(results["gmud"]))
