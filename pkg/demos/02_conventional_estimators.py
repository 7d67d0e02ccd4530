"""
Data-pilot-aided tracking and spectral-temporal averaging
=========================================================

DPA uses last symbol's decisions as extra pilots. STA smooths the DPA
output over neighbouring subcarriers and over time. Both are compared
against the true channel here.
"""

# %%
import numpy as np

from relprune import ChannelProfile, FrameConfig, build_frame, dpa_estimate, realize_channel, sta_estimate, transmit
from relprune.harness import equalize_and_ber

cfg = FrameConfig()


def run(snr, seed):
    frame = build_frame(cfg, seed)
    chan = realize_channel(ChannelProfile.preset("LF"), cfg.n_samples, seed + 100)
    rx = transmit(frame, chan, snr, seed + 200)
    dpa = dpa_estimate(rx, cfg)
    sta = sta_estimate(dpa, alpha=2, beta=2)
    return frame, rx, dpa, sta


# %%
# Mean squared error against the true response, averaged over 10 frames.
print(" SNR   MSE(DPA)   MSE(STA)   BER(DPA)   BER(STA)")
for snr in (10, 20, 30):
    mse = {"DPA": [], "STA": []}
    sets = {"DPA": [], "STA": []}
    rxs, bits = [], []
    for seed in range(10):
        frame, rx, dpa, sta = run(snr, seed)
        rxs.append(rx.r)
        bits.append(frame.tx_bits)
        for name, est in (("DPA", dpa), ("STA", sta)):
            mse[name].append(np.mean(np.abs(est.h_hat - rx.h_true) ** 2))
            sets[name].append(est.h_hat)
    ber = {k: equalize_and_ber(rxs, v, bits, cfg)[0] for k, v in sets.items()}
    print(f"{snr:4d}  {np.mean(mse['DPA']):9.4f}  {np.mean(mse['STA']):9.4f}  {ber['DPA']:9.4f}  {ber['STA']:9.4f}")

# %%
# Decision errors feed back: the DPA error tends to grow along the frame.
_, rx, dpa, _ = run(10, 0)
per_symbol = np.mean(np.abs(dpa.h_hat - rx.h_true) ** 2, axis=1)
print("DPA MSE, first 5 symbols:", per_symbol[:5].round(3))
print("DPA MSE, last 5 symbols: ", per_symbol[-5:].round(3))
