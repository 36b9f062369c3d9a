"""One-time dense least-squares oracle for the end-to-end recovery gate.

Builds the full measurement matrix of the noiseless recovery problem by
brute-force convolution (no FFTs, no solver code) and takes the
minimum-norm least-squares correction from the solver's flat starting
point. The resulting PSNR is frozen in ``tests/test_acceptance.py``.

Run with ``python tests/oracles/recovery_oracle.py``; takes about a minute.
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from recovery_case import build_case  # noqa: E402


def dense_measurement_matrix(kernels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Rows: (n, row, col) of the sensor window; columns: (c, row, col) of the scene.

    The scene is zero outside the window, so a measurement pixel sees scene
    pixel ``q`` through kernel tap ``p - q + r`` (``r`` the kernel radius).
    """
    n_meas, channels, k, _ = kernels.shape
    r = k // 2
    hw = height * width
    mat = np.zeros((n_meas * hw, channels * hw))
    for p_row in range(height):
        for p_col in range(width):
            p = p_row * width + p_col
            for q_row in range(max(0, p_row - r), min(height, p_row + r + 1)):
                for q_col in range(max(0, p_col - r), min(width, p_col + r + 1)):
                    q = q_row * width + q_col
                    taps = kernels[:, :, p_row - q_row + r, p_col - q_col + r]
                    for n in range(n_meas):
                        mat[n * hw + p, q::hw][:channels] = taps[n]
    return mat


def oracle_psnr() -> float:
    case = build_case()
    truth, psfs, stack = case["truth"], case["psfs"], case["stack"]
    h, w = truth.height, truth.width
    a = dense_measurement_matrix(psfs.kernels, h, w)
    y = stack.data.ravel()
    # self-check the brute-force matrix against the clean measurements
    assert np.max(np.abs(a @ truth.data.ravel() - y)) < 1e-10
    x0 = np.full(a.shape[1], 0.5)
    correction, *_ = np.linalg.lstsq(a, y - a @ x0, rcond=None)
    x = np.maximum(x0 + correction, 0.0).reshape(truth.data.shape)
    mse = np.mean((x - truth.data) ** 2)
    return float(10 * np.log10(1.0 / mse))


if __name__ == "__main__":
    print(f"{oracle_psnr():.6f}")
