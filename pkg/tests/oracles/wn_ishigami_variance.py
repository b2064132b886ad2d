"""Brute-force Monte Carlo oracle for Var(Y) of the WN-Ishigami model.

Y = sin(X1) + 7 sin(X2)^2 + 0.1 M^4 sin(X1) with X1, X2 ~ U(-pi, pi) and
M = max of a 100-step standard normal white noise.  Everything here is
reimplemented from scratch (numpy RNG only) so the value is independent of
the package's sampling code.  Two disjoint half-samples gauge the MC error.

Run: python3 tests/oracles/wn_ishigami_variance.py
"""

import numpy as np

N_HALF = 2_000_000
CHUNK = 50_000


def simulate(rng: np.random.Generator, n: int) -> np.ndarray:
    out = np.empty(n)
    done = 0
    while done < n:
        m = min(CHUNK, n - done)
        x1 = rng.uniform(-np.pi, np.pi, m)
        x2 = rng.uniform(-np.pi, np.pi, m)
        mx = rng.standard_normal((m, 100)).max(axis=1)
        out[done : done + m] = np.sin(x1) + 7.0 * np.sin(x2) ** 2 + 0.1 * mx**4 * np.sin(x1)
        done += m
    return out


def main() -> None:
    rng = np.random.default_rng(20240801)
    halves = [simulate(rng, N_HALF) for _ in range(2)]
    pooled = np.concatenate(halves)
    for tag, y in (("half A", halves[0]), ("half B", halves[1]), ("pooled", pooled)):
        print(f"{tag}: n={y.size}  E(Y)={y.mean():.6f}  Var(Y)={y.var(ddof=1):.6f}")
    print(f"freeze: VAR_Y = {pooled.var(ddof=1):.4f}")
    print(f"freeze: MEAN_Y = {pooled.mean():.4f}")


if __name__ == "__main__":
    main()
