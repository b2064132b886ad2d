"""Reproducible input sampling: seeded streams, marginals, pick-freeze designs.

Every random quantity is drawn from a counter-based generator (Philox) keyed
by ``(seed, stream key, block index)``.  Rows are generated in fixed blocks of
:data:`STRIDE` rows, so any row range of any stream can be regenerated
bit-identically regardless of chunk sizes or how many workers asked for it.
Scalar marginals are realized by inverse CDF, which keeps the uniform-space
design (and hence LHS stratification) intact.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError
from .models import Distribution, ModelSpec, ProcessSpec

STRIDE = 4096

# Token naming the functional-input column group in substitution targets.
EPS = "eps"

_UNIT_LO = 2.0**-53
_UNIT_HI = 1.0 - 2.0**-53


def _key_ints(key: Iterable) -> tuple:
    out = []
    for part in key:
        if isinstance(part, (int, np.integer)):
            out.append(int(part))
        else:
            out.append(zlib.crc32(str(part).encode("utf8")))
    return tuple(out)


def _block_generator(seed: int, key: tuple, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=_key_ints(key) + (block,))
    return np.random.Generator(np.random.Philox(ss))


def stream_uniforms(seed: int, key: tuple, n_cols: int, lo_row: int, hi_row: int) -> np.ndarray:
    """Rows ``[lo_row, hi_row)`` of the unbounded uniform table for one stream.

    The table is materialized in STRIDE-row blocks so the same rows come back
    no matter how the request is split.
    """
    if hi_row <= lo_row:
        return np.empty((0, n_cols))
    out = np.empty((hi_row - lo_row, n_cols))
    first, last = lo_row // STRIDE, (hi_row - 1) // STRIDE
    for b in range(first, last + 1):
        g = _block_generator(seed, key, b)
        block = g.random((STRIDE, n_cols))
        lo = max(lo_row, b * STRIDE)
        hi = min(hi_row, (b + 1) * STRIDE)
        out[lo - lo_row : hi - lo_row] = block[lo - b * STRIDE : hi - b * STRIDE]
    # ndtri(0) is -inf; the open unit interval keeps inverse CDFs finite
    return np.clip(out, _UNIT_LO, _UNIT_HI)


def transform_marginal(u: np.ndarray, dist: Distribution) -> np.ndarray:
    """Inverse-CDF transform of uniforms to one scalar marginal."""
    if dist.kind == "uniform":
        return dist.a + u * (dist.b - dist.a)
    return dist.a + dist.b * ndtri(u)


def _lhs_uniforms(seed: int, key: tuple, n: int, n_cols: int) -> np.ndarray:
    # Stratification couples all rows of a column, so LHS uses one plain
    # generator per block name instead of the strided table.
    g = _block_generator(seed, key + ("lhs",), 0)
    u = g.random((n, n_cols))
    for j in range(n_cols):
        u[:, j] = (g.permutation(n) + u[:, j]) / n
    return np.clip(u, _UNIT_LO, _UNIT_HI)


@dataclass(frozen=True)
class SampleBlock:
    """One named design block: scalar matrix plus optional process realizations.

    ``frozen_columns`` records which column groups were copied from another
    block (pick-freeze bookkeeping for the manifest).
    """

    name: str
    scalars: np.ndarray
    eps: Optional[np.ndarray] = None
    frozen_columns: tuple = ()

    @property
    def n(self) -> int:
        return self.scalars.shape[0]

    def __post_init__(self):
        if self.eps is not None and self.eps.shape[0] != self.scalars.shape[0]:
            raise ConfigError(
                f"block {self.name!r}: scalars have {self.scalars.shape[0]} rows, "
                f"eps has {self.eps.shape[0]}"
            )


def sample_matrix(
    model: ModelSpec,
    n: int,
    seed: int,
    block: str = "A",
    scheme: str = "simple_mc",
) -> np.ndarray:
    """Draw ``n`` rows of the scalar inputs for one named block."""
    if n < 1:
        raise ConfigError(f"sample size must be >= 1, got {n}")
    p = model.n_scalars
    if scheme == "simple_mc":
        u = stream_uniforms(seed, (block, "scalars"), p, 0, n)
    elif scheme == "lhs":
        u = _lhs_uniforms(seed, (block, "scalars"), n, p)
    else:
        raise ConfigError(f"unknown sampling scheme {scheme!r}")
    x = np.empty_like(u)
    for j, dist in enumerate(model.distributions):
        x[:, j] = transform_marginal(u[:, j], dist)
    return x


def sample_process(
    spec: ProcessSpec,
    n: int,
    seed: int,
    block: str = "A",
    lo_row: int = 0,
) -> np.ndarray:
    """Raw noise realizations, rows ``[lo_row, lo_row + n)`` of the block's stream.

    Regenerating any sub-range yields the same rows, so chunked evaluation and
    per-row fresh draws (trigger method) stay deterministic.
    """
    u = stream_uniforms(seed, (block, "eps"), spec.length, lo_row, lo_row + n)
    return transform_marginal(u, spec.step_law)


def build_design_pair(
    model: ModelSpec,
    n: int,
    seed: int,
    scheme: str = "simple_mc",
    share_eps: bool = False,
) -> tuple:
    """Two independent blocks A and B over all of the model's inputs.

    With ``share_eps`` the process realizations are aliased across the pair
    (B reuses A's draws), which is the direct way to condition on the process
    when estimating its first-order index.
    """
    if share_eps and model.functional_input is None:
        raise ConfigError("share_eps requires a model with a functional input")
    blocks = []
    for name in ("A", "B"):
        scalars = sample_matrix(model, n, seed, block=name, scheme=scheme)
        eps = None
        if model.functional_input is not None:
            eps_block = "A" if share_eps else name
            eps = sample_process(model.functional_input, n, seed, block=eps_block)
        blocks.append(SampleBlock(name=name, scalars=scalars, eps=eps))
    return blocks[0], blocks[1]


def substitute_columns(
    base: SampleBlock,
    donor: SampleBlock,
    targets: Sequence[str],
    model: ModelSpec,
    name: Optional[str] = None,
) -> SampleBlock:
    """Copy the target column groups from ``donor`` into ``base``.

    Targets are scalar input names and/or the :data:`EPS` token for the whole
    functional-input group.  This is the pick-freeze primitive: the returned
    block agrees with ``donor`` on the targets and with ``base`` elsewhere.
    """
    if base.n != donor.n:
        raise ConfigError(f"blocks {base.name!r} and {donor.name!r} differ in size")
    targets = list(targets)
    if not targets:
        raise ConfigError("substitution requires at least one target column")
    if len(set(targets)) != len(targets):
        raise ConfigError(f"duplicate substitution targets: {targets}")
    scalars = base.scalars.copy()
    eps = None if base.eps is None else base.eps.copy()
    for t in targets:
        if t == EPS:
            if model.functional_input is None:
                raise ConfigError("model has no functional input to substitute")
            if donor.eps is None:
                raise ConfigError(f"donor block {donor.name!r} carries no process realizations")
            eps = donor.eps.copy()
        else:
            try:
                j = model.scalar_names.index(t)
            except ValueError:
                raise ConfigError(
                    f"unknown substitution target {t!r}; inputs are "
                    f"{model.scalar_names + ([EPS] if model.functional_input else [])}"
                ) from None
            scalars[:, j] = donor.scalars[:, j]
    out_name = name if name is not None else f"{base.name}{donor.name}_{'_'.join(targets)}"
    return SampleBlock(name=out_name, scalars=scalars, eps=eps, frozen_columns=tuple(targets))


def rename_block(block: SampleBlock, name: str) -> SampleBlock:
    return replace(block, name=name)
