"""Decoupled representation learning: unique/shared encoders and reconstruction decoders.

For N sequences with initial features f_1..f_N:

* ``U_i = Enc_u,i(f_i)``: one bias-free unique encoder per sequence.
* ``S_ij = (g(f_i) + g(f_j)) / 2``: a single shared map ``g`` applied to both
  inputs and averaged, so ``S_ij == S_ji`` exactly.
* ``SRF_i = SDec_i(U_i, [S_ij for j != i])``
* ``CRF_i = CDec_i(U_i, [S_jk for j, k != i])``; with N = 2 the bracket is empty
  and the cross decoder sees ``U_i`` alone.

Both reconstructions are scored against f_i with an L1 loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import torch
import torch.nn as nn

from .errors import ConfigError, ContractError


def pair_keys(n: int) -> list[tuple[int, int]]:
    return list(combinations(range(n), 2))


def self_pairs(i: int, n: int) -> list[tuple[int, int]]:
    """Shared-feature keys involving sequence i, ordered by partner index."""
    return [tuple(sorted((i, j))) for j in range(n) if j != i]


def cross_pairs(i: int, n: int) -> list[tuple[int, int]]:
    """Shared-feature keys excluding sequence i."""
    return [p for p in pair_keys(n) if i not in p]


@dataclass
class DecoupledBundle:
    U: dict[int, torch.Tensor]
    S: dict[tuple[int, int], torch.Tensor]
    SRF: dict[int, torch.Tensor] = field(default_factory=dict)
    CRF: dict[int, torch.Tensor] = field(default_factory=dict)

    def shared(self, i: int, j: int) -> torch.Tensor:
        return self.S[(min(i, j), max(i, j))]

    def representation(self) -> torch.Tensor:
        """Concatenation of all U_i (by i) then all S_ij (by pair) along features."""
        return torch.cat([self.U[i] for i in sorted(self.U)]
                         + [self.S[k] for k in sorted(self.S)], dim=-1)


@dataclass
class DRLMLosses:
    self_loss: torch.Tensor
    cross_loss: torch.Tensor


def _mlp(in_dim, hidden, out_dim, bias=True):
    return nn.Sequential(nn.Linear(in_dim, hidden, bias=bias), nn.GELU(),
                         nn.Linear(hidden, out_dim, bias=bias))


class DRLM(nn.Module):
    def __init__(self, num_sequences: int, feature_dim: int, unique_dim: int | None = None,
                 shared_dim: int | None = None, hidden: int | None = None,
                 cross_single_fallback: bool = True):
        super().__init__()
        if num_sequences < 2:
            raise ConfigError("decoupling needs at least two sequences")
        n = self.num_sequences = num_sequences
        self.feature_dim = feature_dim
        du = self.unique_dim = unique_dim or feature_dim // 2
        ds = self.shared_dim = shared_dim or feature_dim // 2
        hidden = hidden or feature_dim
        self.cross_single_fallback = cross_single_fallback
        self.enc_unique = nn.ModuleList(_mlp(feature_dim, hidden, du, bias=False) for _ in range(n))
        self.enc_shared = _mlp(feature_dim, hidden, ds)
        self.self_dec = nn.ModuleList(
            _mlp(du + len(self_pairs(i, n)) * ds, hidden, feature_dim) for i in range(n))
        self.cross_dec = nn.ModuleList(
            _mlp(du + len(cross_pairs(i, n)) * ds, hidden, feature_dim) for i in range(n))

    def _check(self, f, i=None):
        if f.shape[-1] != self.feature_dim:
            raise ContractError(f"feature dim {f.shape[-1]} != {self.feature_dim}")
        if i is not None and not 0 <= i < self.num_sequences:
            raise ContractError(f"sequence index {i} out of range")

    def encode_unique(self, f_i, i: int) -> torch.Tensor:
        self._check(f_i, i)
        return self.enc_unique[i](f_i)

    def encode_shared(self, f_i, f_j) -> torch.Tensor:
        self._check(f_i)
        self._check(f_j)
        return (self.enc_shared(f_i) + self.enc_shared(f_j)) / 2

    def self_reconstruct(self, i: int, U_i, shared_with_i) -> torch.Tensor:
        n_expected = self.num_sequences - 1
        if len(shared_with_i) != n_expected:
            raise ContractError(f"SDec_{i} expects {n_expected} shared features")
        return self.self_dec[i](torch.cat([U_i, *shared_with_i], dim=-1))

    def cross_reconstruct(self, i: int, U_i, shared_without_i) -> torch.Tensor:
        if not shared_without_i and not self.cross_single_fallback:
            raise ConfigError("cross-reconstruction needs >= 3 sequences "
                              "unless the single-input fallback is enabled")
        n_expected = len(cross_pairs(i, self.num_sequences))
        if len(shared_without_i) != n_expected:
            raise ContractError(f"CDec_{i} expects {n_expected} shared features")
        return self.cross_dec[i](torch.cat([U_i, *shared_without_i], dim=-1))

    def forward(self, features, self_recon: bool = True, cross_recon: bool = True) -> DecoupledBundle:
        n = self.num_sequences
        if len(features) != n:
            raise ContractError(f"expected {n} sequence features, got {len(features)}")
        U = {i: self.encode_unique(f, i) for i, f in enumerate(features)}
        # g(f_i) is computed once and reused by every pair
        g = {i: self.enc_shared(f) for i, f in enumerate(features)}
        S = {(i, j): (g[i] + g[j]) / 2 for i, j in pair_keys(n)}
        bundle = DecoupledBundle(U, S)
        for i in range(n):
            if self_recon:
                bundle.SRF[i] = self.self_reconstruct(i, U[i], [S[p] for p in self_pairs(i, n)])
            if cross_recon:
                bundle.CRF[i] = self.cross_reconstruct(i, U[i], [S[p] for p in cross_pairs(i, n)])
        return bundle


def l1(a, b) -> torch.Tensor:
    return (a - b).abs().mean()


def drlm_losses(bundle: DecoupledBundle, targets, use_self: bool = True,
                use_cross: bool = True) -> DRLMLosses:
    """Mean over sequences of the mean absolute reconstruction error.

    A disabled term is a constant zero outside the autograd graph.
    """
    n = len(targets)
    zero = targets[0].new_zeros(())
    if use_self and len(bundle.SRF) != n:
        raise ContractError("self loss enabled but self-reconstructions are missing")
    if use_cross and len(bundle.CRF) != n:
        raise ContractError("cross loss enabled but cross-reconstructions are missing")
    ls = sum(l1(bundle.SRF[i], targets[i]) for i in range(n)) / n if use_self else zero
    lc = sum(l1(bundle.CRF[i], targets[i]) for i in range(n)) / n if use_cross else zero
    return DRLMLosses(ls, lc)
