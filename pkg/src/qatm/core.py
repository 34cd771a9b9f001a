"""The quality-aware match measure and its gradients.

Given the pairwise similarity tensor rho between a template grid T and a
search grid S, the match quality of a pair (t, s) is the product of two
soft-ranking likelihoods:

    L(t|s) = exp(a*rho[t,s]) / sum over t' of exp(a*rho[t',s])
    L(s|t) = exp(a*rho[t,s]) / sum over s' of exp(a*rho[t,s'])
    score(t, s) = L(t|s) * L(s|t)

Only mutually distinctive pairs score near 1: if a template cell has N
near-equal matches in the search image the score drops to ~1/N, and a pair
that is one of M-by-N homogeneous matches drops to ~1/(M*N). Collapsing the
score tensor with a max over one side's axes gives that side's quality map.

The measure is smooth in both the temperature and the similarities, so it
can sit inside a trained model; explicit gradients are provided and checked
against finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_ops import grouped_softmax

__all__ = [
    "DEFAULT_ALPHA",
    "QatmTensor",
    "likelihoods",
    "quality_maps",
    "qatm_grad_alpha",
    "qatm_grad_rho",
]

# Discernibility peak for typical deep-feature cosine statistics; see
# calibration module for how to derive a value for other feature stacks.
DEFAULT_ALPHA = 28.4

_TEMPLATE_AXES = (0, 1)
_SEARCH_AXES = (2, 3)


@dataclass(frozen=True)
class QatmTensor:
    """Pairwise match scores and their two likelihood factors.

    All three arrays have shape (Ht, Wt, Hs, Ws). ``l_t_given_s`` sums to 1
    over the template axes for each search cell; ``l_s_given_t`` sums to 1
    over the search axes for each template cell; ``qatm`` is their
    elementwise product.
    """

    l_t_given_s: np.ndarray
    l_s_given_t: np.ndarray
    qatm: np.ndarray


def _check_rho(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64)
    if rho.ndim != 4:
        raise ValueError(f"similarity tensor must be 4-D (Ht, Wt, Hs, Ws), got {rho.shape}")
    if rho.size == 0:
        raise ValueError("similarity tensor is empty")
    if not np.isfinite(rho).all():
        raise ValueError("similarity tensor contains NaN or Inf")
    return rho


def likelihoods(rho: np.ndarray, alpha: float = DEFAULT_ALPHA) -> QatmTensor:
    """Both soft-ranking factors and their product for every (t, s) pair."""
    rho = _check_rho(rho)
    l_t_given_s = grouped_softmax(rho, _TEMPLATE_AXES, alpha)
    l_s_given_t = grouped_softmax(rho, _SEARCH_AXES, alpha)
    return QatmTensor(l_t_given_s, l_s_given_t, l_t_given_s * l_s_given_t)


def quality_maps(q: QatmTensor) -> tuple[np.ndarray, np.ndarray]:
    """Collapse pairwise scores into per-cell quality maps.

    Returns ``(s_map, t_map)``: ``s_map[k, l]`` is the best score any
    template cell achieves against search cell (k, l), shape (Hs, Ws), and
    ``t_map`` the mirror image over the template grid, shape (Ht, Wt).
    """
    return q.qatm.max(axis=_TEMPLATE_AXES), q.qatm.max(axis=_SEARCH_AXES)


def _softmax_alpha_derivative(p: np.ndarray, rho: np.ndarray, axes) -> np.ndarray:
    # d p_i / d alpha = p_i * (rho_i - sum_j p_j rho_j) within the group
    weighted = (p * rho).sum(axis=axes, keepdims=True)
    return p * (rho - weighted)


def qatm_grad_alpha(rho: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """d score(t, s) / d alpha for every pair, same shape as ``rho``.

    Product rule over the two factors, each differentiated through the
    softmax: dL/da = L * (rho - E_L[rho]) with the expectation taken over
    that factor's own group.
    """
    rho = _check_rho(rho)
    q = likelihoods(rho, alpha)
    da_t = _softmax_alpha_derivative(q.l_t_given_s, rho, _TEMPLATE_AXES)
    da_s = _softmax_alpha_derivative(q.l_s_given_t, rho, _SEARCH_AXES)
    return da_t * q.l_s_given_t + q.l_t_given_s * da_s


def qatm_grad_rho(
    rho: np.ndarray, alpha: float = DEFAULT_ALPHA, upstream: np.ndarray | None = None
) -> np.ndarray:
    """Vector-Jacobian product of the score tensor with respect to ``rho``.

    ``upstream`` is the gradient flowing into each score entry (defaults to
    all ones). Returns d sum(upstream * score) / d rho, same shape as rho.
    Both softmax groupings contribute: each factor's Jacobian is applied to
    the upstream times the other factor.
    """
    rho = _check_rho(rho)
    if upstream is None:
        upstream = np.ones_like(rho)
    else:
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != rho.shape:
            raise ValueError(
                f"upstream shape {upstream.shape} does not match rho shape {rho.shape}"
            )
    q = likelihoods(rho, alpha)

    def vjp_through(p: np.ndarray, partner: np.ndarray, axes) -> np.ndarray:
        # For y = softmax(alpha * rho) over `axes` and scalar J = <u, y * partner>:
        # dJ/drho = alpha * p * (u * partner - sum_group(u * partner * p))
        u = upstream * partner
        inner = (u * p).sum(axis=axes, keepdims=True)
        return alpha * p * (u - inner)

    return vjp_through(q.l_t_given_s, q.l_s_given_t, _TEMPLATE_AXES) + vjp_through(
        q.l_s_given_t, q.l_t_given_s, _SEARCH_AXES
    )
