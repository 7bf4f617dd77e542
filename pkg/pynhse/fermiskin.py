"""
Many-fermion density of skin-deformed single-particle bases.

Sites are indexed `x = 1..L` throughout this module; `SingleParticleBasis.vectors` row `x - 1`
holds site `x`.
"""

from __future__ import annotations

import json
import logging
import math
import typing as t
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import mpmath
import numpy as np
import numpy.typing as npt
import polars
import scipy.optimize
import scipy.special

from pynhse import ComplexArray, RealArray
from pynhse.exceptions import BruteForceCapError, SingularOverlapError

logger = logging.getLogger(__name__)

EXTENDED_PRECISION_COND = 1e12
SINGULAR_COND = 1e40
EXTENDED_PRECISION_DPS = 50
BRUTEFORCE_SITE_CAP = 12
BETA_CAP = 50.0
BETA_FLOOR = 1e-6


@dataclass(frozen=True, slots=True)
class SingleParticleBasis:
    """`N` single-particle vectors over `L` sites, stored column-wise as an `L x N` array."""

    vectors: ComplexArray
    kappa: float = 0.0

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[1] > self.vectors.shape[0]:
            raise ValueError(
                f"Basis must be an L x N array with N <= L, received {self.vectors.shape}"
            )

    @property
    def L(self) -> int:  # noqa: D102
        return self.vectors.shape[0]

    @property
    def N(self) -> int:  # noqa: D102
        return self.vectors.shape[1]

    @property
    def sites(self) -> RealArray:  # noqa: D102
        return np.arange(1, self.L + 1, dtype=float)

    def truncate(self, N: int) -> SingleParticleBasis:
        """Keep only the first `N` vectors."""
        if not 1 <= N <= self.N:
            raise ValueError(f"Cannot occupy {N} of {self.N} available states.")

        return SingleParticleBasis(self.vectors[:, :N], self.kappa)


@dataclass(frozen=True, slots=True)
class OverlapMatrix:
    """Hermitian Gram matrix `B_mn` of the occupied deformed states."""

    B: ComplexArray
    kappa: float

    @property
    def N(self) -> int:  # noqa: D102
        return self.B.shape[0]

    @property
    def eigenvalues(self) -> RealArray:
        """Eigenvalues `b_nu` in descending order."""
        return np.linalg.eigvalsh(self.B)[::-1]

    @property
    def condition_number(self) -> float:  # noqa: D102
        b = self.eigenvalues
        return float(b[0] / b[-1]) if b[-1] > 0 else math.inf


class OverlapDensity(t.NamedTuple):  # noqa: D101
    n_x: RealArray
    condition_number: float
    extended_precision: bool


class FermiDiracFit(t.NamedTuple):  # noqa: D101
    beta: float
    mu: float
    residual: float
    beta_capped: bool


@dataclass(slots=True)
class SkinDecomposition:
    """
    Eigen-mode resolution of the many-fermion density.

    `mode_densities[nu]` is the density of the `nu`-th effective particle, ordered by descending
    overlap eigenvalue `b[nu]`; each sums to 1 and together they sum to `total`.
    """

    b: RealArray
    vectors: ComplexArray
    mode_densities: RealArray
    total: RealArray
    kappa: float
    condition_number: float
    extended_precision: bool = False
    fit: FermiDiracFit | None = field(default=None)

    def to_frame(self) -> polars.DataFrame:
        """Tabulate `(x, n_x, n_1 .. n_N)` with one row per site."""
        columns = {"x": np.arange(1, self.total.size + 1), "n_x": self.total}
        for nu, row in enumerate(self.mode_densities, start=1):
            columns[f"n_{nu}"] = row

        return polars.DataFrame(columns)

    def fit_report(self) -> dict[str, float | bool | None]:
        """Summarize the Fermi-Dirac fit against the deformation strength."""
        report: dict[str, float | bool | None] = {
            "kappa": self.kappa,
            "condition_number": self.condition_number,
            "extended_precision": self.extended_precision,
        }
        if self.fit is not None:
            report.update(
                {
                    "beta_eff": self.fit.beta,
                    "mu": self.fit.mu,
                    "residual": self.fit.residual,
                    "beta_capped": self.fit.beta_capped,
                    "beta_over_kappa": self.fit.beta / self.kappa if self.kappa else None,
                }
            )

        return report

    def to_json(self, filepath: Path) -> None:  # noqa: D102
        with filepath.open("w") as f:
            json.dump(self.fit_report(), f, indent=4)


def hn_basis(L: int, N: int | None = None) -> SingleParticleBasis:
    """Build the open-chain sine basis `phi_n(x) = sqrt(2 / (L + 1)) sin(pi n x / (L + 1))`."""
    if L < 1:
        raise ValueError("At least one site is required.")

    N = L if N is None else N
    if not 1 <= N <= L:
        raise ValueError(f"Cannot occupy {N} states on {L} sites.")

    x = np.arange(1, L + 1)[:, np.newaxis]
    n = np.arange(1, N + 1)[np.newaxis, :]
    vectors = np.sqrt(2 / (L + 1)) * np.sin(np.pi * n * x / (L + 1))
    return SingleParticleBasis(vectors.astype(np.complex128))


def skin_deform(basis: SingleParticleBasis, kappa: float) -> SingleParticleBasis:
    """Apply the skin deformation `phi(x) -> exp(-kappa x) phi(x)` to every vector."""
    if not np.isfinite(kappa):
        raise ValueError("Deformation strength must be finite.")

    factor = np.exp(-kappa * basis.sites)[:, np.newaxis]
    return SingleParticleBasis(basis.vectors * factor, basis.kappa + kappa)


def overlap_matrix(basis: SingleParticleBasis, N: int | None = None) -> OverlapMatrix:
    """Gram matrix `B_mn = sum_x conj(phi_m(x)) phi_n(x)` of the first `N` deformed vectors."""
    phi = basis.truncate(basis.N if N is None else N).vectors
    b = phi.conj().T @ phi
    return OverlapMatrix(B=(b + b.conj().T) / 2, kappa=basis.kappa)


def _cosine_sum(c: RealArray, k: npt.NDArray[np.int_], kappa: float, L: int) -> RealArray:
    """Closed form of `sum_{x=1..L} exp(-2 kappa x) cos(c x)` for `c = k pi / (L + 1)`."""
    s = np.exp(-2 * kappa * (L + 1))
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    num = np.cos(c) - np.exp(-2 * kappa) + sign * s * (np.cos(c) - np.exp(2 * kappa))
    den = 4 * (np.sinh(kappa) ** 2 + np.sin(c / 2) ** 2)
    out = np.empty_like(c)
    diag = k == 0
    # Geometric series, 1 - r^n written through expm1 for small kappa
    out[diag] = np.exp(-2 * kappa) * np.expm1(-2 * kappa * L) / np.expm1(-2 * kappa)
    out[~diag] = num[~diag] / den[~diag]
    return out


def overlap_matrix_hn_analytic(L: int, kappa: float, N: int | None = None) -> OverlapMatrix:
    """
    Evaluate the skin-deformed sine-basis overlap matrix in closed form.

    `B_mn = (S((m - n) theta) - S((m + n) theta)) / (L + 1)` with `theta = pi / (L + 1)` and `S`
    the finite exponentially damped cosine sum. `kappa = 0` returns the identity.
    """
    N = L if N is None else N
    if not 1 <= N <= L:
        raise ValueError(f"Cannot occupy {N} states on {L} sites.")
    if kappa == 0:
        return OverlapMatrix(B=np.eye(N, dtype=np.complex128), kappa=0.0)

    m = np.arange(1, N + 1)[:, np.newaxis]
    n = np.arange(1, N + 1)[np.newaxis, :]
    theta = np.pi / (L + 1)
    k_minus = np.abs(m - n)
    k_plus = m + n
    s_minus = _cosine_sum(k_minus * theta, k_minus, kappa, L)
    s_plus = _cosine_sum(k_plus * theta, k_plus, kappa, L)

    return OverlapMatrix(B=((s_minus - s_plus) / (L + 1)).astype(np.complex128), kappa=kappa)


def _modes_float(phi: ComplexArray) -> tuple[RealArray, ComplexArray, RealArray, float]:
    # phi = U S V^dag gives B = V S^2 V^dag, and phi v_nu / sqrt(b_nu) is column nu of U
    u, s, vh = np.linalg.svd(phi, full_matrices=False)
    b = s**2
    cond = float(b[0] / b[-1]) if b[-1] > 0 else math.inf
    return b, vh.conj().T, (np.abs(u) ** 2).T, cond


def _modes_extended(phi: ComplexArray) -> tuple[RealArray, ComplexArray, RealArray]:
    with mpmath.workdps(EXTENDED_PRECISION_DPS):
        phi_mp = mpmath.matrix(phi.tolist())
        b_mp = phi_mp.H * phi_mp
        e, q = mpmath.eigh(b_mp)
        n_states = phi.shape[1]
        order = sorted(range(n_states), key=lambda i: e[i], reverse=True)
        if e[order[-1]] <= 0:
            raise SingularOverlapError(
                "Overlap matrix is not positive definite at extended precision."
            )

        proj = phi_mp * q
        densities = np.array(
            [
                [float(abs(proj[x, nu]) ** 2 / e[nu]) for x in range(phi.shape[0])]
                for nu in order
            ]
        )
        b = np.array([float(e[nu]) for nu in order])
        v = np.array([[complex(q[m, nu]) for nu in order] for m in range(n_states)])

    return b, v, densities


def _resolve_modes(
    basis: SingleParticleBasis, overlap: OverlapMatrix | None
) -> tuple[RealArray, ComplexArray, RealArray, float, bool]:
    if overlap is not None and overlap.N != basis.N:
        raise ValueError(f"Overlap matrix covers {overlap.N} states, basis holds {basis.N}.")

    b, v, densities, cond = _modes_float(basis.vectors)
    if cond <= EXTENDED_PRECISION_COND:
        return b, v, densities, cond, False

    logger.info(
        "Overlap condition number %.3g exceeds %.0e, switching to %d digit precision",
        cond,
        EXTENDED_PRECISION_COND,
        EXTENDED_PRECISION_DPS,
    )
    b_ext, v_ext, densities = _modes_extended(basis.vectors)
    cond = float(b_ext[0] / b_ext[-1])
    if cond > SINGULAR_COND:
        raise SingularOverlapError(
            f"Overlap matrix is numerically singular (condition number {cond:.3g})."
        )

    return b_ext, v_ext, densities, cond, True


def density_from_overlap(
    basis: SingleParticleBasis, overlap: OverlapMatrix | None = None, N: int | None = None
) -> OverlapDensity:
    """
    Compute `n_x = sum_mn conj(phi_m(x)) [B^-1]_mn phi_n(x)` for the first `N` deformed vectors.

    The density only depends on the span of the deformed vectors, so it is read off the left
    singular vectors of `phi` rather than by inverting `B`; the error then grows with
    `sqrt(cond(B))`. If the condition number exceeds `EXTENDED_PRECISION_COND` the Gram matrix
    and its eigenpairs are recomputed with `mpmath`; conditions beyond `SINGULAR_COND` raise
    `SingularOverlapError`. A supplied `overlap` is only checked for size.
    """
    if N is not None:
        basis = basis.truncate(N)
        if overlap is not None and overlap.N != N:
            overlap = None

    _, _, densities, cond, extended = _resolve_modes(basis, overlap)
    return OverlapDensity(densities.sum(axis=0), cond, extended)


def mode_decomposition(
    basis: SingleParticleBasis, overlap: OverlapMatrix | None = None
) -> SkinDecomposition:
    """Resolve the density into `n_nu(x) = |v_nu^dag phi(x)|^2 / b_nu`, by descending `b_nu`."""
    b, v, densities, cond, extended = _resolve_modes(basis, overlap)
    return SkinDecomposition(
        b=b,
        vectors=v,
        mode_densities=densities,
        total=densities.sum(axis=0),
        kappa=basis.kappa,
        condition_number=cond,
        extended_precision=extended,
    )


def slater_density_bruteforce(basis: SingleParticleBasis, N: int | None = None) -> RealArray:
    """
    Site density of the Slater determinant of the first `N` vectors, by explicit enumeration.

    Every occupation configuration's amplitude is the determinant of the occupied rows; `n_x` is
    the probability-weighted fraction of configurations occupying `x`.
    """
    if basis.L > BRUTEFORCE_SITE_CAP:
        raise BruteForceCapError(
            f"Brute-force enumeration is capped at L={BRUTEFORCE_SITE_CAP}, received L={basis.L}."
        )

    phi = basis.truncate(basis.N if N is None else N).vectors
    n_occ = phi.shape[1]
    n_x = np.zeros(basis.L)
    total = 0.0
    for config in combinations(range(basis.L), n_occ):
        weight = abs(np.linalg.det(phi[list(config), :])) ** 2
        n_x[list(config)] += weight
        total += weight

    if total == 0:
        raise SingularOverlapError("Occupied vectors are linearly dependent.")

    return n_x / total


def fermi_dirac(x: RealArray, beta: float, mu: float) -> RealArray:
    """Evaluate `1 / (1 + exp(beta (x - mu)))`."""
    return scipy.special.expit(-beta * (np.asarray(x, dtype=float) - mu))


def fit_fermi_dirac(
    n_x: RealArray,
    sites: RealArray | None = None,
    beta_cap: float = BETA_CAP,
    mu: float | None = None,
) -> FermiDiracFit:
    """
    Least-squares fit of a Fermi-Dirac profile over `(beta > 0, mu)`.

    Local fits are seeded from a fixed grid (`beta` log-spaced over `[0.1, 20]`, `mu` over
    `[0, L]`, both clipped into the fit bounds) and the lowest-cost solution is kept, so the
    result is deterministic. `sites` defaults to `1..L`; `residual` is the RMS deviation.

    Passing `mu` holds the chemical potential fixed and fits `beta` alone.
    """
    n_x = np.asarray(n_x, dtype=float)
    if n_x.size < 4:
        raise ValueError("At least 4 sites are required for a Fermi-Dirac fit.")
    if beta_cap <= BETA_FLOOR:
        raise ValueError(f"beta_cap must exceed {BETA_FLOOR}, received {beta_cap}.")

    L = n_x.size
    x = np.arange(1, L + 1, dtype=float) if sites is None else np.asarray(sites, dtype=float)
    lower = np.array([BETA_FLOOR, x.min() - L])
    upper = np.array([beta_cap, x.max() + L])

    def residuals(p: RealArray) -> RealArray:
        return fermi_dirac(x, p[0], p[1] if mu is None else mu) - n_x

    beta_seeds = np.unique(np.clip(np.geomspace(0.1, 20, 8), lower[0], upper[0]))
    mu_seeds = np.linspace(0, L, 9) if mu is None else np.array([np.nan])

    best: scipy.optimize.OptimizeResult | None = None
    for beta0 in beta_seeds:
        for mu0 in mu_seeds:
            n_free = 2 if mu is None else 1
            res = scipy.optimize.least_squares(
                residuals,
                x0=np.clip([beta0, mu0], lower, upper)[:n_free],
                bounds=(lower[:n_free], upper[:n_free]),
                xtol=1e-14,
                ftol=1e-14,
                gtol=1e-14,
            )
            if best is None or res.cost < best.cost:
                best = res

    assert best is not None
    beta = float(best.x[0])
    mu = float(best.x[1]) if mu is None else float(mu)
    rms = float(np.sqrt(np.mean(best.fun**2)))
    capped = beta >= beta_cap * (1 - 1e-6)
    if capped:
        logger.info("Fermi-Dirac fit hit the beta cap (%.1f), residual %.3g", beta_cap, rms)

    return FermiDiracFit(beta=beta, mu=mu, residual=rms, beta_capped=capped)


def hn_fermi_skin(L: int, N: int, kappa: float, fit: bool = True) -> SkinDecomposition:
    """Run the Hatano-Nelson Fermi-skin pipeline: sine basis, deformation, overlap, modes, fit."""
    basis = skin_deform(hn_basis(L, N), kappa)
    decomposition = mode_decomposition(basis, overlap_matrix_hn_analytic(L, kappa, N))
    if fit and L >= 4:
        decomposition.fit = fit_fermi_dirac(decomposition.total)

    logger.info("Fermi skin for L=%d, N=%d, kappa=%.4g computed", L, N, kappa)
    return decomposition


class TemperatureScaling(t.NamedTuple):
    """
    Fitted inverse temperature across a sweep of deformation strengths.

    `slope` is the least-squares `d beta / d kappa`; `offset` its intercept.
    """

    kappas: RealArray
    betas: RealArray
    slope: float
    offset: float

    @property
    def beta_over_kappa(self) -> RealArray:  # noqa: D102
        return self.betas / self.kappas

    def to_frame(self) -> polars.DataFrame:  # noqa: D102
        return polars.DataFrame(
            {"kappa": self.kappas, "beta_eff": self.betas, "beta_over_kappa": self.beta_over_kappa}
        )


def hn_temperature_scaling(L: int, N: int, kappas: t.Sequence[float]) -> TemperatureScaling:
    """
    Fit the Hatano-Nelson Fermi skin at each `kappa` and regress `beta_eff` linearly on `kappa`.

    Once `exp(kappa) >> N` the profile is a sharp edge whose inverse temperature grows as
    `beta_eff ~ 4 kappa + offset`, with an `L`, `N` dependent offset; below that the edge is broad
    and `beta_eff / kappa` is well under 4.
    """
    k = np.asarray(kappas, dtype=float)
    if k.size < 2 or np.any(k <= 0):
        raise ValueError("At least two positive kappa values are required.")

    betas = []
    for kappa in k:
        fit = hn_fermi_skin(L, N, float(kappa)).fit
        if fit is None:
            raise ValueError("At least 4 sites are required for a Fermi-Dirac fit.")
        if fit.beta_capped:
            logger.warning("Fit at kappa=%.4g is capped, slope is a lower bound", kappa)
        betas.append(fit.beta)

    slope, offset = np.polyfit(k, betas, 1)
    return TemperatureScaling(k, np.array(betas), float(slope), float(offset))
