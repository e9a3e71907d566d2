"""Offspring laws pinned to the boundary case.

A law describes one reproduction event: a random finite set of child
displacements X_1..X_nu.  All shipped laws satisfy the boundary relations

    E[sum_i exp(-X_i)] = 1      and      E[sum_i X_i exp(-X_i)] = 0,

with finite positive sigma^2 = E[sum_i X_i^2 exp(-X_i)].  Two concrete
families come pre-calibrated in closed form; arbitrary finite-support laws
are calibrated numerically by a drift/scale transform.
"""

from __future__ import annotations

import io
import math
from configparser import ConfigParser
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import CalibrationError, ConfigError, DegenerateLawError
from .numerics import float_gcd, ragged_arange, segment_sums

__all__ = [
    "OffspringLaw",
    "make_two_point",
    "make_gaussian_binary",
    "make_custom",
    "resolve_law",
    "law_from_config_text",
    "verify_boundary",
    "moment_diagnostics",
    "TWO_POINT_A",
    "TWO_POINT_Q",
    "GAUSSIAN_MU",
]

# Two-point family: two independent children, each displaced -a with
# probability q and +a with probability 1-q.  The boundary relations force
# q*exp(a) = (1-q)*exp(-a) = 1/4, i.e. exp(-a) = 2 - sqrt(3):
TWO_POINT_A = math.log(2.0 + math.sqrt(3.0))  # = arccosh(2)
TWO_POINT_Q = (2.0 - math.sqrt(3.0)) / 4.0

# Gaussian binary family: two iid Normal(mu, s^2) children with mu = s^2;
# E[2 exp(-X)] = 2 exp(-mu + s^2/2) = 1 forces mu = s^2 = 2 log 2.
GAUSSIAN_MU = 2.0 * math.log(2.0)

_CALIBRATION_TOL = 1e-10


@dataclass(frozen=True)
class OffspringLaw:
    """Immutable reproduction law.

    params by family:
      two-point        (a, q)
      gaussian-binary  (m, mu, s2)
      custom           (beta, c) of the calibrating transform x -> beta*x + c

    outcome_probs/outcome_disps hold the finite outcome list (ordered child
    displacement tuples) when the law has one, else None.
    """

    kind: str
    params: tuple
    sigma2: float
    lattice_span: float
    outcome_probs: tuple | None = None
    outcome_disps: tuple | None = None

    # -- structure ---------------------------------------------------------

    @property
    def is_lattice(self) -> bool:
        return self.lattice_span > 0.0

    @property
    def has_finite_support(self) -> bool:
        return self.outcome_probs is not None

    def mean_offspring(self) -> float:
        if self.kind == "gaussian-binary":
            return float(self.params[0])
        return math.fsum(
            p * len(d) for p, d in zip(self.outcome_probs, self.outcome_disps)
        )

    def max_outcome_weight(self) -> float:
        """sup over outcomes of sum_i exp(-x_i); rejection envelope."""
        if not self.has_finite_support:
            raise ValueError("finite-support law required")
        return max(
            (math.fsum(math.exp(-d) for d in disp) for disp in self.outcome_disps),
            default=0.0,
        )

    # -- boundary relations ------------------------------------------------

    def boundary_residuals(self) -> tuple:
        """Exact residuals of the two boundary relations."""
        if self.kind == "gaussian-binary":
            m, mu, s2 = self.params
            w = m * math.exp(-mu + s2 / 2.0)
            return (w - 1.0, w * (mu - s2))
        r1 = math.fsum(
            p * math.exp(-d)
            for p, disp in zip(self.outcome_probs, self.outcome_disps)
            for d in disp
        )
        r2 = math.fsum(
            p * d * math.exp(-d)
            for p, disp in zip(self.outcome_probs, self.outcome_disps)
            for d in disp
        )
        return (r1 - 1.0, r2)

    # -- sampling ----------------------------------------------------------

    def sample_children(self, rng) -> np.ndarray:
        counts, disp = self.sample_children_batch(1, rng)
        return disp

    def sample_children_batch(self, n, rng):
        """Children for n independent reproduction events.

        Returns (counts, disp): counts[i] children for event i, and the flat
        displacement array in event order.
        """
        if self.kind == "gaussian-binary":
            m, mu, s2 = self.params
            m = int(m)
            counts = np.full(n, m, dtype=np.int64)
            disp = mu + math.sqrt(s2) * rng.standard_normal(n * m)
            return counts, disp
        if self.kind == "two-point":
            a, q = self.params
            u = rng.random(2 * n)
            disp = np.where(u < q, -a, a)
            return np.full(n, 2, dtype=np.int64), disp
        probs, lens, flat, offsets = _finite_tables(self)
        idx = rng.choice(len(probs), size=n, p=probs)
        counts = lens[idx]
        pos = np.repeat(offsets[idx], counts) + ragged_arange(counts)
        return counts, flat[pos]

    # -- spine step (the size-biased walk increment) -------------------------

    def spine_step_support(self):
        """(values, probs) of the walk increment under the e^{-x} tilt."""
        if not self.has_finite_support:
            raise ValueError("finite-support law required")
        if self.kind == "two-point":
            # closed form: the tilt sends q e^{a} and (1-q) e^{-a} to 1/2
            # each; going through exp(log(.)) would leave 1-ulp residue in
            # every exact recursion downstream
            a, _ = self.params
            return np.array([-a, a]), np.array([0.5, 0.5])
        agg = {}
        for p, disp in zip(self.outcome_probs, self.outcome_disps):
            for d in disp:
                agg[d] = agg.get(d, 0.0) + p * math.exp(-d)
        values = np.array(sorted(agg), dtype=np.float64)
        probs = np.array([agg[v] for v in sorted(agg)], dtype=np.float64)
        return values, probs

    def spine_step_levels(self):
        """Lattice version of spine_step_support, in units of the span."""
        if not self.is_lattice:
            raise ValueError("lattice law required")
        values, probs = self.spine_step_support()
        levels = np.rint(values / self.lattice_span).astype(np.int64)
        return levels, probs

    def sample_spine_steps(self, n, rng) -> np.ndarray:
        if self.kind == "gaussian-binary":
            _, _, s2 = self.params
            return math.sqrt(s2) * rng.standard_normal(n)
        if self.kind == "two-point":
            # tilted increment is -a or +a with probability 1/2 each
            a, _ = self.params
            return a * (2.0 * rng.integers(0, 2, size=n) - 1.0)
        values, probs = _spine_tables(self)
        return values[rng.choice(len(values), size=n, p=probs)]

    # -- serialization -------------------------------------------------------

    def to_config_text(self) -> str:
        lines = ["[law]", f"family = {self.kind}"]
        if self.kind == "two-point":
            a, q = self.params
            lines += [f"a = {a:.17g}", f"q = {q:.17g}"]
        elif self.kind == "gaussian-binary":
            m, mu, s2 = self.params
            lines += [f"m = {int(m)}", f"mu = {mu:.17g}", f"s2 = {s2:.17g}"]
        else:
            beta, c = self.params
            lines += [f"beta = {beta:.17g}", f"c = {c:.17g}"]
            for i, (p, disp) in enumerate(zip(self.outcome_probs, self.outcome_disps)):
                body = " ".join(f"{d:.17g}" for d in disp)
                lines.append(f"outcome_{i} = {p:.17g} : {body}")
        return "\n".join(lines) + "\n"


@lru_cache(maxsize=32)
def _finite_tables(law):
    probs = np.array(law.outcome_probs, dtype=np.float64)
    probs = probs / probs.sum()
    lens = np.array([len(d) for d in law.outcome_disps], dtype=np.int64)
    flat = np.array(
        [d for disp in law.outcome_disps for d in disp], dtype=np.float64
    )
    offsets = np.concatenate(([0], np.cumsum(lens)))[:-1]
    return probs, lens, flat, offsets


@lru_cache(maxsize=32)
def _spine_tables(law):
    return law.spine_step_support()


# -- constructors ------------------------------------------------------------


def make_two_point() -> OffspringLaw:
    """Lattice law: two children, each -a w.p. q and +a w.p. 1-q."""
    a, q = TWO_POINT_A, TWO_POINT_Q
    outcomes = ((-a, -a), (-a, a), (a, -a), (a, a))
    probs = (q * q, q * (1 - q), (1 - q) * q, (1 - q) * (1 - q))
    return OffspringLaw(
        kind="two-point",
        params=(a, q),
        sigma2=a * a,
        lattice_span=a,
        outcome_probs=probs,
        outcome_disps=outcomes,
    )


def make_gaussian_binary() -> OffspringLaw:
    """Non-lattice law: two iid Normal(2 log 2, 2 log 2) children."""
    return OffspringLaw(
        kind="gaussian-binary",
        params=(2.0, GAUSSIAN_MU, GAUSSIAN_MU),
        sigma2=GAUSSIAN_MU,
        lattice_span=0.0,
    )


def _tilt_stats(probs, disps, beta):
    """Stable (log M0, M1/M0) for M_k(beta) = sum p d^k exp(-beta d)."""
    pairs = [(p, d) for p, disp in zip(probs, disps) for d in disp]
    expo = [-beta * d for _, d in pairs]
    shift = max(expo)
    w = [p * math.exp(x - shift) for (p, _), x in zip(pairs, expo)]
    tot = math.fsum(w)
    ratio = math.fsum(wi * d for wi, (_, d) in zip(w, pairs)) / tot
    return shift + math.log(tot), ratio


def make_custom(probs, disps, calibrate=True) -> OffspringLaw:
    """Finite-support law from (probability, displacement-tuple) outcomes.

    With calibrate=True the displacements are mapped x -> beta*x + c with
    (beta, c) solving both boundary relations to 1e-10.
    """
    probs = tuple(float(p) for p in probs)
    disps = tuple(tuple(float(d) for d in disp) for disp in disps)
    if len(probs) != len(disps) or not probs:
        raise ConfigError("probs and outcome tuples must align and be non-empty")
    if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
        raise ConfigError("outcome probabilities must be >= 0 and sum to 1")
    if all(len(d) == 0 for d in disps):
        raise DegenerateLawError("law yields empty child sets with probability 1")

    beta, c = 1.0, 0.0
    if calibrate:
        beta, c = _calibrate(probs, disps)
    new_disps = tuple(tuple(beta * d + c for d in disp) for disp in disps)

    r1 = math.fsum(
        p * math.exp(-d) for p, disp in zip(probs, new_disps) for d in disp
    )
    r2 = math.fsum(
        p * d * math.exp(-d) for p, disp in zip(probs, new_disps) for d in disp
    )
    if calibrate and (abs(r1 - 1.0) > _CALIBRATION_TOL or abs(r2) > _CALIBRATION_TOL):
        raise CalibrationError(
            f"calibration residuals ({r1 - 1.0:.3g}, {r2:.3g}) exceed tolerance"
        )
    if not calibrate and (abs(r1 - 1.0) > 1e-8 or abs(r2) > 1e-8):
        raise ConfigError(
            f"stored custom law violates the boundary relations "
            f"(residuals {r1 - 1.0:.3g}, {r2:.3g})"
        )
    sigma2 = math.fsum(
        p * d * d * math.exp(-d) for p, disp in zip(probs, new_disps) for d in disp
    )
    span = float_gcd([d for disp in new_disps for d in disp])
    return OffspringLaw(
        kind="custom",
        params=(beta, c),
        sigma2=sigma2,
        lattice_span=span,
        outcome_probs=probs,
        outcome_disps=new_disps,
    )


def _calibrate(probs, disps):
    """Solve for (beta, c).

    With phi(beta) = log M0(beta) (convex), both relations reduce to
    g(beta) = beta*M1/M0 + phi(beta) = phi(beta) - beta*phi'(beta) = 0 and
    c = phi(beta).  g is strictly decreasing on beta > 0 with
    g(0+) = log(mean offspring count) > 0, so one positive root exists for
    any supercritical non-degenerate support.
    """

    def g(beta):
        logm0, ratio = _tilt_stats(probs, disps, beta)
        return beta * ratio + logm0

    # g(0+) = log(mean offspring); probing g at tiny beta instead would
    # underflow to 0 and let a critical (mean-one) law through with a
    # spurious beta -> 0 root and sigma2 -> 0
    if math.fsum(p * len(d) for p, d in zip(probs, disps)) <= 1.0:
        raise CalibrationError("law must be supercritical to admit a boundary tilt")
    lo, hi = 1e-12, 1.0
    for _ in range(80):
        if g(hi) < 0.0:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise CalibrationError("no boundary tilt exists for this support")
    beta = brentq(g, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200)
    logm0, _ = _tilt_stats(probs, disps, beta)
    return beta, logm0


_NAMED_LAWS = {
    "two-point": make_two_point,
    "two_point": make_two_point,
    "gaussian-binary": make_gaussian_binary,
    "gaussian_binary": make_gaussian_binary,
}


def law_from_config_text(text: str) -> OffspringLaw:
    cp = ConfigParser()
    cp.read_file(io.StringIO(text))
    if not cp.has_section("law"):
        raise ConfigError("law config needs a [law] section")
    sec = dict(cp.items("law"))
    family = sec.pop("family", None)
    if family in ("two-point", "two_point"):
        _expect_keys(sec, {"a", "q"})
        return make_two_point()
    if family in ("gaussian-binary", "gaussian_binary"):
        _expect_keys(sec, {"m", "mu", "s2"})
        return make_gaussian_binary()
    if family == "custom":
        probs, disps = [], []
        for key in sorted(k for k in sec if k.startswith("outcome_")):
            head, _, body = sec[key].partition(":")
            probs.append(float(head))
            disps.append(tuple(float(t) for t in body.split()))
        if not probs:
            raise ConfigError("custom law config lists no outcomes")
        # outcomes are stored post-transform; do not re-calibrate
        return make_custom(probs, disps, calibrate=False)
    raise ConfigError(f"unknown law family {family!r}")


def _expect_keys(sec, allowed):
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown law config key {sorted(unknown)[0]!r}")


def resolve_law(spec: str) -> OffspringLaw:
    """Law from a family name or a path to a law config block."""
    if spec in _NAMED_LAWS:
        return _NAMED_LAWS[spec]()
    try:
        with open(spec, "r", encoding="utf-8") as fh:
            return law_from_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"unknown law {spec!r} (not a name or readable file)") from exc


# -- Monte Carlo verification -------------------------------------------------


@dataclass(frozen=True)
class BoundaryReport:
    mass_mean: float
    mass_se: float
    drift_mean: float
    drift_se: float
    residual_mass: float
    residual_drift: float
    samples: int


def _w1_z1_samples(law, samples, rng):
    counts, disp = law.sample_children_batch(samples, rng)
    ids = np.repeat(np.arange(samples), counts)
    e = np.exp(-disp)
    w1 = segment_sums(e, ids, samples)
    xw = segment_sums(disp * e, ids, samples)
    zpos = segment_sums(np.maximum(disp, 0.0) * e, ids, samples)
    return w1, xw, zpos


def verify_boundary(law, samples, rng) -> BoundaryReport:
    """Monte Carlo check of both boundary relations, with exact residuals."""
    if law.has_finite_support and law.mean_offspring() == 0.0:
        raise DegenerateLawError("law yields empty child sets with probability 1")
    w1, xw, _ = _w1_z1_samples(law, samples, rng)
    if not np.any(w1 > 0.0):
        raise DegenerateLawError("all sampled child sets were empty")
    r1, r2 = law.boundary_residuals()
    return BoundaryReport(
        mass_mean=float(np.mean(w1)),
        mass_se=float(np.std(w1, ddof=1) / math.sqrt(samples)),
        drift_mean=float(np.mean(xw)),
        drift_se=float(np.std(xw, ddof=1) / math.sqrt(samples)),
        residual_mass=r1,
        residual_drift=r2,
        samples=samples,
    )


@dataclass(frozen=True)
class MomentDiagnostics:
    wlog2_mean: float
    wlog2_se: float
    zlog_mean: float
    zlog_se: float
    tail_index: float
    looks_finite: bool
    samples: int


def moment_diagnostics(law, samples, rng) -> MomentDiagnostics:
    """Estimates of E[W1 log+^2 W1] and E[Z1 log+ Z1] with a tail heuristic.

    The boundedness flag uses a Hill estimate on the top 1% of the
    W1 log+^2 W1 sample: a tail index above 1 (or an essentially bounded
    sample) is consistent with the finite-moment conditions.
    """
    w1, _, zpos = _w1_z1_samples(law, samples, rng)
    logp = np.log(np.maximum(w1, 1.0))
    wstat = w1 * logp * logp
    zstat = zpos * np.log(np.maximum(zpos, 1.0))
    k = max(10, samples // 100)
    top = np.sort(wstat)[-k:]
    floor = max(top[0], 1e-12)
    if top[-1] <= 2.0 * floor:
        tail_index = math.inf
    else:
        ratios = np.log(np.maximum(top, floor) / floor)
        tail_index = 1.0 / max(float(np.mean(ratios)), 1e-12)
    return MomentDiagnostics(
        wlog2_mean=float(np.mean(wstat)),
        wlog2_se=float(np.std(wstat, ddof=1) / math.sqrt(samples)),
        zlog_mean=float(np.mean(zstat)),
        zlog_se=float(np.std(zstat, ddof=1) / math.sqrt(samples)),
        tail_index=tail_index,
        looks_finite=bool(tail_index > 1.0),
        samples=samples,
    )
