"""Certificates that ``Re (s M(1/s))`` is uniformly positive for large ``rho``.

The structural condition splits the state space by three orthogonal
projectors ``P0 + F0 + Q0 = I``:

* ``M0`` and every fractional block commute with ``P0`` and ``Q0``;
* fractional blocks are nonnegative on the ranges of ``P0`` and ``Q0``;
* ``M0 >= 0``;
* ``M0`` on ``ran P0``, ``Re M1`` on ``ran Q0`` and the lowest-order
  fractional block on ``ran F0`` are strictly positive definite.

:func:`positivity_lower_bound` turns this into an explicit, sound lower bound
with computable constants, and :func:`sampled_symbol_positivity` measures the
quantity it bounds directly on a frequency sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, LawError
from .material import MaterialLaw, OperatorBlock, parse_matrix, system_symbol, _fmt_matrix

__all__ = [
    "ProjectorTriple",
    "WellposednessReport",
    "BoundConstants",
    "verify_condition",
    "bound_constants",
    "positivity_lower_bound",
    "positivity_threshold",
    "sampled_symbol_positivity",
    "default_lambda_samples",
    "m2_tail_norms",
    "m2_perturbation_margin",
    "format_projectors",
    "parse_projectors",
    "read_projectors",
    "write_projectors",
]

PROJ_TOL = 1e-10
COMMUTE_TOL = 1e-10
STRICT_RTOL = 1e-8
NONNEG_TOL = 1e-12


def _op_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def _min_eig(a: np.ndarray) -> float:
    if a.size == 0:
        return math.inf
    return float(np.linalg.eigvalsh(0.5 * (a + a.conj().T))[0])


@dataclass(frozen=True)
class ProjectorTriple:
    p0: OperatorBlock
    f0: OperatorBlock
    q0: OperatorBlock

    def __post_init__(self) -> None:
        blocks = []
        for name in ("p0", "f0", "q0"):
            raw = getattr(self, name)
            blk = raw if isinstance(raw, OperatorBlock) else OperatorBlock(np.asarray(raw), True)
            p = blk.entries
            if np.abs(p @ p - p).max() > PROJ_TOL:
                raise ValueError(f"{name} is not idempotent")
            if np.abs(p - p.conj().T).max() > PROJ_TOL:
                raise ValueError(f"{name} is not selfadjoint")
            blocks.append(blk)
            object.__setattr__(self, name, blk)
        dims = {b.dim for b in blocks}
        if len(dims) != 1:
            raise DimensionError(f"projector dimensions differ: {sorted(dims)}")
        p, f, q = (b.entries for b in blocks)
        if _op_norm(p + f + q - np.eye(p.shape[0])) > PROJ_TOL:
            raise ValueError("projectors do not sum to the identity")
        for (a, x), (b, y) in (((0, p), (1, f)), ((0, p), (2, q)), ((1, f), (2, q))):
            if _op_norm(x @ y) > PROJ_TOL:
                raise ValueError(f"projectors {('p0', 'f0', 'q0')[a]} and {('p0', 'f0', 'q0')[b]} are not orthogonal")

    @property
    def dim(self) -> int:
        return self.p0.dim

    def basis(self, name: str) -> np.ndarray:
        """Orthonormal columns spanning the range of ``p0``, ``f0`` or ``q0``."""
        p = getattr(self, name).entries
        vals, vecs = np.linalg.eigh(0.5 * (p + p.conj().T))
        return vecs[:, vals > 0.5]


@dataclass(frozen=True)
class WellposednessReport:
    passed: bool
    clause_results: list[tuple[str, bool, float]]
    c0_estimate: float
    rho_threshold: float
    m2_margin: float | None = None
    rho_used: float | None = None
    notes: list[str] = field(default_factory=list)

    def failed_clauses(self) -> list[str]:
        return [name for name, ok, _ in self.clause_results if not ok]

    def format(self) -> str:
        width = max(len(n) for n, _, _ in self.clause_results) if self.clause_results else 10
        lines = [f"verdict: {'PASS' if self.passed else 'FAIL'}"]
        for name, ok, witness in self.clause_results:
            lines.append(f"  {name:<{width}}  {'ok  ' if ok else 'FAIL'}  {witness: .6e}")
        lines.append(f"rho_threshold: {self.rho_threshold:.6g}")
        if self.rho_used is not None:
            lines.append(f"rho_used: {self.rho_used:.6g}")
        lines.append(f"c0_estimate: {self.c0_estimate:.6g}")
        if self.m2_margin is not None:
            lines.append(f"m2_margin: {self.m2_margin:.6g}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# explicit lower bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundConstants:
    """Constants of the three-block lower bound.

    ``bound(rho) = min(rho c0 - kP, (c3/2) rho**(1-a0) - c1, c2)`` over the
    blocks that are present, valid once ``comp_coeff * rho**(-gap_k)`` sums
    stay below ``c3/2``.
    """

    has_p: bool
    has_f: bool
    has_q: bool
    c0: float
    kP: float
    c1: float
    c2: float
    c3: float
    alpha0: float | None
    comp: tuple[tuple[float, float], ...]  # (gap, coefficient) per higher exponent

    def compensation(self, rho: float) -> float:
        return sum(c * rho ** (-gap) for gap, c in self.comp)

    def bound(self, rho: float) -> float:
        terms = []
        if self.has_p:
            terms.append(rho * self.c0 - self.kP)
        if self.has_f:
            if self.alpha0 is None or not self.c3 > 0 or self.compensation(rho) > 0.5 * self.c3:
                return -math.inf
            terms.append(0.5 * self.c3 * rho ** (1.0 - self.alpha0) - self.c1)
        if self.has_q:
            terms.append(self.c2)
        return min(terms) if terms else math.inf


def bound_constants(law: MaterialLaw, proj: ProjectorTriple) -> BoundConstants:
    if law.dim != proj.dim:
        raise DimensionError(f"law dimension {law.dim} does not match projector dimension {proj.dim}")
    ip, if_, iq = proj.basis("p0"), proj.basis("f0"), proj.basis("q0")
    has_p, has_f, has_q = ip.shape[1] > 0, if_.shape[1] > 0, iq.shape[1] > 0
    r = law.m1.hermitian_part()

    def comp(a, x, y):
        return x.conj().T @ a @ y

    c_q = _min_eig(comp(r, iq, iq)) if has_q else math.inf
    n_pq = _op_norm(comp(r, ip, iq)) if has_p and has_q else 0.0
    n_fq = _op_norm(comp(r, if_, iq)) if has_f and has_q else 0.0
    n_pf = _op_norm(comp(r, ip, if_)) if has_p and has_f else 0.0
    if has_q and not c_q > 0:
        c_q_eff = 0.0
    else:
        c_q_eff = c_q

    def absorb(n: float) -> float:
        if n == 0.0:
            return 0.0
        return 4.0 * n * n / c_q_eff if c_q_eff > 0 else math.inf

    c0 = _min_eig(comp(law.m0.entries, ip, ip)) if has_p else math.inf
    kP = (max(0.0, -_min_eig(comp(r, ip, ip))) + n_pf + absorb(n_pq)) if has_p else 0.0
    c1 = (max(0.0, -_min_eig(comp(r, if_, if_))) + n_pf + absorb(n_fq)) if has_f else 0.0
    c2 = c_q - 0.25 * c_q * ((n_pq > 0) + (n_fq > 0)) if has_q else math.inf
    exps = law.exponents
    alpha0 = exps[0] if exps else None
    c3 = _min_eig(comp(law.frac[alpha0].entries, if_, if_)) if (has_f and alpha0 is not None) else 0.0
    terms = []
    if has_f and alpha0 is not None:
        denom = math.cos(0.5 * math.pi * (1.0 - alpha0))
        for a in exps[1:]:
            neg = max(0.0, -_min_eig(comp(law.frac[a].entries, if_, if_)))
            if neg > 0:
                terms.append((a - alpha0, neg / denom))
    return BoundConstants(has_p, has_f, has_q, c0, kP, c1, c2, c3, alpha0, tuple(terms))


def positivity_lower_bound(law: MaterialLaw, proj: ProjectorTriple, rho: float) -> float:
    """Lower bound on ``Re (s M(1/s))`` valid for every ``lambda`` at weight ``rho``.

    Returns ``-inf`` when the lowest fractional order does not yet dominate
    the higher ones on ``ran F0`` at this ``rho``.  The bound ignores any tail.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return bound_constants(law, proj).bound(rho)


def positivity_threshold(law: MaterialLaw, proj: ProjectorTriple, rho_max: float = 1e12) -> float:
    """Smallest ``rho`` with a positive bound (``0`` if every ``rho`` works).

    Raises :class:`LawError` when no ``rho <= rho_max`` achieves positivity.
    """
    consts = bound_constants(law, proj)
    lo = 1e-12
    if consts.bound(lo) > 0:
        return 0.0
    hi = 1.0
    while not consts.bound(hi) > 0:
        lo = hi
        hi *= 2.0
        if hi > rho_max:
            raise LawError(f"the positivity bound stays nonpositive up to rho = {rho_max:g}")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if consts.bound(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * hi:
            break
    return hi


# ---------------------------------------------------------------------------
# sampled quantities
# ---------------------------------------------------------------------------

def default_lambda_samples(rho: float, n: int = 400) -> np.ndarray:
    """``0`` and ``+-logspace(-3, 6) * rho``; reaches ``1e6 rho``."""
    pos = np.logspace(-3, 6, n) * rho
    return np.concatenate([-pos[::-1], [0.0], pos])


def sampled_symbol_positivity(law: MaterialLaw, rho: float, lambda_samples=None) -> float:
    """``min_lambda lambda_min(Re (s M(1/s)))`` with ``s = i lambda + rho``."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    lam = default_lambda_samples(rho) if lambda_samples is None else np.asarray(lambda_samples, float)
    sym = system_symbol(law, 1j * lam + rho)
    herm = 0.5 * (sym + np.conj(np.swapaxes(sym, -1, -2)))
    return float(np.linalg.eigvalsh(herm)[..., 0].min())


def m2_tail_norms(law: MaterialLaw, rho_list, lambda_samples=None) -> np.ndarray:
    """``max_lambda ||M2(1/(i lambda + rho))||`` for each ``rho``."""
    out = []
    for rho in rho_list:
        if not law.tail:
            out.append(0.0)
            continue
        lam = default_lambda_samples(rho) if lambda_samples is None else np.asarray(lambda_samples, float)
        s = 1j * lam + rho
        z = 1.0 / s
        if np.any(np.abs(z - law.radius) >= law.radius):
            raise LawError(f"rho = {rho:g} puts the symbol outside the tail's analyticity ball")
        logs = np.log(s)[:, None, None]
        acc = np.zeros((len(lam), law.dim, law.dim), dtype=np.complex128)
        for g, blk in law.tail.items():
            acc += np.exp(-g * logs) * blk.entries
        out.append(float(np.linalg.norm(acc, 2, axis=(1, 2)).max()))
    return np.asarray(out)


def m2_perturbation_margin(law: MaterialLaw, rho_list, lambda_samples=None) -> float:
    """Largest sampled tail norm at the largest ``rho`` of an increasing list.

    Raises :class:`LawError` if the sampled norms do not decrease along
    ``rho_list``, which signals a tail that does not vanish as ``rho`` grows.
    """
    rho_list = [float(r) for r in rho_list]
    if not rho_list:
        raise ValueError("rho_list must not be empty")
    if any(b <= a for a, b in zip(rho_list, rho_list[1:])):
        raise ValueError("rho_list must be strictly increasing")
    if not law.tail:
        return 0.0
    norms = m2_tail_norms(law, rho_list, lambda_samples)
    if len(norms) > 1 and np.any(np.diff(norms) >= 0):
        raise LawError(f"tail norms do not decrease along rho_list: {norms.tolist()}")
    return float(norms[-1])


# ---------------------------------------------------------------------------
# clause checks
# ---------------------------------------------------------------------------

def verify_condition(
    law: MaterialLaw,
    proj: ProjectorTriple,
    rho: float | None = None,
    rho_max: float = 1e12,
) -> WellposednessReport:
    """Check every clause and, on success, evaluate the positivity bound.

    ``rho`` selects where ``c0_estimate`` is evaluated; by default twice the
    threshold (or 1 if every ``rho`` works).
    """
    if law.dim != proj.dim:
        raise DimensionError(f"law dimension {law.dim} does not match projector dimension {proj.dim}")
    clauses: list[tuple[str, bool, float]] = []
    p, q = proj.p0.entries, proj.q0.entries
    fracs = list(law.frac.items())

    worst = 0.0
    for blk in [law.m0] + [b for _, b in fracs]:
        m = blk.entries
        scale = max(1.0, blk.norm)
        worst = max(worst, _op_norm(m @ p - p @ m) / scale, _op_norm(m @ q - q @ m) / scale)
    clauses.append(("commute(P0,Q0 ; M0,M_a)", worst <= COMMUTE_TOL, worst))

    ip, if_, iq = proj.basis("p0"), proj.basis("f0"), proj.basis("q0")
    lo = math.inf
    for _, blk in fracs:
        for basis in (ip, iq):
            if basis.shape[1]:
                lo = min(lo, _min_eig(basis.conj().T @ blk.entries @ basis) / max(1.0, blk.norm))
    lo_w = 0.0 if math.isinf(lo) else lo
    clauses.append(("P0 M_a P0, Q0 M_a Q0 >= 0", lo_w >= -NONNEG_TOL, lo_w))

    m0_lo = law.m0.min_eig()
    clauses.append(("M0 >= 0", m0_lo >= -NONNEG_TOL * max(1.0, law.m0.norm), m0_lo))

    def strict(name: str, basis: np.ndarray, projector: np.ndarray, block: np.ndarray | None):
        if basis.shape[1] == 0:
            ok = not np.any(projector)
            clauses.append((name, ok, 0.0 if ok else -math.inf))
            return
        if block is None:
            clauses.append((name, False, -math.inf))
            return
        comp = basis.conj().T @ block @ basis
        val = _min_eig(comp)
        clauses.append((name, val >= STRICT_RTOL * max(_op_norm(comp), 1e-300) and val > 0, val))

    strict("iota_P0* M0 iota_P0 > 0", ip, p, law.m0.entries)
    strict("iota_Q0* Re M1 iota_Q0 > 0", iq, q, law.m1.hermitian_part())
    a0 = fracs[0][1].entries if fracs else None
    strict("iota_F0* M_a0 iota_F0 > 0", if_, proj.f0.entries, a0)

    passed = all(ok for _, ok, _ in clauses)
    notes: list[str] = []
    threshold, c0_est, rho_used = math.inf, -math.inf, None
    margin = None
    if passed:
        try:
            threshold = positivity_threshold(law, proj, rho_max)
        except LawError as exc:
            notes.append(str(exc))
            clauses.append(("positive bound for some rho", False, -math.inf))
            passed = False
        else:
            rho_used = rho if rho is not None else (2.0 * threshold if threshold > 0 else 1.0)
            c0_est = positivity_lower_bound(law, proj, rho_used)
            clauses.append(("positive bound at rho_used", c0_est > 0, c0_est))
            passed = c0_est > 0
    if law.tail:
        base = max(rho_used or 1.0, 1.0 / law.radius)
        rhos = [base * 2.0**k for k in range(1, 5)]
        try:
            margin = m2_perturbation_margin(law, rhos)
        except LawError as exc:
            notes.append(str(exc))
            margin = math.inf
        ok = margin < c0_est
        clauses.append(("tail margin < c0_estimate", ok, margin))
        passed = passed and ok
    return WellposednessReport(passed, clauses, c0_est, threshold, margin, rho_used, notes)


# ---------------------------------------------------------------------------
# projector files
# ---------------------------------------------------------------------------

def format_projectors(proj: ProjectorTriple) -> str:
    return "\n".join(
        [f"dim = {proj.dim}"]
        + [f"{n} = {_fmt_matrix(getattr(proj, n).entries)}" for n in ("p0", "f0", "q0")]
    ) + "\n"


def parse_projectors(text: str) -> ProjectorTriple:
    found: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in ("dim", "p0", "f0", "q0"):
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in found:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        found[key] = value
    missing = [k for k in ("dim", "p0", "f0", "q0") if k not in found]
    if missing:
        raise ValueError(f"projector file is missing {', '.join(missing)}")
    d = int(found["dim"])
    return ProjectorTriple(*(parse_matrix(found[k], d, f"{k}: ") for k in ("p0", "f0", "q0")))


def read_projectors(path: str | Path) -> ProjectorTriple:
    return parse_projectors(Path(path).read_text())


def write_projectors(proj: ProjectorTriple, path: str | Path) -> None:
    Path(path).write_text(format_projectors(proj))
