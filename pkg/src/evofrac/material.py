"""Material laws with fractional integrals and their frequency-domain symbols.

A law is

    M(z) = m0 + sum_a z**a M_a + z m1 + z sum_g z**g T_g,

with ``z = 1/(i lambda + rho)`` standing for the inverse time derivative.
All powers use the principal branch of ``s = i lambda + rho``, i.e.
``z**a = s**(-a)``.  Coefficients are dense complex matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import DimensionError, LawError
from .timegrid import Signal, Spectrum, forward_transform, inverse_transform

__all__ = [
    "OperatorBlock",
    "MaterialLaw",
    "KelvinVoigtConstants",
    "material_symbol",
    "system_symbol",
    "apply_material",
    "fokker_planck_material",
    "kelvin_voigt_material",
    "kelvin_voigt_constants",
    "three_block_example",
    "format_law",
    "parse_law",
    "read_law",
    "write_law",
]

SELFADJOINT_RTOL = 1e-12
NONNEG_TOL = 1e-12


def _matrix(x, dim: int | None = None) -> np.ndarray:
    a = np.array(x, dtype=np.complex128, copy=True)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"block must be square, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DimensionError(f"block has dimension {a.shape[0]}, expected {dim}")
    return a


def _min_eig_hermitian(a: np.ndarray) -> float:
    if a.size == 0:
        return math.inf
    return float(np.linalg.eigvalsh(0.5 * (a + a.conj().T))[0])


@dataclass(frozen=True, eq=False)
class OperatorBlock:
    """Dense coefficient matrix, optionally certified selfadjoint."""

    entries: np.ndarray = field(repr=False)
    selfadjoint: bool = False

    def __post_init__(self) -> None:
        a = _matrix(self.entries)
        if self.selfadjoint:
            scale = np.linalg.norm(a)
            if np.abs(a - a.conj().T).max(initial=0.0) > SELFADJOINT_RTOL * max(scale, 1e-300):
                raise LawError("block flagged selfadjoint is not Hermitian")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OperatorBlock):
            return NotImplemented
        return self.selfadjoint == other.selfadjoint and np.array_equal(self.entries, other.entries)

    __hash__ = None

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2)) if self.entries.size else 0.0

    def hermitian_part(self) -> np.ndarray:
        return 0.5 * (self.entries + self.entries.conj().T)

    def min_eig(self) -> float:
        return _min_eig_hermitian(self.entries)

    def is_zero(self) -> bool:
        return not np.any(self.entries)


def _as_block(x, dim: int, selfadjoint: bool) -> OperatorBlock:
    if isinstance(x, OperatorBlock):
        if x.dim != dim:
            raise DimensionError(f"block has dimension {x.dim}, expected {dim}")
        if selfadjoint and not x.selfadjoint:
            return OperatorBlock(x.entries, True)
        return x
    if x is None:
        return OperatorBlock(np.zeros((dim, dim)), selfadjoint)
    return OperatorBlock(_matrix(x, dim), selfadjoint)


@dataclass(frozen=True)
class MaterialLaw:
    """``m0 + sum z**a M_a + z m1 + z M2(z)`` over a ``dim``-dimensional state.

    ``frac`` maps exponents in (0, 1) to selfadjoint blocks; ``tail`` maps
    exponents ``g >= 0`` to the coefficients of ``M2(z) = sum z**g T_g``.
    ``block_dims`` optionally records a two-block state split (used by the
    Fokker-Planck flux identity).
    """

    dim: int
    m0: OperatorBlock
    frac: Mapping[float, OperatorBlock]
    m1: OperatorBlock
    tail: Mapping[float, OperatorBlock] = field(default_factory=dict)
    radius: float = math.inf
    block_dims: tuple[int, int] | None = None
    meta: Mapping[str, object] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        d = int(self.dim)
        if d < 1:
            raise DimensionError(f"law dimension must be >= 1, got {self.dim}")
        m0 = _as_block(self.m0, d, True)
        if m0.min_eig() < -NONNEG_TOL * max(1.0, m0.norm):
            raise LawError(f"m0 must be nonnegative, min eigenvalue {m0.min_eig():.3e}")
        frac = {}
        for a in sorted(self.frac):
            if not 0.0 < a < 1.0:
                raise LawError(f"fractional exponent {a} is outside (0, 1)")
            frac[float(a)] = _as_block(self.frac[a], d, True)
        tail = {}
        for g in sorted(self.tail):
            if not g >= 0.0:
                raise LawError(f"tail exponent {g} must be >= 0")
            tail[float(g)] = _as_block(self.tail[g], d, False)
        if tail and not self.radius > 0:
            raise LawError("a law with a tail needs a positive analyticity radius")
        if self.block_dims is not None and sum(self.block_dims) != d:
            raise DimensionError(f"block_dims {self.block_dims} do not sum to {d}")
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "frac", MappingProxyType(frac))
        object.__setattr__(self, "m1", _as_block(self.m1, d, False))
        object.__setattr__(self, "tail", MappingProxyType(tail))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    @classmethod
    def build(cls, dim: int, m0=None, frac=None, m1=None, tail=None, **kw) -> "MaterialLaw":
        """Convenience constructor accepting plain arrays or scalars."""
        return cls(dim, m0, dict(frac or {}), m1, dict(tail or {}), **kw)

    @property
    def exponents(self) -> tuple[float, ...]:
        return tuple(self.frac)

    def __add__(self, other: "MaterialLaw") -> "MaterialLaw":
        if self.dim != other.dim:
            raise DimensionError("cannot add laws of different dimension")

        def merged(x, y):
            out = {k: v.entries for k, v in x.items()}
            for k, v in y.items():
                out[k] = out.get(k, 0) + v.entries
            return out

        return MaterialLaw(
            self.dim,
            self.m0.entries + other.m0.entries,
            merged(self.frac, other.frac),
            self.m1.entries + other.m1.entries,
            merged(self.tail, other.tail),
            radius=min(self.radius, other.radius),
        )


def _admissible(law: MaterialLaw, z: np.ndarray) -> None:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / z
    if np.any(~np.isfinite(inv)) or np.any(inv.real <= 0):
        raise LawError("z must satisfy Re(1/z) > 0")
    if law.tail and np.any(np.abs(z - law.radius) >= law.radius):
        raise LawError(f"z lies outside the analyticity ball B(r, r) with r = {law.radius:g}")


def system_symbol(law: MaterialLaw, s) -> np.ndarray:
    """``s * M(1/s)`` for ``s = i lambda + rho``; shape ``(..., dim, dim)``.

    Computed term by term (``s m0 + sum s**(1-a) M_a + m1 + sum s**(-g) T_g``)
    so no ``s * (1/s)`` cancellation occurs.
    """
    s = np.asarray(s, dtype=np.complex128)
    _admissible(law, 1.0 / s)
    logs = np.log(s)[..., None, None]
    out = s[..., None, None] * law.m0.entries + law.m1.entries
    for a, blk in law.frac.items():
        out = out + np.exp((1.0 - a) * logs) * blk.entries
    for g, blk in law.tail.items():
        out = out + np.exp(-g * logs) * blk.entries
    return out


def material_symbol(law: MaterialLaw, z) -> np.ndarray:
    """``M(z)``; ``z`` may be a scalar or an array of admissible points."""
    z = np.asarray(z, dtype=np.complex128)
    _admissible(law, z)
    logz = np.log(z)[..., None, None]
    out = np.broadcast_to(law.m0.entries, z.shape + (law.dim, law.dim)).astype(np.complex128)
    for a, blk in law.frac.items():
        out = out + np.exp(a * logz) * blk.entries
    out = out + z[..., None, None] * law.m1.entries
    for g, blk in law.tail.items():
        out = out + np.exp((1.0 + g) * logz) * blk.entries
    return out


def apply_material(law: MaterialLaw, u: Signal) -> Signal:
    if u.dim != law.dim:
        raise DimensionError(f"signal dimension {u.dim} does not match law dimension {law.dim}")
    spec = forward_transform(u)
    m = material_symbol(law, 1.0 / u.grid.symbols)
    coeffs = np.einsum("kij,kj->ki", m, spec.coefficients)
    return inverse_transform(Spectrum(u.grid, coeffs))


# ---------------------------------------------------------------------------
# application laws
# ---------------------------------------------------------------------------

def _strictly_positive(a: np.ndarray, name: str) -> None:
    lo = _min_eig_hermitian(a)
    if not lo > 1e-8 * max(np.linalg.norm(a, 2), 1e-300):
        raise LawError(f"{name} must be strictly positive definite (min eigenvalue {lo:.3e})")


def fokker_planck_material(kappa_alpha, mu, alpha: float) -> MaterialLaw:
    """Law of the (fractional) Fokker-Planck system for the pair (density, flux).

    ``mu`` is a 2x2 nested sequence ``[[mu00, mu01], [mu10, mu11]]`` of
    blocks.  ``alpha = 0`` gives the classical convection-diffusion law, with
    ``kappa`` moved into ``m0``.
    """
    kappa = _matrix(kappa_alpha)
    d0 = kappa.shape[0]
    mu00, mu01 = (np.atleast_2d(np.asarray(b, dtype=np.complex128)) for b in mu[0])
    mu10, mu11 = (np.atleast_2d(np.asarray(b, dtype=np.complex128)) for b in mu[1])
    d1 = mu11.shape[0]
    shapes = {
        "mu00": (mu00.shape, (d0, d0)),
        "mu01": (mu01.shape, (d0, d1)),
        "mu10": (mu10.shape, (d1, d0)),
        "mu11": (mu11.shape, (d1, d1)),
    }
    for name, (got, want) in shapes.items():
        if got != want:
            raise DimensionError(f"{name} has shape {got}, expected {want}")
    if not 0.0 <= alpha < 1.0:
        raise LawError(f"alpha must lie in [0, 1), got {alpha}")
    if np.abs(kappa - kappa.conj().T).max() > SELFADJOINT_RTOL * np.linalg.norm(kappa):
        raise LawError("kappa_alpha must be selfadjoint")
    _strictly_positive(kappa, "kappa_alpha")
    _strictly_positive(mu11, "Re mu11")

    d = d0 + d1
    kblock = np.zeros((d, d), dtype=np.complex128)
    kblock[:d0, :d0] = kappa
    m1 = np.block([[mu00, mu01], [mu10, mu11]])
    if alpha == 0.0:
        return MaterialLaw(d, kblock, {}, m1, block_dims=(d0, d1))
    return MaterialLaw(d, None, {alpha: kblock}, m1, block_dims=(d0, d1))


@dataclass(frozen=True)
class KelvinVoigtConstants:
    """Constants of the Neumann-series split of ``(C + D d0**alpha)**-1``.

    ``order`` is ``ceil(1/alpha)``, the first series index treated as
    remainder.  ``c0`` bounds ``C + D rho**alpha`` from below for every
    ``rho >= rho_posdef``.  The series converges for ``rho > rho_series``.
    """

    alpha: float
    K0: float
    K1: float
    order: int
    c0: float
    rho_posdef: float
    rho_series: float

    def remainder_bound(self, rho: float) -> float:
        """``K0 rho**-alpha K1**order / (1 - rho**-alpha K1)``."""
        q = rho ** (-self.alpha) * self.K1
        if q >= 1.0:
            return math.inf
        return self.K0 * rho ** (-self.alpha) * self.K1**self.order / (1.0 - q)

    def truncation_bound(self, rho: float, first_dropped: int) -> float:
        """Symbol-level bound on the series terms with index ``>= first_dropped``."""
        q = rho ** (-self.alpha) * self.K1
        if q >= 1.0:
            return math.inf
        return self.K0 * rho ** (-self.alpha) * q**first_dropped / (1.0 - q)

    def check_regime(self, rho: float) -> None:
        if not rho ** (-self.alpha) * self.K1 < 1.0:
            raise LawError(
                f"rho = {rho:g} violates rho**-alpha * K1 < 1 (needs rho > {self.rho_series:g})"
            )


def _split_nonnegative(x: np.ndarray, name: str) -> np.ndarray:
    x = _matrix(x)
    scale = np.linalg.norm(x, 2)
    if np.abs(x - x.conj().T).max(initial=0.0) > SELFADJOINT_RTOL * max(scale, 1e-300):
        raise LawError(f"{name} must be selfadjoint")
    if _min_eig_hermitian(x) < -NONNEG_TOL * max(scale, 1.0):
        raise LawError(f"{name} must be nonnegative")
    return 0.5 * (x + x.conj().T)


def _kelvin_voigt_parts(C, D, alpha: float):
    if not 0.0 < alpha < 1.0:
        raise LawError(f"alpha must lie in (0, 1), got {alpha}")
    C = _split_nonnegative(C, "C")
    D = _split_nonnegative(D, "D")
    if C.shape != D.shape:
        raise DimensionError(f"C and D shapes differ: {C.shape} vs {D.shape}")
    evals, evecs = np.linalg.eigh(D)
    dnorm = max(abs(evals).max(initial=0.0), 0.0)
    rng = evals > 1e-10 * dnorm if dnorm > 0 else np.zeros_like(evals, dtype=bool)
    i0, i1 = evecs[:, ~rng], evecs[:, rng]
    c00 = i0.conj().T @ C @ i0
    c01 = i0.conj().T @ C @ i1
    c10 = i1.conj().T @ C @ i0
    c11 = i1.conj().T @ C @ i1
    if c00.size:
        _strictly_positive(c00, "C compressed to the null space of D")
        c00_inv = np.linalg.inv(c00)
    else:
        c00_inv = c00
    d11 = evals[rng]
    s = np.diag(1.0 / np.sqrt(d11)).astype(np.complex128)
    c_tilde = c11 - c10 @ c00_inv @ c01
    x = s @ c_tilde @ s
    k1 = float(np.linalg.norm(x, 2)) if x.size else 0.0
    # W [0; S] restricted to the range block, i.e. the factor flanking every series term
    flank = np.vstack([-c00_inv @ c01 @ s, s]) if s.size else np.zeros((C.shape[0], 0))
    k0 = float(np.linalg.norm(flank, 2) ** 2) if flank.size else 0.0
    basis = np.hstack([i0, i1])
    m0_t = basis[:, : i0.shape[1]] @ c00_inv @ basis[:, : i0.shape[1]].conj().T if c00.size else np.zeros_like(C)
    c0 = _min_eig_hermitian(C + D)
    order = math.ceil(1.0 / alpha - 1e-12)
    rho_series = k1 ** (1.0 / alpha) if k1 > 0 else 0.0
    consts = KelvinVoigtConstants(alpha, k0, k1, order, c0, 1.0, rho_series)
    return m0_t, basis, flank, x, consts


def kelvin_voigt_constants(C, D, alpha: float) -> KelvinVoigtConstants:
    return _kelvin_voigt_parts(C, D, alpha)[-1]


def kelvin_voigt_material(eta, C, D, alpha: float, tail_terms: int = 8) -> MaterialLaw:
    """Law ``diag(eta, (C + D d0**alpha)**-1)`` expanded in powers of ``d0**-alpha``.

    Series terms with exponent ``(1+n) alpha < 1`` become fractional blocks,
    exponent exactly 1 goes to ``m1``, larger exponents ``1 + g`` go to the
    tail as ``T_g``.  The ``tail_terms`` terms after index ``ceil(1/alpha)-1``
    are kept; everything beyond is dropped (see
    :meth:`KelvinVoigtConstants.truncation_bound`).
    """
    eta = _matrix(eta)
    if np.abs(eta - eta.conj().T).max() > SELFADJOINT_RTOL * np.linalg.norm(eta):
        raise LawError("eta must be selfadjoint")
    _strictly_positive(eta, "eta")
    if tail_terms < 0:
        raise ValueError("tail_terms must be >= 0")
    m0_t, basis, flank, x, consts = _kelvin_voigt_parts(C, D, alpha)
    dv, dt_ = eta.shape[0], m0_t.shape[0]
    d = dv + dt_

    def embed(block: np.ndarray) -> np.ndarray:
        out = np.zeros((d, d), dtype=np.complex128)
        out[dv:, dv:] = block
        return out

    m0 = np.zeros((d, d), dtype=np.complex128)
    m0[:dv, :dv] = eta
    m0[dv:, dv:] = m0_t
    frac: dict[float, np.ndarray] = {}
    m1 = np.zeros((d, d), dtype=np.complex128)
    tail: dict[float, np.ndarray] = {}
    n_total = consts.order + tail_terms if flank.size else 0
    e = basis @ flank if flank.size else None
    power = np.eye(x.shape[0], dtype=np.complex128)
    for n in range(n_total):
        term = e @ power @ e.conj().T
        term = 0.5 * (term + term.conj().T)
        expo = round((1 + n) * alpha, 12)
        if not np.any(term):
            pass
        elif abs(expo - 1.0) < 1e-12:
            m1 += embed(term)
        elif expo < 1.0:
            frac[expo] = embed(term)
        else:
            g = expo - 1.0
            tail[g] = tail.get(g, 0) + embed(term)
        power = power @ (-x)
    radius = 0.5 * consts.K1 ** (-1.0 / alpha) if consts.K1 > 0 else math.inf
    if not tail:
        radius = math.inf
    return MaterialLaw(
        d, m0, frac, m1, tail, radius=radius, block_dims=(dv, dt_),
        meta={"kelvin_voigt": consts, "kept_terms": n_total},
    )


def three_block_example(alpha: float, beta: float, b=1.0) -> MaterialLaw:
    """``diag(1, 1, 0) + z**alpha diag(0, 1, 0) + z**beta diag(0, B, 0) + z diag(0, 0, 1)``.

    ``B`` may be a scalar or a selfadjoint matrix; the middle block takes its
    dimension.  Requires ``alpha < beta``.
    """
    if not 0.0 < alpha < beta < 1.0:
        raise LawError(f"need 0 < alpha < beta < 1, got {alpha}, {beta}")
    bm = _matrix(b)
    k = bm.shape[0]
    d = k + 2
    m0 = np.zeros((d, d), dtype=np.complex128)
    m0[0, 0] = 1.0
    m0[1:-1, 1:-1] = np.eye(k)
    ma = np.zeros_like(m0)
    ma[1:-1, 1:-1] = np.eye(k)
    mb = np.zeros_like(m0)
    mb[1:-1, 1:-1] = bm
    m1 = np.zeros_like(m0)
    m1[-1, -1] = 1.0
    return MaterialLaw(d, m0, {alpha: ma, beta: mb}, m1)


# ---------------------------------------------------------------------------
# plain-text serialization
# ---------------------------------------------------------------------------

def _fmt_complex(z: complex) -> str:
    re, im = repr(z.real), repr(z.imag)
    if z.imag == 0:
        return re
    return f"{re}{'' if im.startswith('-') else '+'}{im}j"


def _fmt_matrix(a: np.ndarray) -> str:
    return " ".join(_fmt_complex(complex(z)) for z in a.reshape(-1))


def format_law(law: MaterialLaw) -> str:
    lines = [f"dim = {law.dim}", f"m0 = {_fmt_matrix(law.m0.entries)}"]
    for a, blk in law.frac.items():
        lines.append(f"frac {repr(a)} = {_fmt_matrix(blk.entries)}")
    lines.append(f"m1 = {_fmt_matrix(law.m1.entries)}")
    for g, blk in law.tail.items():
        lines.append(f"tail {repr(g)} = {_fmt_matrix(blk.entries)}")
    if law.tail:
        lines.append(f"radius = {repr(law.radius)}")
    if law.block_dims is not None:
        lines.append(f"blocks = {law.block_dims[0]} {law.block_dims[1]}")
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, dim: int, where: str = "") -> np.ndarray:
    tokens = text.replace(",", " ").replace(";", " ").split()
    if len(tokens) != dim * dim:
        raise LawError(f"{where}expected {dim * dim} entries, got {len(tokens)}")
    try:
        vals = [complex(t) for t in tokens]
    except ValueError as exc:
        raise LawError(f"{where}bad number: {exc}") from None
    return np.array(vals, dtype=np.complex128).reshape(dim, dim)


def parse_law(text: str) -> MaterialLaw:
    """Parse the ``key = value`` law format produced by :func:`format_law`."""
    entries: list[tuple[int, str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise LawError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        entries.append((lineno, key, value))
    dims = [v for _, k, v in entries if k == "dim"]
    if len(dims) != 1:
        raise LawError("law file needs exactly one 'dim' entry")
    dim = int(dims[0])
    m0 = m1 = None
    frac: dict[float, np.ndarray] = {}
    tail: dict[float, np.ndarray] = {}
    radius = math.inf
    blocks = None
    for lineno, key, value in entries:
        where = f"line {lineno}: "
        parts = key.split()
        if key == "dim":
            continue
        if key == "m0":
            m0 = parse_matrix(value, dim, where)
        elif key == "m1":
            m1 = parse_matrix(value, dim, where)
        elif parts[0] in ("frac", "tail") and len(parts) == 2:
            expo = float(parts[1])
            target = frac if parts[0] == "frac" else tail
            if expo in target:
                raise LawError(f"{where}duplicate {parts[0]} exponent {expo}")
            target[expo] = parse_matrix(value, dim, where)
        elif key == "radius":
            radius = float(value)
        elif key == "blocks":
            b = [int(x) for x in value.split()]
            if len(b) != 2:
                raise LawError(f"{where}blocks needs two integers")
            blocks = (b[0], b[1])
        else:
            raise LawError(f"{where}unknown key {key!r}")
    return MaterialLaw(dim, m0, frac, m1, tail, radius=radius, block_dims=blocks)


def read_law(path: str | Path) -> MaterialLaw:
    return parse_law(Path(path).read_text())


def write_law(law: MaterialLaw, path: str | Path) -> None:
    Path(path).write_text(format_law(law))
