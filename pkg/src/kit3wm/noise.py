"""Noise chain of a signal/idler amplifier calibrated with a shot-noise tunnel junction.

Every noise quantity is in quanta (photons per second per hertz). The chain maps
input noise at the signal and idler frequencies to output noise at the signal
frequency:

    SNTJ -> eta1 -> amplifier (G, G-1) -> eta2 -> HEMT (G_H, N_H) -> room temperature (G_r)
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.optimize import least_squares

from .core import E_CHARGE, HBAR, K_B, N_VACUUM, DomainError

TWO_PI = 2 * math.pi
ASYMPTOTE_QUANTA = 3.0
_SERIES_X = 1e-3


class FitError(RuntimeError):
    """Base class for sweep-fit failures."""


class InsufficientAsymptoteError(FitError):
    pass


class DegenerateFitError(FitError):
    """Signal and idler frequencies coincide, so the two chain gains cannot be separated."""


class FitConvergenceError(FitError):
    def __init__(self, message: str, trace: Sequence):
        super().__init__(message)
        self.trace = list(trace)


class ExcessNoiseWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class NoiseChain:
    eta1_s: float
    eta1_i: float
    eta2: float
    gain: float
    hemt_gain: float = 1.0
    room_gain: float = 1.0
    hemt_noise: float = 0.0
    excess_s: float = 0.0
    excess_i: float = 0.0

    def __post_init__(self):
        for name in ("eta1_s", "eta1_i", "eta2"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise DomainError(f"{name} must lie in (0, 1], got {v!r}")
        for name in ("gain", "hemt_gain", "room_gain"):
            v = getattr(self, name)
            if not (v >= 1 and math.isfinite(v)):
                raise DomainError(f"{name} must be a finite power gain >= 1, got {v!r}")
        for name in ("hemt_noise", "excess_s", "excess_i"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be nonnegative, got {v!r}")

    @property
    def vacuum(self) -> float:
        return N_VACUUM

    @property
    def gain_ss(self) -> float:
        return self.room_gain * self.hemt_gain * self.eta2 * self.gain * self.eta1_s

    @property
    def gain_si(self) -> float:
        return self.room_gain * self.hemt_gain * self.eta2 * (self.gain - 1) * self.eta1_i

    @property
    def n_eff_s(self) -> float:
        nf = N_VACUUM
        return (self.excess_s + (1 - self.eta1_s) * nf) / self.eta1_s + (
            (1 - self.eta2) * nf + self.hemt_noise
        ) / (self.eta2 * self.gain * self.eta1_s)

    @property
    def n_eff_i(self) -> float:
        return (self.excess_i + (1 - self.eta1_i) * N_VACUUM) / self.eta1_i

    def replace(self, **changes) -> "NoiseChain":
        values = asdict(self)
        values.update(changes)
        return NoiseChain(**values)

    def to_dict(self) -> dict:
        return asdict(self)


def _x_coth_x(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    small = ax < _SERIES_X
    safe = np.where(small, 1.0, ax)
    x2 = x * x
    # 1 + x^2/3 - x^4/45 is exact to double precision for |x| < 1e-3
    return np.where(small, 1 + x2 / 3 - x2 * x2 / 45, safe / np.tanh(safe))


def sntj_noise(voltage, temperature: float, omega: float):
    """Noise emitted by a biased tunnel junction, in quanta at angular frequency ``omega``.

    ``N_in = (k_B T / 2 hbar w) [x_+ coth x_+ + x_- coth x_-]`` with
    ``x_+- = (eV +- hbar w)/(2 k_B T)``. Even in ``voltage``; tends to ``e|V|/(2 hbar w)``.
    """
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature!r}")
    if not omega > 0:
        raise DomainError(f"omega must be positive, got {omega!r}")
    v = np.asarray(voltage, dtype=float)
    kt2 = 2 * K_B * temperature
    a = (E_CHARGE * v + HBAR * omega) / kt2
    b = (E_CHARGE * v - HBAR * omega) / kt2
    out = (K_B * temperature / (2 * HBAR * omega)) * (_x_coth_x(a) + _x_coth_x(b))
    return float(out) if out.ndim == 0 else out


def chain_output_noise(chain: NoiseChain, n_in_s, n_in_i):
    """Output noise at the signal frequency, composed stage by stage."""
    nf = N_VACUUM
    n1_s = chain.eta1_s * np.asarray(n_in_s, dtype=float) + (1 - chain.eta1_s) * nf
    n1_i = chain.eta1_i * np.asarray(n_in_i, dtype=float) + (1 - chain.eta1_i) * nf
    n2 = chain.gain * (n1_s + chain.excess_s) + (chain.gain - 1) * (n1_i + chain.excess_i)
    n3 = chain.eta2 * n2 + (1 - chain.eta2) * nf
    n4 = chain.hemt_gain * (n3 + chain.hemt_noise)
    out = chain.room_gain * n4
    return float(out) if out.ndim == 0 else out


def chain_output_noise_closed(chain: NoiseChain, n_in_s, n_in_i):
    """Same quantity from ``G_ss (N_in_s + N_eff_s) + G_si (N_in_i + N_eff_i)``."""
    out = chain.gain_ss * (np.asarray(n_in_s, dtype=float) + chain.n_eff_s) + chain.gain_si * (
        np.asarray(n_in_i, dtype=float) + chain.n_eff_i
    )
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AddedNoise:
    exact: float
    simplified: float
    hemt_term: float

    @property
    def relative_gap(self) -> float:
        return abs(self.exact - self.simplified) / abs(self.exact)


def system_added_noise(chain: NoiseChain) -> AddedNoise:
    """Noise referred to the SNTJ plane, exact and in the large-gain, symmetric-loss form."""
    nf = N_VACUUM
    ratio = (chain.gain - 1) * chain.eta1_i / (chain.gain * chain.eta1_s)
    exact = chain.n_eff_s + ratio * (nf + chain.n_eff_i)
    hemt = chain.hemt_noise / (chain.eta2 * chain.gain * chain.eta1_s)
    simplified = (
        (chain.excess_s + chain.excess_i) / chain.eta1_s
        + 2 * (1 - chain.eta1_s) * nf / chain.eta1_s
        + hemt
        + nf
    )
    return AddedNoise(exact, simplified, hemt)


def hemt_only_noise(chain: NoiseChain) -> float:
    """System noise with the amplifier off (lossless, noiseless, unity gain)."""
    eta = chain.eta2 * chain.eta1_s
    return ((1 - eta) * N_VACUUM + chain.hemt_noise) / eta


def hemt_noise_from_system(n_sigma_off: float, eta_product: float) -> float:
    """Invert ``hemt_only_noise`` for the HEMT added noise given ``eta2 * eta1_s``."""
    if not 0 < eta_product <= 1:
        raise DomainError(f"eta_product must lie in (0, 1], got {eta_product!r}")
    return n_sigma_off * eta_product - (1 - eta_product) * N_VACUUM


def power_to_quanta(power_watt, rbw: float, omega: float):
    """Noise power in a resolution bandwidth converted to quanta, ``P / (B hbar w)``."""
    if not rbw > 0:
        raise DomainError(f"rbw must be positive, got {rbw!r}")
    return np.asarray(power_watt, dtype=float) / (rbw * HBAR * omega)


@dataclass(frozen=True)
class SntjSweep:
    voltage: np.ndarray
    n_out: np.ndarray
    omega_s: float
    omega_i: float
    temperature: float
    v_offset: float = 0.0
    rbw: float = 1e6

    def __post_init__(self):
        v = np.asarray(self.voltage, dtype=float)
        n = np.asarray(self.n_out, dtype=float)
        if v.shape != n.shape or v.ndim != 1 or v.size < 8:
            raise DomainError("voltage and n_out must be matching 1-D arrays with at least 8 points")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(n))):
            raise DomainError("sweep contains non-finite values")
        object.__setattr__(self, "voltage", v)
        object.__setattr__(self, "n_out", n)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["v_volt", "n_o_quanta"])
        for v, n in zip(self.voltage, self.n_out):
            writer.writerow([repr(float(v)), repr(float(n))])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "omega_s_hz": self.omega_s / TWO_PI,
            "omega_i_hz": self.omega_i / TWO_PI,
            "rbw_hz": self.rbw,
            "temp_k": self.temperature,
        }

    @classmethod
    def from_csv(cls, text: str, sidecar: Mapping) -> "SntjSweep":
        """Parse ``v_volt,n_o_quanta`` or ``v_volt,p_watt`` rows (power converted to quanta)."""
        rows = list(csv.reader(io.StringIO(text)))
        rows = [r for r in rows if r and not r[0].startswith("#")]
        if not rows:
            raise DomainError("empty sweep file")
        header = [h.strip() for h in rows[0]]
        try:
            data = np.array([[float(x) for x in r] for r in rows[1:]])
        except ValueError as exc:
            raise DomainError(f"malformed sweep row: {exc}") from None
        if data.ndim != 2 or data.shape[1] != 2:
            raise DomainError("sweep file must have exactly two columns")
        try:
            omega_s = TWO_PI * float(sidecar["omega_s_hz"])
            omega_i = TWO_PI * float(sidecar["omega_i_hz"])
            rbw = float(sidecar["rbw_hz"])
            temp = float(sidecar["temp_k"])
        except KeyError as exc:
            raise DomainError(f"sidecar missing key {exc}") from None
        if header == ["v_volt", "n_o_quanta"]:
            n = data[:, 1]
        elif header == ["v_volt", "p_watt"]:
            n = power_to_quanta(data[:, 1], rbw, omega_s)
        else:
            raise DomainError(f"unrecognised sweep header {header}")
        return cls(data[:, 0], n, omega_s, omega_i, temp, 0.0, rbw)


def default_voltage_grid(points: int = 2000, bias_current: float = 12e-6, junction_impedance: float = 54.0):
    span = bias_current * junction_impedance
    return np.linspace(-span, span, points)


def simulate_sweep(
    chain: NoiseChain,
    omega_s: float,
    omega_i: float,
    voltage=None,
    temperature: float = 0.03,
    v_offset: float = 0.0,
    sigma: float = 0.0,
    seed: Optional[int] = None,
    rbw: float = 1e6,
) -> SntjSweep:
    """Forward model of the output noise versus junction bias.

    ``sigma`` is Gaussian measurement noise in input-referred quanta, that is the
    output noise is perturbed by ``sigma * G_ss``.
    """
    v = default_voltage_grid() if voltage is None else np.asarray(voltage, dtype=float)
    dv = v - v_offset
    n_out = chain_output_noise(chain, sntj_noise(dv, temperature, omega_s), sntj_noise(dv, temperature, omega_i))
    if sigma > 0:
        rng = np.random.default_rng(seed)
        n_out = n_out + rng.normal(0.0, sigma * chain.gain_ss, size=v.shape)
    return SntjSweep(v, np.asarray(n_out, dtype=float), omega_s, omega_i, temperature, v_offset, rbw)


@dataclass(frozen=True)
class FitResult:
    gain_ss: float
    gain_si: float
    v_offset: float
    temperature: float
    n_sigma: float
    n_eff_s: Optional[float]
    n_eff_i: Optional[float]
    offset_sum: float
    uncertainties: dict = field(default_factory=dict)
    model: str = "two-input"
    residual_sigma: float = 0.0

    @property
    def gain_ratio(self) -> float:
        return self.gain_si / self.gain_ss

    def reconstructed_n_sigma(self) -> float:
        """System noise rebuilt from the individual effective noises, when they are known."""
        if self.n_eff_s is None or self.n_eff_i is None:
            return self.offset_sum / self.gain_ss + self.gain_ratio * N_VACUUM
        return self.n_eff_s + self.gain_ratio * (N_VACUUM + self.n_eff_i)

    def displayed_noise(self, sweep: SntjSweep) -> np.ndarray:
        """Output noise divided by ``G_ss`` minus vacuum, so the curve reads the system noise at zero bias."""
        return sweep.n_out / self.gain_ss - N_VACUUM

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "gain_ss": self.gain_ss,
            "gain_si": self.gain_si,
            "v_offset": self.v_offset,
            "temperature": self.temperature,
            "n_sigma": self.n_sigma,
            "n_eff_s": self.n_eff_s,
            "n_eff_i": self.n_eff_i,
            "offset_sum": self.offset_sum,
            "residual_sigma": self.residual_sigma,
            "uncertainties": dict(sorted(self.uncertainties.items())),
        }


def _scaled_voltage(sweep: SntjSweep, v_off: float):
    return E_CHARGE * (sweep.voltage - v_off) / (2 * HBAR * sweep.omega_s)


def _bootstrap_offset(sweep: SntjSweep) -> float:
    # centre of the lowest 5% of points is more robust to noise than the argmin
    n = max(3, sweep.voltage.size // 20)
    idx = np.argsort(sweep.n_out)[:n]
    return float(np.median(sweep.voltage[idx]))


@dataclass(frozen=True)
class _Asymptotes:
    slope: float
    offset_sum: float
    v_offset: float
    cov: np.ndarray
    sigma: float
    n_points: int


def _fit_asymptotes(sweep: SntjSweep, max_iter: int = 20) -> _Asymptotes:
    """Fit ``N = S |V - V_off| + A`` on both asymptotes; linear in ``(S, -S V_off, A)``."""
    v_off = _bootstrap_offset(sweep)
    v = sweep.voltage
    for _ in range(max_iter):
        x = _scaled_voltage(sweep, v_off)
        mask = np.abs(x) > ASYMPTOTE_QUANTA
        left, right = np.sum(mask & (x < 0)), np.sum(mask & (x > 0))
        if left < 2 or right < 2:
            raise InsufficientAsymptoteError(
                f"asymptote regions need >= 2 points each with |e(V-V_off)/(2 hbar w_s)| > {ASYMPTOTE_QUANTA}; "
                f"got {left} left and {right} right"
            )
        sgn = np.sign(x[mask])
        design = np.column_stack([sgn * v[mask], sgn, np.ones(sgn.size)])
        y = sweep.n_out[mask]
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        slope = coef[0]
        if not slope > 0:
            raise FitError("asymptote slope is not positive; the sweep does not look like junction noise")
        new_off = -coef[1] / slope
        converged = abs(new_off - v_off) <= 1e-15 + 1e-12 * np.ptp(v)
        v_off = new_off
        if converged:
            break
    dof = max(1, y.size - 3)
    resid = y - design @ coef
    sigma = math.sqrt(float(resid @ resid) / dof)
    cov_coef = sigma**2 * np.linalg.pinv(design.T @ design)
    # map (c0, c1, c2) -> (S, A, V_off)
    jac = np.array([[1, 0, 0], [0, 0, 1], [coef[1] / slope**2, -1 / slope, 0]])
    return _Asymptotes(float(slope), float(coef[2]), float(v_off), jac @ cov_coef @ jac.T, sigma, int(y.size))


def _run_lm(residual, x0, trace_label: str):
    trace = []

    def wrapped(p):
        r = residual(p)
        trace.append((tuple(float(q) for q in p), float(r @ r)))
        return r

    res = least_squares(wrapped, x0, method="lm", xtol=1e-10, ftol=1e-15, gtol=1e-15,
                        max_nfev=200 * (len(x0) + 1), x_scale="jac")
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitConvergenceError(f"{trace_label} did not converge: {res.message}", trace[-20:])
    res.trace = trace
    return res


def _bounded_exp(log_value: float) -> float:
    # ratios past e^30 are rejected as runaways anyway; the clamp only avoids overflow
    return math.exp(min(30.0, max(-30.0, float(log_value))))


def _covariance(res, sigma: float) -> np.ndarray:
    jtj = res.jac.T @ res.jac
    return sigma**2 * np.linalg.pinv(jtj)


def fit_sweep(
    sweep: SntjSweep,
    n_eff_i: Optional[float] = None,
    gain_ratio: Optional[float] = None,
    temperature_guess: Optional[float] = None,
) -> FitResult:
    """Two-step fit of a two-input (signal and idler) chain to a junction sweep.

    Step 1 fits both asymptotes, giving the offset voltage, the combined slope
    ``(e/2 hbar)(G_ss/w_s + G_si/w_i)`` and the constant ``A = G_ss N_eff_s + G_si N_eff_i``.
    Step 2 fits the knee region for the gain ratio ``G_si/G_ss`` and the temperature
    with those frozen. ``N_eff_s`` and ``N_eff_i`` enter only through ``A``; they are
    split only when ``n_eff_i`` is supplied. ``gain_ratio`` fixes the ratio instead of
    fitting it, which is required when ``w_s == w_i``.
    """
    if gain_ratio is None and math.isclose(sweep.omega_s, sweep.omega_i, rel_tol=1e-12):
        raise DegenerateFitError(
            "w_s == w_i: both gains give the same asymptote slope and knee; supply gain_ratio"
        )
    asym = _fit_asymptotes(sweep)
    s_unit = E_CHARGE / (2 * HBAR)
    x = _scaled_voltage(sweep, asym.v_offset)
    central = np.abs(x) <= ASYMPTOTE_QUANTA
    if np.sum(central) < 3:
        raise InsufficientAsymptoteError("fewer than 3 points in the central region")
    v_c = sweep.voltage[central] - asym.v_offset
    y_c = sweep.n_out[central]
    t0 = sweep.temperature if temperature_guess is None else temperature_guess
    if not t0 > 0:
        t0 = 0.05

    def g_ss_of(rho):
        return asym.slope / (s_unit * (1 / sweep.omega_s + rho / sweep.omega_i))

    def model(rho, temp):
        g = g_ss_of(rho)
        return g * (sntj_noise(v_c, temp, sweep.omega_s) + rho * sntj_noise(v_c, temp, sweep.omega_i)) + asym.offset_sum

    scale = g_ss_of(1.0)
    if gain_ratio is None:
        # log-ratio keeps the idler gain positive while the optimiser explores
        res = _run_lm(lambda p: (model(_bounded_exp(p[0]), abs(p[1])) - y_c) / scale, np.array([0.0, t0]), "knee fit")
        rho, temp = _bounded_exp(float(res.x[0])), abs(float(res.x[1]))
        names = ("log_gain_ratio", "temperature")
        if not 1e-3 < rho < 1e3:
            raise FitConvergenceError(
                f"gain ratio ran away to {rho:.3g}; signal and idler knees are too close to separate, supply gain_ratio",
                res.trace[-20:],
            )
    else:
        res = _run_lm(lambda p: (model(gain_ratio, abs(p[0])) - y_c) / scale, np.array([t0]), "knee fit")
        rho, temp = float(gain_ratio), abs(float(res.x[0]))
        names = ("temperature",)
    cov2 = _covariance(res, asym.sigma / scale)

    g_ss = g_ss_of(rho)
    g_si = rho * g_ss
    n_sigma = asym.offset_sum / g_ss + rho * N_VACUUM
    if n_eff_i is None:
        n_eff_s = None
    else:
        n_eff_s = (asym.offset_sum - g_si * n_eff_i) / g_ss

    # linear propagation; step-1 and step-2 covariances treated as independent
    var = {}
    var["v_offset"] = asym.cov[2, 2]
    for j, name in enumerate(names):
        var[name] = cov2[j, j]
    var_rho = var.pop("log_gain_ratio", 0.0) * rho**2
    var["gain_ratio"] = var_rho
    d = s_unit * (1 / sweep.omega_s + rho / sweep.omega_i)
    dg_ds, dg_drho = 1 / d, -asym.slope * s_unit / sweep.omega_i / d**2
    var["gain_ss"] = dg_ds**2 * asym.cov[0, 0] + dg_drho**2 * var_rho
    var["gain_si"] = (rho * dg_ds) ** 2 * asym.cov[0, 0] + (g_ss + rho * dg_drho) ** 2 * var_rho
    dn_da = 1 / g_ss
    dn_ds = -asym.offset_sum / g_ss**2 * dg_ds
    dn_drho = -asym.offset_sum / g_ss**2 * dg_drho + N_VACUUM
    var["n_sigma"] = (
        dn_da**2 * asym.cov[1, 1] + dn_ds**2 * asym.cov[0, 0] + 2 * dn_da * dn_ds * asym.cov[0, 1] + dn_drho**2 * var_rho
    )
    var["offset_sum"] = asym.cov[1, 1]
    unc = {k: math.sqrt(max(0.0, float(v))) for k, v in var.items()}
    return FitResult(g_ss, g_si, asym.v_offset, temp, n_sigma, n_eff_s, n_eff_i, asym.offset_sum, unc,
                     "two-input", asym.sigma)


def naive_fit(sweep: SntjSweep, temperature_guess: Optional[float] = None) -> FitResult:
    """Single-input fit ``N_o = G_c (N_in_s + y)`` that ignores the idler input.

    The idler's contribution to the slope is absorbed into ``G_c`` and ``y`` is
    reported as the system noise.
    """
    asym = _fit_asymptotes(sweep)
    g_c = asym.slope * 2 * HBAR * sweep.omega_s / E_CHARGE
    y = asym.offset_sum / g_c
    x = _scaled_voltage(sweep, asym.v_offset)
    central = np.abs(x) <= ASYMPTOTE_QUANTA
    v_c = sweep.voltage[central] - asym.v_offset
    y_c = sweep.n_out[central]
    t0 = sweep.temperature if temperature_guess is None else temperature_guess
    res = _run_lm(lambda p: (g_c * (sntj_noise(v_c, abs(p[0]), sweep.omega_s) + y) - y_c) / g_c,
                  np.array([t0 if t0 > 0 else 0.05]), "naive knee fit")
    temp = abs(float(res.x[0]))
    cov2 = _covariance(res, asym.sigma / g_c)
    c = 2 * HBAR * sweep.omega_s / E_CHARGE
    var_gc = c**2 * asym.cov[0, 0]
    var_y = asym.cov[1, 1] / g_c**2 + (asym.offset_sum / g_c**2) ** 2 * var_gc - 2 * asym.offset_sum / g_c**3 * c * asym.cov[0, 1]
    unc = {
        "gain_ss": math.sqrt(var_gc),
        "n_sigma": math.sqrt(max(0.0, var_y)),
        "temperature": math.sqrt(max(0.0, cov2[0, 0])),
        "v_offset": math.sqrt(max(0.0, asym.cov[2, 2])),
        "offset_sum": math.sqrt(max(0.0, asym.cov[1, 1])),
    }
    return FitResult(g_c, 0.0, asym.v_offset, temp, y, y, None, asym.offset_sum, unc, "single-input", asym.sigma)


@dataclass(frozen=True)
class FitComparison:
    two_input: FitResult
    naive: FitResult

    @property
    def gain_excess_db(self) -> float:
        return 10 * math.log10(self.naive.gain_ss / self.two_input.gain_ss)

    @property
    def noise_ratio(self) -> float:
        return self.naive.n_sigma / self.two_input.n_sigma

    def to_dict(self) -> dict:
        return {
            "fit": self.two_input.to_dict(),
            "naive_fit": self.naive.to_dict(),
            "comparison": {
                "naive_gain_excess_db": self.gain_excess_db,
                "naive_to_true_noise_ratio": self.noise_ratio,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def report(self) -> str:
        t, n = self.two_input, self.naive
        return "\n".join([
            f"two-input fit : G_ss = {10 * math.log10(t.gain_ss):8.3f} dB   N_sigma = {t.n_sigma:.4f} quanta",
            f"naive fit     : G_c  = {10 * math.log10(n.gain_ss):8.3f} dB   y       = {n.n_sigma:.4f} quanta",
            f"naive gain is {self.gain_excess_db:+.3f} dB off; naive noise is {self.noise_ratio:.3f} of the two-input value",
        ])


def compare_fits(sweep: SntjSweep, **fit_kwargs) -> FitComparison:
    return FitComparison(fit_sweep(sweep, **fit_kwargs), naive_fit(sweep))


ILValue = Union[float, Sequence[Sequence[float]]]
IL_COMPONENTS = ("sntj", "bias_tee", "lpf", "dc", "iso", "kit", "bypass")


def _il_at(value: ILValue, freq_hz: Optional[float]) -> float:
    """Insertion loss in dB; tables of ``(freq_hz, dB)`` are interpolated linearly."""
    if np.ndim(value) == 0:
        out = float(value)
    else:
        table = np.asarray(value, dtype=float)
        if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 1:
            raise DomainError("insertion-loss table must be rows of (freq_hz, dB)")
        order = np.argsort(table[:, 0])
        if freq_hz is None:
            raise DomainError("a frequency is needed to evaluate an insertion-loss table")
        out = float(np.interp(freq_hz, table[order, 0], table[order, 1]))
    if out < 0:
        raise DomainError(f"insertion losses must be >= 0 dB, got {out}")
    return out


def db_to_efficiency(il_db: float) -> float:
    return 10.0 ** (-il_db / 10.0)


def efficiency_to_db(eta: float) -> float:
    return -10.0 * math.log10(eta)


@dataclass(frozen=True)
class LossBudget:
    losses_db: dict
    eta1_s: float
    eta1_i: float
    eta2: float
    il_eta1_s: float
    il_eta1_i: float
    il_eta2: float
    total_db: Optional[float]

    @property
    def eta_total(self) -> Optional[float]:
        """Transmission of the bypassed (amplifier-off) chain from the junction to the HEMT."""
        return None if self.total_db is None else db_to_efficiency(self.total_db)

    def kit_from_bypass(self) -> Optional[float]:
        """Amplifier loss implied by the bypass measurement, ``I_BP - (I_LPF + I_DC + 2 I_BT)``."""
        bp = self.losses_db.get("bypass")
        if bp is None:
            return None
        return bp - (self.losses_db["lpf"] + self.losses_db["dc"] + 2 * self.losses_db["bias_tee"])

    def to_dict(self) -> dict:
        return {
            "losses_db": dict(sorted(self.losses_db.items())),
            "eta1_s": self.eta1_s,
            "eta1_i": self.eta1_i,
            "eta2": self.eta2,
            "il_eta1_s_db": self.il_eta1_s,
            "il_eta1_i_db": self.il_eta1_i,
            "il_eta2_db": self.il_eta2,
            "total_db": self.total_db,
            "eta_total": self.eta_total,
        }


def loss_budget(
    losses: Mapping[str, ILValue],
    signal_hz: Optional[float] = None,
    idler_hz: Optional[float] = None,
) -> LossBudget:
    """Collect component insertion losses into the junction-to-amplifier and amplifier-to-HEMT efficiencies.

    Required keys: sntj, bias_tee, lpf, dc, iso, kit. ``bypass`` (the amplifier
    replaced by a through) is optional and enables the total ``I_T``.
    """
    unknown = set(losses) - set(IL_COMPONENTS)
    if unknown:
        raise DomainError(f"unknown insertion-loss keys: {sorted(unknown)}")
    missing = [k for k in IL_COMPONENTS[:-1] if k not in losses]
    if missing:
        raise DomainError(f"missing insertion-loss keys: {missing}")
    i_hz = signal_hz if idler_hz is None else idler_hz

    def at(name, f):
        return _il_at(losses[name], f)

    def input_side(f):
        return at("sntj", f) + at("lpf", f) + at("dc", f) + at("bias_tee", f) + at("kit", f) / 2

    il1s = input_side(signal_hz)
    il1i = input_side(i_hz)
    il2 = at("kit", signal_hz) / 2 + at("bias_tee", signal_hz) + at("iso", signal_hz) + at("lpf", signal_hz)
    flat = {k: at(k, signal_hz) for k in losses}
    total = None
    if "bypass" in losses:
        total = flat["sntj"] + flat["bypass"] + flat["iso"] + flat["lpf"]
    return LossBudget(flat, db_to_efficiency(il1s), db_to_efficiency(il1i), db_to_efficiency(il2),
                      il1s, il1i, il2, total)


@dataclass(frozen=True)
class ExcessNoiseEstimate:
    value: float
    sigma: float
    partials: dict
    large_gain: bool


def excess_noise_estimate(
    n_sigma: float,
    eta1_s: float,
    eta2: float,
    gain: float,
    hemt_noise: float,
    sigmas: Optional[Mapping[str, float]] = None,
    large_gain_threshold: float = 10.0,
) -> ExcessNoiseEstimate:
    """Solve the large-gain system-noise expression for ``N_ex_s + N_ex_i``.

    ``sigmas`` holds 1-sigma inputs keyed ``n_sigma, eta1_s, eta2, gain, hemt_noise``;
    the result uncertainty is their linear propagation. A negative estimate is
    returned as is, with a warning.
    """
    nf = N_VACUUM
    value = eta1_s * (n_sigma - nf - hemt_noise / (eta2 * gain * eta1_s)) - 2 * (1 - eta1_s) * nf
    partials = {
        "n_sigma": eta1_s,
        "eta1_s": n_sigma - nf + 2 * nf,
        "eta2": hemt_noise / (eta2**2 * gain),
        "gain": hemt_noise / (eta2 * gain**2),
        "hemt_noise": -1 / (eta2 * gain),
    }
    sig = 0.0
    for key, s in (sigmas or {}).items():
        if key not in partials:
            raise DomainError(f"unknown uncertainty key {key!r}")
        sig += (partials[key] * s) ** 2
    large = gain >= large_gain_threshold
    if not large:
        warnings.warn(f"gain {gain:.3g} is not >> 1; the large-gain inversion is biased", ExcessNoiseWarning, stacklevel=2)
    if value < 0:
        warnings.warn(f"negative excess-noise estimate {value:.4g} quanta", ExcessNoiseWarning, stacklevel=2)
    return ExcessNoiseEstimate(value, math.sqrt(sig), partials, large)
