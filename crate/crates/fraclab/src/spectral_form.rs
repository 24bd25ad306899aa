//! The Fourier side: F[u](xi) = (2 pi)^{-n/2} int e^{-i xi x} u(x) dx on the
//! dual grid xi_k = pi k / L, and Q_s(u, v) = int |xi|^{2s} F[u] conj(F[v]) dxi.
//!
//! Two corrections sit on top of the plain lattice sum.
//!
//! The weight |xi|^{2s} is not smooth at the origin, so the rectangle rule
//! over the frequency lattice has an error of order dxi^{n+2s}. Its
//! expansion in powers of dxi has zeta-function coefficients and is
//! subtracted term by term.
//!
//! Truncated functions have corners whose spectra decay only algebraically,
//! so the discrete transform aliases badly. Each recorded [`Kink`] is split
//! off as a one-sided profile x^k e^{-ax}/k! with a closed-form transform.
//! The smooth remainder goes through the FFT, and the profiles' spectra are
//! added back exactly, including the infinite tail beyond the grid's
//! Nyquist frequency.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::grid::{l2_inner, GridError, GridFunction, GridSpec, Kink};
use crate::special_functions::{dirichlet_beta, zeta, SpecialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("order must be finite and non-negative, got {0}")]
    Order(f64),
    #[error("cutoff must be positive, got {0}")]
    Cutoff(f64),
    #[error("spectral sum diverges: corners of order {order} make |xi|^{{2s}} |F|^2 non-integrable at s = {s}")]
    Divergent { s: f64, order: usize },
    #[error("cutoff {0} needs more than 2^24 frequencies beyond the grid")]
    CutoffTooLarge(f64),
    #[error("imaginary residual {imag:e} exceeds 1e-10 of the magnitude {scale:e}")]
    ImaginaryResidual { imag: f64, scale: f64 },
    #[error("interpolation ratio needs a nonzero function")]
    ZeroFunction,
    #[error("interpolation ratio needs 0 < tau < s, got tau = {tau}, s = {s}")]
    Orders { tau: f64, s: f64 },
}

/// Coefficients on the frequency grid, stored with k = -N/2 .. N/2-1 per axis
/// (row-major for n = 2).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    spec: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn frequency_step(&self) -> f64 {
        PI / self.spec.half_width()
    }

    /// Frequency of centered index i along one axis.
    pub fn frequency(&self, i: usize) -> f64 {
        frequency(&self.spec, i)
    }

    /// Writes `frequency,real,imag` rows (`xi1,xi2,real,imag` for n = 2).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GridError> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| GridError::Csv(e.to_string());
        let n = self.spec.points();
        match self.spec.n() {
            1 => w.write_record(["frequency", "real", "imag"]).map_err(csv_err)?,
            _ => w.write_record(["xi1", "xi2", "real", "imag"]).map_err(csv_err)?,
        }
        for (idx, c) in self.coeffs.iter().enumerate() {
            let mut row = match self.spec.n() {
                1 => vec![format!("{:.16e}", self.frequency(idx))],
                _ => vec![
                    format!("{:.16e}", self.frequency(idx / n)),
                    format!("{:.16e}", self.frequency(idx % n)),
                ],
            };
            row.push(format!("{:.16e}", c.re));
            row.push(format!("{:.16e}", c.im));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| GridError::Csv(e.to_string()))
    }
}

fn frequency(spec: &GridSpec, i: usize) -> f64 {
    (i as f64 - (spec.points() / 2) as f64) * PI / spec.half_width()
}

fn fft_axis(data: &mut [Complex64], n: usize, stride_rows: bool, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    if stride_rows {
        for row in data.chunks_mut(n) {
            fft.process(row);
        }
    } else {
        let rows = data.len() / n;
        let mut col = vec![Complex64::new(0.0, 0.0); rows];
        for c in 0..n {
            for r in 0..rows {
                col[r] = data[r * n + c];
            }
            fft.process(&mut col);
            for r in 0..rows {
                data[r * n + c] = col[r];
            }
        }
    }
}

/// Scaled DFT in centered order, with no support check.
fn scaled_dft(spec: &GridSpec, samples: &[f64]) -> Vec<Complex64> {
    let n = spec.points();
    let mut data: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_axis(&mut data, n, true, false);
    if spec.n() == 2 {
        fft_axis(&mut data, n, false, false);
    }
    let scale = (spec.step() / (2.0 * PI).sqrt()).powi(spec.n() as i32);
    let half = n / 2;
    // centered index i <-> k = i - N/2 <-> FFT bin (i + N/2) mod N; e^{i xi_k L} = (-1)^k
    let sign = |i: usize| if (i + half) % 2 == 0 { 1.0 } else { -1.0 };
    match spec.n() {
        1 => (0..n).map(|i| data[(i + half) % n] * (scale * sign(i))).collect(),
        _ => {
            let mut out = Vec::with_capacity(n * n);
            for i1 in 0..n {
                for i2 in 0..n {
                    let src = ((i1 + half) % n) * n + (i2 + half) % n;
                    out.push(data[src] * (scale * sign(i1) * sign(i2)));
                }
            }
            out
        }
    }
}

fn inverse_scaled_dft(spec: &GridSpec, coeffs: &[Complex64]) -> Vec<f64> {
    let n = spec.points();
    let half = n / 2;
    let scale = (spec.step() / (2.0 * PI).sqrt()).powi(spec.n() as i32);
    let sign = |i: usize| if (i + half) % 2 == 0 { 1.0 } else { -1.0 };
    let mut data = vec![Complex64::new(0.0, 0.0); coeffs.len()];
    match spec.n() {
        1 => {
            for i in 0..n {
                data[(i + half) % n] = coeffs[i] * (sign(i) / scale);
            }
            fft_axis(&mut data, n, true, true);
        }
        _ => {
            for i1 in 0..n {
                for i2 in 0..n {
                    let dst = ((i1 + half) % n) * n + (i2 + half) % n;
                    data[dst] = coeffs[i1 * n + i2] * (sign(i1) * sign(i2) / scale);
                }
            }
            fft_axis(&mut data, n, true, true);
            fft_axis(&mut data, n, false, true);
        }
    }
    let norm = (spec.len()) as f64;
    data.iter().map(|c| c.re / norm).collect()
}

/// Scaled discrete Fourier transform of a support-rule-compliant function.
pub fn forward_transform(u: &GridFunction) -> Result<Spectrum, SpectralError> {
    u.check_support()?;
    Ok(Spectrum { spec: *u.spec(), coeffs: scaled_dft(u.spec(), u.samples()) })
}

/// Inverse of [`forward_transform`] (real part).
pub fn inverse_transform(spectrum: &Spectrum) -> GridFunction {
    let samples = inverse_scaled_dft(&spectrum.spec, &spectrum.coeffs);
    GridFunction::from_samples(spectrum.spec, samples).unwrap_or_else(|_| GridFunction::zeros(spectrum.spec))
}

/// Switches for [`quadratic_form_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormOptions {
    /// Restrict the sum to |xi| <= cutoff.
    pub cutoff: Option<f64>,
    /// Treat recorded corners analytically (n = 1).
    pub kink_correction: bool,
    /// Subtract the lattice-sum error expansion at xi = 0.
    pub lattice_correction: bool,
}

impl Default for FormOptions {
    fn default() -> Self {
        Self { cutoff: None, kink_correction: true, lattice_correction: true }
    }
}

impl FormOptions {
    /// The bare rectangle rule on the grid's own DFT.
    pub fn plain() -> Self {
        Self { cutoff: None, kink_correction: false, lattice_correction: false }
    }
}

/// Q_s(u, v) over the whole frequency lattice, or up to `cutoff`.
pub fn quadratic_form(u: &GridFunction, v: &GridFunction, s: f64, cutoff: Option<f64>) -> Result<f64, SpectralError> {
    quadratic_form_with(u, v, s, &FormOptions { cutoff, ..FormOptions::default() })
}

pub fn quadratic_form_with(u: &GridFunction, v: &GridFunction, s: f64, opts: &FormOptions) -> Result<f64, SpectralError> {
    let prepared = PreparedForm::new(u, v, s, opts.kink_correction, opts.lattice_correction)?;
    match opts.cutoff {
        Some(c) => prepared.partial(c),
        None => prepared.full(),
    }
}

/// Q_s^{(Xi)}(u, v) for several cutoffs sharing one transform.
pub fn partial_sums(u: &GridFunction, v: &GridFunction, s: f64, cutoffs: &[f64]) -> Result<Vec<f64>, SpectralError> {
    let prepared = PreparedForm::new(u, v, s, true, true)?;
    cutoffs.iter().map(|&c| prepared.partial(c)).collect()
}

/// Q_s(u, u) + ||u||^2.
pub fn sobolev_norm_sq(u: &GridFunction, s: f64) -> Result<f64, SpectralError> {
    Ok(quadratic_form(u, u, s, None)? + l2_inner(u, u)?)
}

/// Inverse transform of |xi|^{2s} F[u] on the grid.
pub fn fractional_laplacian(u: &GridFunction, s: f64) -> Result<GridFunction, SpectralError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(SpectralError::Order(s));
    }
    let spectrum = forward_transform(u)?;
    let spec = *u.spec();
    let n = spec.points();
    let mut coeffs = spectrum.coeffs;
    for (idx, c) in coeffs.iter_mut().enumerate() {
        let r2 = match spec.n() {
            1 => frequency(&spec, idx).powi(2),
            _ => frequency(&spec, idx / n).powi(2) + frequency(&spec, idx % n).powi(2),
        };
        *c *= if r2 == 0.0 { 0.0 } else { r2.powf(s) };
    }
    Ok(GridFunction::from_samples(spec, inverse_scaled_dft(&spec, &coeffs))?)
}

/// Q_tau(v) / (Q_s(v)^{tau/s} ||v||^{2(s-tau)/s}); at most 1 by interpolation.
pub fn interpolation_ratio(v: &GridFunction, tau: f64, s: f64) -> Result<f64, SpectralError> {
    if !(tau > 0.0 && tau < s && s.is_finite()) {
        return Err(SpectralError::Orders { tau, s });
    }
    if v.is_zero() {
        return Err(SpectralError::ZeroFunction);
    }
    let q_tau = quadratic_form(v, v, tau, None)?;
    let q_s = quadratic_form(v, v, s, None)?;
    let l2 = l2_inner(v, v)?;
    Ok(q_tau / (q_s.powf(tau / s) * l2.powf((s - tau) / s)))
}

/// Frequencies beyond the grid summed term by term before switching to
/// asymptotic tails.
const DIRECT_TERMS: usize = 2048;
/// Limit on directly summed frequencies beyond the grid.
const MAX_EXTRA_TERMS: usize = 1 << 24;
/// Truncation degree of the 1/xi expansion of profile spectra.
const SERIES_DEGREE: usize = 32;

/// One corner split into profiles c_k x^k e^{-a x}/k! at position z.
#[derive(Debug, Clone, Copy)]
struct Profile {
    z: f64,
    c: [f64; 3],
    order: usize,
}

impl Profile {
    fn from_kink(k: &Kink, a: f64) -> Option<Self> {
        let order = k.order()?;
        let [j1, j2, j3] = k.jumps;
        let c1 = j1;
        let c2 = j2 + 2.0 * a * c1;
        let c3 = j3 - 3.0 * a * a * c1 + 3.0 * a * c2;
        Some(Self { z: k.position, c: [c1, c2, c3], order })
    }

    /// sum_k c_k (a + i xi)^{-(k+1)}, without the (2 pi)^{-1/2} e^{-i xi z} factor.
    fn rational(&self, a: f64, xi: f64) -> Complex64 {
        let w = Complex64::new(a, xi).inv();
        let mut p = w;
        let mut acc = Complex64::new(0.0, 0.0);
        for &ck in &self.c {
            p *= w;
            acc += p * ck;
        }
        acc
    }

    /// Coefficients of `rational` in powers of 1/xi, valid for xi > a.
    fn series(&self, a: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); SERIES_DEGREE + 1];
        let ia = Complex64::new(0.0, a);
        for (k, &ck) in self.c.iter().enumerate() {
            if ck == 0.0 {
                continue;
            }
            let m = k + 2;
            // (a + i xi)^{-m} = sum_j (-i)^m C(m+j-1, j) (i a)^j xi^{-(m+j)}
            let lead = Complex64::new(0.0, -1.0).powu(m as u32);
            let mut binom = 1.0;
            let mut iapow = Complex64::new(1.0, 0.0);
            for j in 0..=SERIES_DEGREE - m {
                if j > 0 {
                    binom *= (m + j - 1) as f64 / j as f64;
                    iapow *= ia;
                }
                out[m + j] += lead * iapow * (binom * ck);
            }
        }
        out
    }

    /// Spatial profile sum_k c_k K_k, periodized with period 2L, at offset t >= 0.
    fn periodic_value(&self, a: f64, t: f64, period: f64) -> f64 {
        let mut total = 0.0;
        let mut shift = t;
        loop {
            let e = (-a * shift).exp();
            let term = e * (self.c[0] * shift + self.c[1] * shift * shift / 2.0 + self.c[2] * shift.powi(3) / 6.0);
            total += term;
            if e < 1e-18 || shift > t + 1e4 * period {
                break;
            }
            shift += period;
        }
        total
    }
}

struct KinkTail {
    a: f64,
    dxi: f64,
    s: f64,
    first: usize,
    u: Vec<Profile>,
    v: Vec<Profile>,
}

impl KinkTail {
    fn pair_term(&self, p: &Profile, q: &Profile, xi: f64) -> f64 {
        let phase = Complex64::from_polar(1.0, -xi * (p.z - q.z));
        let b = p.rational(self.a, xi) * q.rational(self.a, xi).conj();
        self.dxi * xi.powf(2.0 * self.s) * (phase * b).re / (2.0 * PI)
    }

    /// Sum of all pair terms at one frequency, as Re[P_u conj(P_v)] with
    /// P = sum over profiles of e^{-i xi z} times the rational part.
    fn combined_term(&self, xi: f64) -> f64 {
        let side = |profiles: &[Profile]| -> Complex64 {
            profiles.iter().map(|p| Complex64::from_polar(1.0, -xi * p.z) * p.rational(self.a, xi)).sum()
        };
        let b = side(&self.u) * side(&self.v).conj();
        self.dxi * xi.powf(2.0 * self.s) * b.re / (2.0 * PI)
    }

    /// Contribution of |k| >= first with |xi_k| <= cutoff (all of them if None).
    fn sum(&self, cutoff: Option<f64>) -> Result<f64, SpectralError> {
        // the tail runs over k >= first and k <= -first - 1; terms are even in k
        let at_first = self.combined_term(self.first as f64 * self.dxi);
        let one_sided = match cutoff {
            Some(c) => {
                let last = (c / self.dxi).floor();
                if last < self.first as f64 {
                    return Ok(0.0);
                }
                if last - self.first as f64 > MAX_EXTRA_TERMS as f64 {
                    return Err(SpectralError::CutoffTooLarge(c));
                }
                compensated_sum((self.first..=last as usize).map(|k| self.combined_term(k as f64 * self.dxi)))
            }
            None => {
                let from = self.first + DIRECT_TERMS;
                let direct = compensated_sum((self.first..from).map(|k| self.combined_term(k as f64 * self.dxi)));
                let rest = compensated_sum(self.u.iter().flat_map(|p| self.v.iter().map(move |q| self.remainder(p, q, from))));
                direct + rest
            }
        };
        Ok(2.0 * one_sided - at_first)
    }

    /// sum_{k >= from} of one pair's terms.
    fn remainder(&self, p: &Profile, q: &Profile, from: usize) -> f64 {
        let d = p.z - q.z;
        let theta = (self.dxi * d).rem_euclid(2.0 * PI);
        let theta = if theta > PI { theta - 2.0 * PI } else { theta };
        if theta.abs() < 1e-12 {
            return self.diagonal(p, q, from);
        }
        let extra = ((64.0 / theta.abs()).ceil() as usize).clamp(DIRECT_TERMS, 1 << 22);
        let start = (self.first + extra).max(from);
        let mut acc = 0.0;
        for k in from..start {
            acc += self.pair_term(p, q, k as f64 * self.dxi);
        }
        // summation by parts on h_k z^k with z = e^{-i theta}
        let h = |k: usize| -> Complex64 {
            let xi = k as f64 * self.dxi;
            p.rational(self.a, xi) * q.rational(self.a, xi).conj() * (self.dxi * xi.powf(2.0 * self.s) / (2.0 * PI))
        };
        const LEVELS: usize = 4;
        let mut diffs: Vec<Complex64> = (0..=LEVELS).map(|r| h(start + r)).collect();
        let z = Complex64::from_polar(1.0, -theta);
        let one_minus_z = Complex64::new(1.0, 0.0) - z;
        // phase of the first tail term, e^{-i xi_start d}
        let zstart = Complex64::from_polar(1.0, -(start as f64 * self.dxi) * d);
        let mut tail = Complex64::new(0.0, 0.0);
        let mut zr = Complex64::new(1.0, 0.0);
        let mut denom = one_minus_z;
        for r in 0..LEVELS {
            tail += diffs[0] * zr / denom;
            for i in 0..diffs.len() - 1 - r {
                diffs[i] = diffs[i + 1] - diffs[i];
            }
            zr *= z;
            denom *= one_minus_z;
        }
        acc + (zstart * tail).re
    }

    /// Non-oscillating pair from `start` on: Euler-Maclaurin on the 1/xi series.
    fn diagonal(&self, p: &Profile, q: &Profile, start: usize) -> f64 {
        let sp = p.series(self.a);
        let sq = q.series(self.a);
        // coefficients of Re[b_p conj(b_q)] in powers xi^{-m}
        let mut prod = vec![0.0; SERIES_DEGREE + 1];
        for (i, ci) in sp.iter().enumerate() {
            for (j, cj) in sq.iter().enumerate() {
                if i + j <= SERIES_DEGREE {
                    prod[i + j] += (ci * cj.conj()).re;
                }
            }
        }
        let scale = self.dxi / (2.0 * PI);
        let x = start as f64 * self.dxi;
        // H(xi) = scale sum_m prod[m] xi^{2s-m}; derivatives by the power rule
        let deriv = |order: usize| -> f64 {
            let mut total = 0.0;
            for (m, &c) in prod.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let e = 2.0 * self.s - m as f64;
                let mut factor = 1.0;
                for r in 0..order {
                    factor *= e - r as f64;
                }
                total += c * factor * x.powf(e - order as f64);
            }
            scale * total
        };
        let mut integral = 0.0;
        for (m, &c) in prod.iter().enumerate() {
            if c != 0.0 {
                let e = 2.0 * self.s - m as f64;
                integral += c * x.powf(e + 1.0) / (-e - 1.0);
            }
        }
        integral *= scale / self.dxi;
        // Bernoulli numbers B2, B4, B6, B8 over (2r)!
        const EM: [f64; 4] = [1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0, -1.0 / 1209600.0];
        let mut em = integral + deriv(0) / 2.0;
        for (r, coef) in EM.iter().enumerate() {
            let order = 2 * r + 1;
            em -= coef * self.dxi.powi(order as i32) * deriv(order);
        }
        em
    }
}

/// A bilinear form with transforms done once, ready for full or partial sums.
struct PreparedForm {
    s: f64,
    /// |xi| and the real part of each in-band term (weight included).
    band: Vec<(f64, f64)>,
    tail: Option<KinkTail>,
    divergence: Option<usize>,
    correction: f64,
}

impl PreparedForm {
    fn new(u: &GridFunction, v: &GridFunction, s: f64, kink_correction: bool, lattice_correction: bool) -> Result<Self, SpectralError> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(SpectralError::Order(s));
        }
        if u.spec() != v.spec() {
            return Err(GridError::SpecMismatch.into());
        }
        u.check_support()?;
        v.check_support()?;
        let spec = *u.spec();
        let n = spec.points();
        let dxi = PI / spec.half_width();
        let nyquist = (n / 2) as f64 * dxi;
        let use_kinks = kink_correction && spec.n() == 1 && s > 0.0 && !(u.kinks().is_empty() && v.kinks().is_empty());
        let a = nyquist / 64.0;
        let (fu, pu) = spectrum_with_profiles(u, a, use_kinks);
        let (fv, pv) = if std::ptr::eq(u, v) { (fu.clone(), pu.clone()) } else { spectrum_with_profiles(v, a, use_kinks) };

        let weight_of = |r2: f64| -> f64 {
            if r2 == 0.0 {
                if s == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                r2.powf(s)
            }
        };
        let cell = dxi.powi(spec.n() as i32);
        let mut band = Vec::with_capacity(fu.len());
        let mut imag = 0.0;
        let mut scale = 0.0;
        for (idx, (a_, b_)) in fu.iter().zip(&fv).enumerate() {
            let r2 = match spec.n() {
                1 => frequency(&spec, idx).powi(2),
                _ => frequency(&spec, idx / n).powi(2) + frequency(&spec, idx % n).powi(2),
            };
            let w = weight_of(r2) * cell;
            let prod = a_ * b_.conj() * w;
            imag += prod.im;
            scale += prod.norm();
            band.push((r2.sqrt(), prod.re));
        }
        if imag.abs() > 1e-10 * scale {
            return Err(SpectralError::ImaginaryResidual { imag, scale });
        }

        let mut divergence = None;
        let tail = if use_kinks && !pu.is_empty() && !pv.is_empty() {
            let ku = pu.iter().map(|p| p.order).min().unwrap_or(3);
            let kv = pv.iter().map(|p| p.order).min().unwrap_or(3);
            if 2.0 * s >= (ku + kv + 1) as f64 {
                divergence = Some(ku.min(kv));
            }
            Some(KinkTail { a, dxi, s, first: n / 2, u: pu, v: pv })
        } else {
            None
        };
        let correction = if lattice_correction && s > 0.0 { lattice_error(u, v, s)? } else { 0.0 };
        Ok(Self { s, band, tail, divergence, correction })
    }

    fn full(&self) -> Result<f64, SpectralError> {
        if let Some(order) = self.divergence {
            return Err(SpectralError::Divergent { s: self.s, order });
        }
        let band = compensated_sum(self.band.iter().map(|t| t.1));
        let tail = match &self.tail {
            Some(t) => t.sum(None)?,
            None => 0.0,
        };
        Ok(band + tail - self.correction)
    }

    fn partial(&self, cutoff: f64) -> Result<f64, SpectralError> {
        if !(cutoff > 0.0) {
            return Err(SpectralError::Cutoff(cutoff));
        }
        let band = compensated_sum(self.band.iter().filter(|t| t.0 <= cutoff).map(|t| t.1));
        let tail = match &self.tail {
            Some(t) => t.sum(Some(cutoff))?,
            None => 0.0,
        };
        Ok(band + tail - self.correction)
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in terms {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

/// In-band spectrum of `u`, with corners split off analytically when requested.
fn spectrum_with_profiles(u: &GridFunction, a: f64, use_kinks: bool) -> (Vec<Complex64>, Vec<Profile>) {
    let spec = *u.spec();
    if !use_kinks || u.kinks().is_empty() {
        return (scaled_dft(&spec, u.samples()), Vec::new());
    }
    let profiles: Vec<Profile> = u.kinks().iter().filter_map(|k| Profile::from_kink(k, a)).collect();
    let period = 2.0 * spec.half_width();
    let mut remainder = u.samples().to_vec();
    for p in &profiles {
        for (j, r) in remainder.iter_mut().enumerate() {
            let t = (spec.node(j) - p.z).rem_euclid(period);
            *r -= p.periodic_value(a, t, period);
        }
    }
    let mut coeffs = scaled_dft(&spec, &remainder);
    let norm = (2.0 * PI).sqrt().recip();
    for (i, c) in coeffs.iter_mut().enumerate() {
        let xi = frequency(&spec, i);
        for p in &profiles {
            *c += Complex64::from_polar(norm, -xi * p.z) * p.rational(a, xi);
        }
    }
    (coeffs, profiles)
}

/// Leading error terms of the frequency-lattice rectangle rule for
/// |xi|^{2s} G(xi), G = F[u] conj(F[v]), from the moments of u and v.
fn lattice_error(u: &GridFunction, v: &GridFunction, s: f64) -> Result<f64, SpectralError> {
    let spec = *u.spec();
    let dxi = PI / spec.half_width();
    let h = spec.step();
    if spec.n() == 1 {
        const TERMS: usize = 7;
        let moments = |f: &GridFunction| -> Vec<f64> {
            let mut m = vec![0.0; 2 * TERMS + 1];
            for (j, &val) in f.samples().iter().enumerate() {
                if val == 0.0 {
                    continue;
                }
                let x = spec.node(j);
                let mut xp = val * h;
                for slot in m.iter_mut() {
                    *slot += xp;
                    xp *= x;
                }
            }
            m
        };
        let mu = moments(u);
        let mv = moments(v);
        let mut fact = vec![1.0; 2 * TERMS + 1];
        for i in 1..fact.len() {
            fact[i] = fact[i - 1] * i as f64;
        }
        let mut total = 0.0;
        for m in 0..=TERMS {
            let mut g = 0.0;
            for p in 0..=2 * m {
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                g += sign * mu[p] * mv[2 * m - p] / (fact[p] * fact[2 * m - p]);
            }
            let sign_m = if m % 2 == 0 { 1.0 } else { -1.0 };
            g *= sign_m / (2.0 * PI);
            let e = 2.0 * s + 2.0 * m as f64;
            let term = 2.0 * zeta(-e)? * g * dxi.powf(e + 1.0);
            total += term;
            if m > 0 && term.abs() <= 1e-18 * total.abs() {
                break;
            }
        }
        Ok(total)
    } else {
        let n = spec.points();
        let mut mom = [[0.0f64; 5]; 2];
        for (which, f) in [u, v].into_iter().enumerate() {
            for (idx, &val) in f.samples().iter().enumerate() {
                if val == 0.0 {
                    continue;
                }
                let x1 = spec.node(idx / n);
                let x2 = spec.node(idx % n);
                let w = val * h * h;
                mom[which][0] += w;
                mom[which][1] += w * x1;
                mom[which][2] += w * x2;
                mom[which][3] += w * x1 * x1;
                mom[which][4] += w * x2 * x2;
            }
        }
        let [mu, mv] = mom;
        let g0 = mu[0] * mv[0] / (4.0 * PI * PI);
        let lap = (-(mu[3] + mu[4]) * mv[0] + 2.0 * (mu[1] * mv[1] + mu[2] * mv[2]) - mu[0] * (mv[3] + mv[4]))
            / (4.0 * PI * PI);
        // sum over nonzero k in Z^2 of |k|^{2t} equals 4 zeta(-t) beta(-t)
        let epstein = |t: f64| -> Result<f64, SpectralError> { Ok(4.0 * zeta(-t)? * dirichlet_beta(-t)?) };
        let first = epstein(s)? * g0 * dxi.powf(2.0 + 2.0 * s);
        let second = 0.25 * epstein(s + 1.0)? * lap * dxi.powf(4.0 + 2.0 * s);
        Ok(first + second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::grid::{sample, truncate, Truncation};
    use crate::special_functions::gamma;

    fn sampled(src: &str, spec: &GridSpec) -> GridFunction {
        sample(&parse(src, spec.n()).unwrap(), spec).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn gaussian_self_transform() {
        let spec = GridSpec::new(1, 16.0, 2048).unwrap();
        let sp = forward_transform(&sampled("exp(-x^2/2)", &spec)).unwrap();
        let mut worst = 0.0f64;
        for (i, c) in sp.coeffs().iter().enumerate() {
            let xi = sp.frequency(i);
            worst = worst.max((c - Complex64::new((-xi * xi / 2.0).exp(), 0.0)).norm());
        }
        assert!(worst < 1e-10, "worst {worst}");
    }

    #[test]
    fn zero_and_shift() {
        let spec = GridSpec::new(1, 16.0, 256).unwrap();
        let sp = forward_transform(&GridFunction::zeros(spec)).unwrap();
        assert!(sp.coeffs().iter().all(|c| c.norm() == 0.0));
        let u = sampled("exp(-x^2)", &spec);
        let mut shifted = vec![0.0; 256];
        shifted[1..].copy_from_slice(&u.samples()[..255]);
        let su = forward_transform(&u).unwrap();
        let ss = forward_transform(&GridFunction::from_samples(spec, shifted).unwrap()).unwrap();
        let h = spec.step();
        for i in 0..256 {
            let expect = su.coeffs()[i] * Complex64::from_polar(1.0, -su.frequency(i) * h);
            assert!((ss.coeffs()[i] - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn gaussian_forms_match_gamma() {
        let spec = GridSpec::new(1, 16.0, 4096).unwrap();
        let g = sampled("exp(-x^2/2)", &spec);
        for s in [0.25, 0.5, 1.0, 1.25, 1.5, 2.7] {
            let q = quadratic_form(&g, &g, s, None).unwrap();
            let exact = gamma(s + 0.5).unwrap();
            assert!(rel(q, exact) < 1e-12, "s={s} q={q} exact={exact}");
        }
        let norm = sobolev_norm_sq(&g, 0.5).unwrap();
        assert!(rel(norm, 1.0 + PI.sqrt()) < 1e-12);
    }

    #[test]
    fn order_zero_is_l2() {
        let spec = GridSpec::new(1, 20.0, 1024).unwrap();
        let u = sampled("sin(2*x)*exp(-x^2/3)", &spec);
        let v = sampled("exp(-(x-1)^2)", &spec);
        let q = quadratic_form(&u, &v, 0.0, None).unwrap();
        assert!(rel(q, l2_inner(&u, &v).unwrap()) < 1e-12);
    }

    #[test]
    fn two_dimensional_gaussian() {
        // int |xi|^{2s} e^{-|xi|^2} dxi = pi Gamma(s+1)
        let spec = GridSpec::new(2, 16.0, 256).unwrap();
        let g = sampled("exp(-(x1^2+x2^2)/2)", &spec);
        for s in [0.25, 0.5, 1.25] {
            let q = quadratic_form(&g, &g, s, None).unwrap();
            let exact = PI * gamma(s + 1.0).unwrap();
            assert!(rel(q, exact) < 1e-6, "s={s} q={q} exact={exact}");
        }
    }

    #[test]
    fn round_trip() {
        let spec = GridSpec::new(1, 12.0, 1024).unwrap();
        let u = sampled("x*exp(-x^2)", &spec);
        let back = inverse_transform(&forward_transform(&u).unwrap());
        let err = u.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12 * u.max_abs());
        let spec2 = GridSpec::new(2, 12.0, 64).unwrap();
        let w = sampled("x1*exp(-x1^2-x2^2)", &spec2);
        let back = inverse_transform(&forward_transform(&w).unwrap());
        let err = w.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12 * w.max_abs());
    }

    #[test]
    fn laplacian_matches_second_difference() {
        let spec = GridSpec::new(1, 16.0, 2048).unwrap();
        let u = sampled("exp(-x^2/2)", &spec);
        let lap = fractional_laplacian(&u, 1.0).unwrap();
        let h = spec.step();
        for j in [900usize, 1024, 1100] {
            let x = spec.node(j);
            let f = |x: f64| (-x * x / 2.0).exp();
            let fd = -(f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            assert!((lap.samples()[j] - fd).abs() < 1e-4);
        }
    }

    #[test]
    fn kinked_forms_match_exact_reference() {
        // reference values from the exact transform of (x e^{-x^2} - eps)^+
        let spec = GridSpec::new(1, 20.0, 4096).unwrap();
        let u = sampled("x*exp(-x^2)", &spec);
        let cases = [(0.2, 0.577_191_184_898_646_3), (0.01, 0.920_662_999_583_628_4)];
        for (eps, exact) in cases {
            let t = truncate(&u, Truncation::ShiftedPos(eps)).unwrap();
            let q = quadratic_form(&t, &t, 1.25, None).unwrap();
            assert!(rel(q, exact) < 1e-6, "eps={eps} q={q}");
        }
        let p = truncate(&u, Truncation::Pos).unwrap();
        let q = quadratic_form(&p, &p, 1.25, None).unwrap();
        assert!(rel(q, 0.934_150_512_077_491_6) < 1e-6, "q={q}");
    }

    #[test]
    fn cross_term_of_positive_and_negative_parts() {
        let spec = GridSpec::new(1, 20.0, 4096).unwrap();
        let u = sampled("x*exp(-x^2)", &spec);
        let p = truncate(&u, Truncation::Pos).unwrap();
        let m = truncate(&u, Truncation::Neg).unwrap();
        for (s, exact) in [(0.5, -0.045_422_528_454_052), (1.1, 0.054_488_580_690), (1.25, 0.257_918_675)] {
            let q = quadratic_form(&p, &m, s, None).unwrap();
            assert!(rel(q, exact) < 1e-6, "s={s} q={q} exact={exact}");
        }
        assert!(matches!(quadratic_form(&p, &m, 1.5, None), Err(SpectralError::Divergent { .. })));
        assert!(quadratic_form(&p, &m, 1.7, Some(100.0)).is_ok());
    }

    #[test]
    fn interpolation_examples() {
        let spec = GridSpec::new(1, 16.0, 2048).unwrap();
        let g = sampled("exp(-x^2/2)", &spec);
        assert!(interpolation_ratio(&g, 0.25, 0.5).unwrap() <= 1.0);
        let r = interpolation_ratio(&g, 0.5 * (1.0 - 1e-6), 0.5).unwrap();
        assert!((r - 1.0).abs() < 1e-4);
        let m = sampled("exp(-x^2/2)*cos(10*x)", &spec);
        let r = interpolation_ratio(&m, 0.25, 0.5).unwrap();
        assert!(r >= 0.9 && r <= 1.0, "r={r}");
        assert!(matches!(interpolation_ratio(&g, 0.5, 0.5), Err(SpectralError::Orders { .. })));
        assert!(matches!(
            interpolation_ratio(&GridFunction::zeros(spec), 0.2, 0.5),
            Err(SpectralError::ZeroFunction)
        ));
    }

    #[test]
    fn spectrum_csv_header() {
        let spec = GridSpec::new(1, 8.0, 16).unwrap();
        let sp = forward_transform(&sampled("exp(-x^2*4)", &spec)).unwrap();
        let mut buf = Vec::new();
        sp.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("frequency,real,imag\n"));
        assert_eq!(text.lines().count(), 17);
    }
}
