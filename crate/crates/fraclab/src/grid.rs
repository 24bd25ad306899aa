//! Sampled functions on uniform box grids and the pointwise operators
//! u^+, u^-, |u|, (u - eps)^+, min(u, v), smooth cutoffs and mollification.
//!
//! In one dimension, truncations also record where they create corners.
//! A [`Kink`] stores the position of a root of the truncated function and
//! the jumps of its first three derivatives there. The samples alone cannot
//! resolve these corners, so the spectral module uses the metadata to treat
//! them exactly.

use std::io::Write;

use thiserror::Error;

use crate::expr::{bump, EvalError, ExprAst};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("dimension {0} not supported (use 1 or 2)")]
    Dimension(usize),
    #[error("points per axis must be a power of two >= 16, got {0}")]
    Points(usize),
    #[error("half-width must be positive and finite, got {0}")]
    HalfWidth(f64),
    #[error("expression has dimension {expr}, grid has dimension {grid}")]
    DimensionMismatch { expr: usize, grid: usize },
    #[error("sample at node {index} is not finite: {source}")]
    NonFiniteSample { index: usize, source: EvalError },
    #[error("sample {index} is not finite")]
    NonFiniteValue { index: usize },
    #[error("expected {expected} samples, got {got}")]
    SampleCount { expected: usize, got: usize },
    #[error("grid functions live on different grids")]
    SpecMismatch,
    #[error("shift eps must be positive and finite, got {0}")]
    Shift(f64),
    #[error("cutoff geometry invalid: inner radius {inner} + margin {margin} must be below L = {half_width}")]
    CutoffGeometry { inner: f64, margin: f64, half_width: f64 },
    #[error("mollifier radius 1/{h} is below two grid steps ({step})")]
    ScaleTooFine { h: u32, step: f64 },
    #[error("function is {value:e} at node {index} with |x| >= L/2; it must decay below {threshold:e}")]
    SupportRule { index: usize, value: f64, threshold: f64 },
    #[error("cannot coarsen a grid with {0} points")]
    Coarsen(usize),
    #[error("csv output failed: {0}")]
    Csv(String),
}

/// Uniform grid on [-L, L]^n with N points per axis, nodes x_j = -L + j*2L/N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    half_width: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64, points: usize) -> Result<Self, GridError> {
        if n != 1 && n != 2 {
            return Err(GridError::Dimension(n));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(GridError::HalfWidth(half_width));
        }
        if points < 16 || !points.is_power_of_two() {
            return Err(GridError::Points(points));
        }
        Ok(Self { n, half_width, points })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Total number of samples, N^n.
    pub fn len(&self) -> usize {
        self.points.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.step()
    }

    /// Coordinates of flat sample index `idx` (row-major, first axis slowest).
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        match self.n {
            1 => [self.node(idx), 0.0],
            _ => [self.node(idx / self.points), self.node(idx % self.points)],
        }
    }

    /// The same box with half as many points per axis.
    pub fn coarsened(&self) -> Result<GridSpec, GridError> {
        if self.points < 32 {
            return Err(GridError::Coarsen(self.points));
        }
        GridSpec::new(self.n, self.half_width, self.points / 2)
    }

    pub fn with_points(&self, points: usize) -> Result<GridSpec, GridError> {
        GridSpec::new(self.n, self.half_width, points)
    }
}

/// A corner of a one-dimensional function at `position`.
/// `jumps[k]` is f^{(k+1)}(z+) - f^{(k+1)}(z-).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kink {
    pub position: f64,
    pub jumps: [f64; 3],
}

impl Kink {
    /// Lowest derivative order with a nonzero jump, if any.
    pub fn order(&self) -> Option<usize> {
        self.jumps.iter().position(|&j| j != 0.0).map(|k| k + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    Pos,
    Neg,
    Abs,
    ShiftedPos(f64),
}

/// Real samples on a [`GridSpec`], plus corner metadata for n = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    samples: Vec<f64>,
    kinks: Vec<Kink>,
}

impl GridFunction {
    pub fn from_samples(spec: GridSpec, samples: Vec<f64>) -> Result<Self, GridError> {
        if samples.len() != spec.len() {
            return Err(GridError::SampleCount { expected: spec.len(), got: samples.len() });
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteValue { index });
        }
        Ok(Self { spec, samples, kinks: Vec::new() })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, samples: vec![0.0; spec.len()], kinks: Vec::new() }
    }

    /// Attaches corner metadata (n = 1 only; ignored otherwise). Kinks at equal
    /// positions are merged and zero jumps dropped.
    pub fn with_kinks(mut self, kinks: Vec<Kink>) -> Self {
        if self.spec.n == 1 {
            self.kinks = normalize_kinks(kinks);
        }
        self
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn kinks(&self) -> &[Kink] {
        &self.kinks
    }

    pub fn without_kinks(&self) -> Self {
        Self { spec: self.spec, samples: self.samples.clone(), kinks: Vec::new() }
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|&v| v == 0.0)
    }

    fn same_spec(&self, other: &GridFunction) -> Result<(), GridError> {
        if self.spec != other.spec {
            return Err(GridError::SpecMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction, GridError> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction, GridError> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &GridFunction, sign: f64) -> Result<GridFunction, GridError> {
        self.same_spec(other)?;
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| a + sign * b).collect();
        let mut kinks = self.kinks.clone();
        kinks.extend(other.kinks.iter().map(|k| scaled_kink(k, sign)));
        Ok(GridFunction { spec: self.spec, samples, kinks: Vec::new() }.with_kinks(kinks))
    }

    pub fn scale(&self, factor: f64) -> GridFunction {
        let samples = self.samples.iter().map(|v| v * factor).collect();
        let kinks = self.kinks.iter().map(|k| scaled_kink(k, factor)).collect();
        GridFunction { spec: self.spec, samples, kinks: Vec::new() }.with_kinks(kinks)
    }

    /// Every other sample per axis, on the coarsened grid. Kinks carry over.
    pub fn decimate(&self) -> Result<GridFunction, GridError> {
        let coarse = self.spec.coarsened()?;
        let n = self.spec.points;
        let samples = match self.spec.n {
            1 => self.samples.iter().step_by(2).copied().collect(),
            _ => (0..n)
                .step_by(2)
                .flat_map(|i| (0..n).step_by(2).map(move |j| i * n + j))
                .map(|idx| self.samples[idx])
                .collect(),
        };
        Ok(GridFunction { spec: coarse, samples, kinks: self.kinks.clone() })
    }

    /// Checks that |u| is below 1e-12 (relative to max(1, sup|u|)) wherever |x|_inf >= L/2.
    pub fn check_support(&self) -> Result<(), GridError> {
        let threshold = 1e-12 * self.max_abs().max(1.0);
        let half = self.spec.half_width / 2.0;
        for (index, &value) in self.samples.iter().enumerate() {
            let c = self.spec.coords(index);
            let outer = c[..self.spec.n].iter().any(|x| x.abs() >= half);
            if outer && value.abs() > threshold {
                return Err(GridError::SupportRule { index, value, threshold });
            }
        }
        Ok(())
    }

    /// Writes `x,value` (or `x1,x2,value`) rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GridError> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| GridError::Csv(e.to_string());
        match self.spec.n {
            1 => w.write_record(["x", "value"]).map_err(csv_err)?,
            _ => w.write_record(["x1", "x2", "value"]).map_err(csv_err)?,
        }
        for (idx, v) in self.samples.iter().enumerate() {
            let c = self.spec.coords(idx);
            let mut row: Vec<String> = c[..self.spec.n].iter().map(|x| format!("{x:.16e}")).collect();
            row.push(format!("{v:.16e}"));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| GridError::Csv(e.to_string()))
    }
}

fn scaled_kink(k: &Kink, factor: f64) -> Kink {
    Kink { position: k.position, jumps: k.jumps.map(|j| j * factor) }
}

fn normalize_kinks(mut kinks: Vec<Kink>) -> Vec<Kink> {
    kinks.sort_by(|a, b| a.position.total_cmp(&b.position));
    let mut out: Vec<Kink> = Vec::with_capacity(kinks.len());
    for k in kinks {
        match out.last_mut() {
            Some(last) if last.position == k.position => {
                for (a, b) in last.jumps.iter_mut().zip(k.jumps) {
                    *a += b;
                }
            }
            _ => out.push(k),
        }
    }
    out.retain(|k| k.jumps.iter().any(|&j| j != 0.0));
    out
}

/// Evaluates `ast` at every node.
pub fn sample(ast: &ExprAst, spec: &GridSpec) -> Result<GridFunction, GridError> {
    if ast.dim() != spec.n {
        return Err(GridError::DimensionMismatch { expr: ast.dim(), grid: spec.n });
    }
    let mut samples = Vec::with_capacity(spec.len());
    for index in 0..spec.len() {
        let c = spec.coords(index);
        let v = ast
            .eval(&c[..spec.n])
            .map_err(|source| GridError::NonFiniteSample { index, source })?;
        samples.push(v);
    }
    Ok(GridFunction { spec: *spec, samples, kinks: Vec::new() })
}

/// Monomial coefficients of the interpolating polynomial through (ts, ys).
fn poly_fit(ts: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = ts.len();
    let mut dd = ys.to_vec();
    for j in 1..n {
        for i in (j..n).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (ts[i] - ts[i - j]);
        }
    }
    let mut poly = vec![dd[n - 1]];
    for k in (0..n - 1).rev() {
        // poly <- poly * (t - ts[k]) + dd[k]
        let mut next = vec![0.0; poly.len() + 1];
        for (i, &c) in poly.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= ts[k] * c;
        }
        next[0] += dd[k];
        poly = next;
    }
    poly
}

/// p and its first three derivatives at t.
fn poly_derivs(poly: &[f64], t: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    let mut coeffs = poly.to_vec();
    let mut factorial = 1.0;
    for (d, slot) in out.iter_mut().enumerate() {
        if d > 0 {
            factorial *= d as f64;
        }
        let v = coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c);
        *slot = v * factorial;
        // synthetic division: coefficients of (p(t') - p(t)) / (t' - t)
        let mut q = vec![0.0; coeffs.len().saturating_sub(1)];
        let mut carry = 0.0;
        for i in (1..coeffs.len()).rev() {
            carry = carry * t + coeffs[i];
            q[i - 1] = carry;
        }
        coeffs = q;
        if coeffs.is_empty() {
            break;
        }
    }
    out
}

/// Local polynomial model of samples `v` around cell [j, j+1] with `width` nodes.
fn local_poly(v: &[f64], j: usize, width: usize) -> Option<(Vec<f64>, f64, f64)> {
    let n = v.len();
    if n < width {
        return None;
    }
    let back = (width - 1) / 2;
    let start = j.saturating_sub(back).min(n - width);
    let ts: Vec<f64> = (start..start + width).map(|i| i as f64 - j as f64).collect();
    let ys = &v[start..start + width];
    let scale = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    Some((poly_fit(&ts, ys), scale, start as f64 - j as f64))
}

/// Root of the local model in [0, 1] (bracketed Newton).
fn cell_root(poly: &[f64], v0: f64, v1: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    let increasing = v1 > v0;
    let mut t = v0 / (v0 - v1);
    for _ in 0..100 {
        let d = poly_derivs(poly, t);
        let value = d[0];
        if value == 0.0 {
            return t;
        }
        if (value > 0.0) == increasing {
            hi = t;
        } else {
            lo = t;
        }
        let mut next = if d[1] != 0.0 { t - value / d[1] } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() < 1e-15 {
            return next;
        }
        t = next;
    }
    t
}

/// Finds the sign changes of `v` and the one-sided derivative jumps that
/// `max(v, 0)` acquires there.
fn positive_part_kinks(spec: &GridSpec, v: &[f64]) -> Vec<Kink> {
    let n = v.len();
    let h = spec.step();
    let mut out = Vec::new();
    for j in 0..n {
        let (t, dir) = if j + 1 < n && v[j] != 0.0 && v[j + 1] != 0.0 && (v[j] > 0.0) != (v[j + 1] > 0.0) {
            (None, (v[j + 1] - v[j]).signum())
        } else if v[j] == 0.0 && j > 0 && j + 1 < n && v[j - 1] * v[j + 1] < 0.0 {
            (Some(0.0), (v[j + 1] - v[j - 1]).signum())
        } else {
            continue;
        };
        let Some((fine, scale, _)) = local_poly(v, j, 6) else { continue };
        let Some((coarse, _, _)) = local_poly(v, j, 4) else { continue };
        let t = t.unwrap_or_else(|| cell_root(&fine, v[j], v[j + 1]));
        let df = poly_derivs(&fine, t);
        let dc = poly_derivs(&coarse, t);
        let mut jumps = [0.0; 3];
        for k in 0..3 {
            let power = h.powi(k as i32 + 1);
            let fine_k = df[k + 1] / power;
            let coarse_k = dc[k + 1] / power;
            let floor = 1e3 * f64::EPSILON * scale / power;
            if fine_k.abs() > 8.0 * (fine_k - coarse_k).abs() + floor {
                jumps[k] = dir * fine_k;
            }
        }
        out.push(Kink { position: spec.node(j) + t * h, jumps });
    }
    out
}

/// Sign of `v` on both sides of `z` from the bracketing samples: +1, -1, or 0 if mixed.
fn side_sign(spec: &GridSpec, v: &[f64], z: f64) -> f64 {
    let h = spec.step();
    let j = (((z + spec.half_width) / h).floor().max(0.0) as usize).min(v.len() - 1);
    let vals = [v[j], v[(j + 1).min(v.len() - 1)]];
    let pos = vals.iter().any(|&x| x > 0.0);
    let neg = vals.iter().any(|&x| x < 0.0);
    match (pos, neg) {
        (true, false) => 1.0,
        (false, true) => -1.0,
        _ => 0.0,
    }
}

/// Pointwise truncation. In one dimension the result carries kinks at the
/// sign changes of the truncated function, plus those inherited from `u`
/// that lie strictly inside the kept region.
pub fn truncate(u: &GridFunction, mode: Truncation) -> Result<GridFunction, GridError> {
    let shift = match mode {
        Truncation::ShiftedPos(eps) => {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(GridError::Shift(eps));
            }
            eps
        }
        _ => 0.0,
    };
    let v: Vec<f64> = if shift > 0.0 { u.samples.iter().map(|x| x - shift).collect() } else { u.samples.clone() };
    let samples: Vec<f64> = match mode {
        Truncation::Pos | Truncation::ShiftedPos(_) => v.iter().map(|&x| x.max(0.0)).collect(),
        Truncation::Neg => v.iter().map(|&x| (-x).max(0.0)).collect(),
        Truncation::Abs => v.iter().map(|&x| x.abs()).collect(),
    };
    if u.spec.n != 1 {
        return Ok(GridFunction { spec: u.spec, samples, kinks: Vec::new() });
    }
    let mut kinks = Vec::new();
    let factor = if mode == Truncation::Abs { 2.0 } else { 1.0 };
    for k in positive_part_kinks(&u.spec, &v) {
        kinks.push(scaled_kink(&k, factor));
    }
    for k in &u.kinks {
        let side = side_sign(&u.spec, &v, k.position);
        let keep = match mode {
            Truncation::Pos | Truncation::ShiftedPos(_) => (side > 0.0) as i32 as f64,
            Truncation::Neg => -((side < 0.0) as i32 as f64),
            Truncation::Abs => side,
        };
        if keep != 0.0 {
            kinks.push(scaled_kink(k, keep));
        }
    }
    Ok(GridFunction { spec: u.spec, samples, kinks: Vec::new() }.with_kinks(kinks))
}

/// Samplewise minimum.
pub fn pointwise_min(u: &GridFunction, v: &GridFunction) -> Result<GridFunction, GridError> {
    u.same_spec(v)?;
    let samples: Vec<f64> = u.samples.iter().zip(&v.samples).map(|(a, b)| a.min(*b)).collect();
    if u.spec.n != 1 {
        return Ok(GridFunction { spec: u.spec, samples, kinks: Vec::new() });
    }
    // min(u, v) = v - (v - u)^+
    let d = v.sub(u)?;
    let corr = truncate(&d, Truncation::Pos)?;
    let mut kinks = v.kinks.clone();
    kinks.extend(corr.kinks.iter().map(|k| scaled_kink(k, -1.0)));
    Ok(GridFunction { spec: u.spec, samples, kinks: Vec::new() }.with_kinks(kinks))
}

/// Smooth monotone step: 0 for t <= 0, 1 for t >= 1.
fn smooth_step(t: f64) -> f64 {
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let a = f(t);
    let b = f(1.0 - t);
    if a + b == 0.0 {
        return 0.0;
    }
    a / (a + b)
}

/// eta = 1 on |x|_inf <= inner, 0 on |x|_inf >= inner + margin, smooth between.
pub fn smooth_cutoff(spec: &GridSpec, inner_radius: f64, margin: f64) -> Result<GridFunction, GridError> {
    let geometry_ok = inner_radius > 0.0 && margin > 0.0 && inner_radius + margin < spec.half_width;
    if !geometry_ok {
        return Err(GridError::CutoffGeometry { inner: inner_radius, margin, half_width: spec.half_width });
    }
    let samples = (0..spec.len())
        .map(|idx| {
            let c = spec.coords(idx);
            c[..spec.n].iter().map(|x| smooth_step((inner_radius + margin - x.abs()) / margin)).product()
        })
        .collect();
    Ok(GridFunction { spec: *spec, samples, kinks: Vec::new() })
}

/// Discrete convolution with rho_h(x) = h^n rho(h x), rho the normalized bump
/// on the unit ball. The weights are normalized on the grid so the discrete
/// integral is preserved.
pub fn mollify(u: &GridFunction, h: u32) -> Result<GridFunction, GridError> {
    let step = u.spec.step();
    let radius = 1.0 / h.max(1) as f64;
    if h == 0 || radius < 2.0 * step {
        return Err(GridError::ScaleTooFine { h, step });
    }
    let reach = (radius / step).ceil() as isize;
    let n = u.spec.points as isize;
    let wrap = |i: isize| i.rem_euclid(n) as usize;
    let samples = match u.spec.n {
        1 => {
            let weights: Vec<(isize, f64)> = (-reach..=reach)
                .map(|k| (k, bump(k as f64 * step / radius)))
                .filter(|(_, w)| *w > 0.0)
                .collect();
            let total: f64 = weights.iter().map(|(_, w)| w).sum();
            (0..n)
                .map(|j| weights.iter().map(|&(k, w)| w / total * u.samples[wrap(j - k)]).sum())
                .collect()
        }
        _ => {
            let mut weights = Vec::new();
            for k1 in -reach..=reach {
                for k2 in -reach..=reach {
                    let r = ((k1 * k1 + k2 * k2) as f64).sqrt() * step / radius;
                    let w = bump(r);
                    if w > 0.0 {
                        weights.push((k1, k2, w));
                    }
                }
            }
            let total: f64 = weights.iter().map(|(_, _, w)| w).sum();
            let nu = n as usize;
            let mut out = vec![0.0; u.samples.len()];
            for (i1, row) in out.chunks_mut(nu).enumerate() {
                for (i2, slot) in row.iter_mut().enumerate() {
                    *slot = weights
                        .iter()
                        .map(|&(k1, k2, w)| {
                            w / total * u.samples[wrap(i1 as isize - k1) * nu + wrap(i2 as isize - k2)]
                        })
                        .sum();
                }
            }
            out
        }
    };
    Ok(GridFunction { spec: u.spec, samples, kinks: Vec::new() })
}

/// Riemann sum of u v over the grid.
pub fn l2_inner(u: &GridFunction, v: &GridFunction) -> Result<f64, GridError> {
    u.same_spec(v)?;
    let cell = u.spec.step().powi(u.spec.n as i32);
    Ok(u.samples.iter().zip(&v.samples).map(|(a, b)| a * b).sum::<f64>() * cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn spec1(l: f64, n: usize) -> GridSpec {
        GridSpec::new(1, l, n).unwrap()
    }

    fn sampled(src: &str, spec: &GridSpec) -> GridFunction {
        sample(&parse(src, spec.n()).unwrap(), spec).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(GridSpec::new(3, 1.0, 16).is_err());
        assert!(GridSpec::new(1, 1.0, 24).is_err());
        assert!(GridSpec::new(1, 1.0, 8).is_err());
        assert!(GridSpec::new(1, 0.0, 16).is_err());
        let s = spec1(1.0, 16);
        assert_eq!(s.step(), 0.125);
        assert_eq!(s.node(0), -1.0);
    }

    #[test]
    fn sample_nodes() {
        let s = spec1(1.0, 16);
        let u = sampled("x", &s);
        assert_eq!(&u.samples()[..4], &[-1.0, -0.875, -0.75, -0.625]);
        let s = spec1(2.0, 16);
        let u = sampled("bump(x)", &s);
        for (j, v) in u.samples().iter().enumerate() {
            if s.node(j).abs() >= 1.0 {
                assert_eq!(*v, 0.0);
            }
        }
        let s = spec1(20.0, 4096);
        let u = sampled("x*exp(-x^2)", &s);
        let j = ((1.0 + 20.0) / s.step()).round() as usize;
        assert!((u.samples()[j] - (-1f64).exp()).abs() < 2e-3);
        let err = sample(&parse("1/x", 1).unwrap(), &s).unwrap_err();
        assert!(matches!(err, GridError::NonFiniteSample { index: 2048, .. }));
    }

    #[test]
    fn truncation_identities_exact() {
        let s = spec1(5.0, 64);
        let u = sampled("sin(3*x)*exp(-x^2/4)", &s);
        let p = truncate(&u, Truncation::Pos).unwrap();
        let m = truncate(&u, Truncation::Neg).unwrap();
        let a = truncate(&u, Truncation::Abs).unwrap();
        for j in 0..64 {
            assert_eq!(p.samples()[j] - m.samples()[j], u.samples()[j]);
            assert_eq!(p.samples()[j] + m.samples()[j], a.samples()[j]);
            assert_eq!(p.samples()[j] * m.samples()[j], 0.0);
        }
        let big = truncate(&u, Truncation::ShiftedPos(10.0)).unwrap();
        assert!(big.is_zero());
        assert!(big.kinks().is_empty());
        assert!(truncate(&u, Truncation::ShiftedPos(-1.0)).is_err());
    }

    #[test]
    fn kink_of_simple_crossing() {
        // u = x e^{-x^2}: u'(0) = 1, u''(0) = 0, u'''(0) = -6
        let s = spec1(20.0, 4096);
        let u = sampled("x*exp(-x^2)", &s);
        let p = truncate(&u, Truncation::Pos).unwrap();
        assert_eq!(p.kinks().len(), 1);
        let k = p.kinks()[0];
        assert_eq!(k.position, 0.0);
        assert!((k.jumps[0] - 1.0).abs() < 1e-9);
        assert_eq!(k.jumps[1], 0.0);
        assert!((k.jumps[2] + 6.0).abs() < 1e-4);
        let m = truncate(&u, Truncation::Neg).unwrap();
        assert_eq!(m.kinks(), p.kinks());
        let a = truncate(&u, Truncation::Abs).unwrap();
        assert!((a.kinks()[0].jumps[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn kink_of_shifted_crossing_between_nodes() {
        // roots of x e^{-x^2} = 0.2 and the jumps there
        let s = spec1(20.0, 4096);
        let u = sampled("x*exp(-x^2)", &s);
        let p = truncate(&u, Truncation::ShiftedPos(0.2)).unwrap();
        assert_eq!(p.kinks().len(), 2);
        for k in p.kinks() {
            let z = k.position;
            let g = (-z * z).exp();
            assert!((z * g - 0.2).abs() < 1e-11);
            let d1 = (1.0 - 2.0 * z * z) * g;
            let d2 = (4.0 * z.powi(3) - 6.0 * z) * g;
            let dir = d1.signum();
            assert!((k.jumps[0] - dir * d1).abs() < 1e-10);
            assert!((k.jumps[1] - dir * d2).abs() < 1e-7);
        }
    }

    #[test]
    fn kink_of_cubic_crossing_has_only_third_jump() {
        let s = spec1(20.0, 4096);
        let u = sampled("x^3*exp(-x^2)", &s);
        let p = truncate(&u, Truncation::Pos).unwrap();
        assert_eq!(p.kinks().len(), 1);
        let k = p.kinks()[0];
        assert_eq!(k.jumps[0], 0.0);
        assert_eq!(k.jumps[1], 0.0);
        assert!((k.jumps[2] - 6.0).abs() < 1e-5);
        assert_eq!(k.order(), Some(3));
    }

    #[test]
    fn inherited_kinks() {
        let s = spec1(20.0, 4096);
        let u = sampled("x*exp(-x^2)", &s);
        let p = truncate(&u, Truncation::Pos).unwrap();
        let pp = truncate(&p, Truncation::Pos).unwrap();
        assert_eq!(pp.kinks(), p.kinks());
    }

    #[test]
    fn pointwise_min_examples() {
        let s = spec1(2.0, 16);
        let u = sampled("x", &s);
        let v = sampled("1-x", &s);
        assert_eq!(pointwise_min(&u, &u).unwrap().samples(), u.samples());
        let m = pointwise_min(&u, &v).unwrap();
        for j in 0..16 {
            assert_eq!(m.samples()[j], u.samples()[j].min(v.samples()[j]));
        }
        let zero = GridFunction::zeros(s);
        let lhs = pointwise_min(&u, &zero).unwrap();
        let rhs = truncate(&u, Truncation::Neg).unwrap().scale(-1.0);
        assert_eq!(lhs.samples(), rhs.samples());
        assert_eq!(lhs.kinks().len(), 1);
        assert_eq!(lhs.kinks()[0].position, rhs.kinks()[0].position);
        assert!((lhs.kinks()[0].jumps[0] - rhs.kinks()[0].jumps[0]).abs() < 1e-12);
        let other = spec1(2.0, 32);
        assert_eq!(pointwise_min(&u, &GridFunction::zeros(other)), Err(GridError::SpecMismatch));
    }

    #[test]
    fn cutoff_shape() {
        let s = spec1(8.0, 256);
        let eta = smooth_cutoff(&s, 2.0, 1.5).unwrap();
        assert_eq!(eta.samples()[128], 1.0);
        assert_eq!(eta.samples()[0], 0.0);
        for j in 128..255 {
            assert!(eta.samples()[j + 1] <= eta.samples()[j]);
            assert!((0.0..=1.0).contains(&eta.samples()[j]));
        }
        assert!(smooth_cutoff(&s, 6.0, 2.0).is_err());
        let s2 = GridSpec::new(2, 4.0, 32).unwrap();
        let eta = smooth_cutoff(&s2, 1.0, 1.0).unwrap();
        assert_eq!(eta.samples()[16 * 32 + 16], 1.0);
        assert_eq!(eta.samples()[0], 0.0);
    }

    #[test]
    fn mollify_preserves_mass_and_support() {
        let s = spec1(8.0, 1024);
        let u = sampled("bump(x/2)", &s);
        let m = mollify(&u, 2).unwrap();
        let mass = |f: &GridFunction| f.samples().iter().sum::<f64>() * s.step();
        assert!((mass(&m) - mass(&u)).abs() <= 1e-12 * mass(&u));
        for j in 0..1024 {
            if s.node(j).abs() >= 2.5 {
                assert_eq!(m.samples()[j], 0.0);
            }
            assert!(m.samples()[j] >= 0.0);
        }
        let plateau = sampled("1", &s);
        let m = mollify(&plateau, 4).unwrap();
        assert!((m.samples()[512] - 1.0).abs() < 1e-14);
        assert!(matches!(mollify(&u, 64), Err(GridError::ScaleTooFine { .. })));
    }

    #[test]
    fn mollify_2d_mass() {
        let s = GridSpec::new(2, 4.0, 64).unwrap();
        let u = sampled("bump(x1)*bump(x2)", &s);
        let m = mollify(&u, 2).unwrap();
        let total = |f: &GridFunction| f.samples().iter().sum::<f64>();
        assert!((total(&m) - total(&u)).abs() <= 1e-12 * total(&u));
    }

    #[test]
    fn l2_examples() {
        let s = spec1(16.0, 2048);
        let g = sampled("exp(-x^2/2)", &s);
        let v = l2_inner(&g, &g).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-10 * v);
        let left = sampled("bump(x+2)", &s);
        let right = sampled("bump(x-2)", &s);
        assert_eq!(l2_inner(&left, &right).unwrap(), 0.0);
        let z = GridFunction::zeros(s);
        assert_eq!(l2_inner(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn support_rule() {
        let s = spec1(20.0, 1024);
        assert!(sampled("x*exp(-x^2)", &s).check_support().is_ok());
        assert!(sampled("exp(-abs(x))", &s).check_support().is_err());
    }

    #[test]
    fn csv_columns() {
        let s = spec1(1.0, 16);
        let mut buf = Vec::new();
        sampled("x", &s).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,value\n-1.0000000000000000e0,-1.0000000000000000e0\n"));
        assert_eq!(text.lines().count(), 17);
    }

    #[test]
    fn poly_tools() {
        let ts = [-1.0, 0.0, 1.0, 2.0];
        let ys: Vec<f64> = ts.iter().map(|t: &f64| 1.0 + 2.0 * t - t.powi(3)).collect();
        let p = poly_fit(&ts, &ys);
        let d = poly_derivs(&p, 0.5);
        assert!((d[0] - (1.0 + 1.0 - 0.125)).abs() < 1e-14);
        assert!((d[1] - (2.0 - 0.75)).abs() < 1e-14);
        assert!((d[2] + 3.0).abs() < 1e-14);
        assert!((d[3] + 6.0).abs() < 1e-14);
    }
}
