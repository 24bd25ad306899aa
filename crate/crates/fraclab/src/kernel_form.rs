//! The kernel side: double integrals of u^+(x) u^-(y) / |x-y|^{1+2s}, the
//! disjoint-support interaction integral, and the Gagliardo difference form.
//!
//! Functions are the piecewise-linear interpolants of their samples, extended
//! by zero one node beyond each end of the grid. Each integral is split into
//! pairs of constant-sign intervals. A pair is integrated in local
//! coordinates p, q measured from the ends facing each other, so the
//! distance is g + p + q with gap g >= 0. Cells in p and q shrink
//! dyadically toward p = q = 0. When the intervals touch (g = 0), the last
//! corner cell is integrated in closed form. There both interpolants are
//! exactly linear, m_a p and m_b q.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{GridFunction, GridSpec};
use crate::special_functions::{kernel_constant, FractionalOrder, SpecialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("kernel quadrature supports n = 1 only, got n = {0}")]
    Dimension(usize),
    #[error("touching sign intervals are not integrable at s = {0} >= 3/2")]
    NotIntegrable(f64),
    #[error("order s = {0} outside (0, 1)")]
    OrderRange(f64),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("grid functions live on different grids")]
    SpecMismatch,
    #[error("function must be non-negative (sample {index} is {value})")]
    Negative { index: usize, value: f64 },
    #[error("supports overlap or touch (gap {gap}); use phi_integral")]
    SupportsOverlap { gap: f64 },
    #[error("tolerance {tol:e} not reached: value {value}, estimate {estimate:e}")]
    ToleranceNotReached { value: f64, estimate: f64, tol: f64 },
}

/// Value, a posteriori error estimate and dyadic depth of a kernel integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub depth: u32,
}

/// 12-point Gauss-Legendre nodes and weights on [-1, 1] (positive half).
const GL_X: [f64; 6] = [
    0.125_233_408_511_468_915_5,
    0.367_831_498_998_180_193_8,
    0.587_317_954_286_617_447_3,
    0.769_902_674_194_304_687_0,
    0.904_117_256_370_474_856_7,
    0.981_560_634_246_719_250_7,
];
const GL_W: [f64; 6] = [
    0.249_147_045_813_402_785_0,
    0.233_492_536_538_354_808_8,
    0.203_167_426_723_065_921_7,
    0.160_078_328_543_346_226_3,
    0.106_939_325_995_318_430_9,
    0.047_175_336_386_511_827_2,
];

/// Nodes and weights of the 12-point rule on [a, b].
fn gauss_on(a: f64, b: f64) -> [(f64, f64); 12] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 12];
    for i in 0..6 {
        out[2 * i] = (mid - half * GL_X[i], half * GL_W[i]);
        out[2 * i + 1] = (mid + half * GL_X[i], half * GL_W[i]);
    }
    out
}

/// Piecewise-linear interpolant of grid samples, zero outside [x_{-1}, x_N].
struct Interpolant<'a> {
    spec: GridSpec,
    samples: &'a [f64],
}

impl Interpolant<'_> {
    /// Value at extended node k = -1 ..= N.
    fn node_value(&self, k: isize) -> f64 {
        if k < 0 || k as usize >= self.samples.len() {
            0.0
        } else {
            self.samples[k as usize]
        }
    }

    fn node(&self, k: isize) -> f64 {
        -self.spec.half_width() + k as f64 * self.spec.step()
    }

    fn eval(&self, x: f64) -> f64 {
        let h = self.spec.step();
        let t = (x + self.spec.half_width()) / h;
        let k = t.floor();
        if k < -1.0 || k > self.samples.len() as f64 {
            return 0.0;
        }
        let frac = t - k;
        let k = k as isize;
        self.node_value(k) * (1.0 - frac) + self.node_value(k + 1) * frac
    }
}

/// A maximal interval on which the interpolant has constant strict sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignInterval {
    pub lo: f64,
    pub hi: f64,
    /// +1 or -1.
    pub sign: f64,
    /// |u| = slope_lo (x - lo) on [lo, lo + len_lo].
    pub slope_lo: f64,
    pub len_lo: f64,
    /// |u| = slope_hi (hi - x) on [hi - len_hi, hi].
    pub slope_hi: f64,
    pub len_hi: f64,
}

/// Sign structure of a grid function's interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfacePartition {
    /// Sign changes between adjacent nodes (linear-interpolation roots), sorted.
    pub crossings: Vec<f64>,
    pub intervals: Vec<SignInterval>,
}

/// Splits the interpolant of `u` into constant-sign intervals.
pub fn interface_partition(u: &GridFunction) -> InterfacePartition {
    let interp = Interpolant { spec: *u.spec(), samples: u.samples() };
    let n = u.samples().len() as isize;
    let mut crossings = Vec::new();
    let mut intervals = Vec::new();
    // (start position, sign, first node index inside) of the open interval
    let mut open: Option<(f64, f64, isize)> = None;
    for k in -1..n {
        let a = interp.node_value(k);
        let b = interp.node_value(k + 1);
        let xa = interp.node(k);
        let xb = interp.node(k + 1);
        let sa = sign_of(a);
        let sb = sign_of(b);
        if sa == 0.0 && sb != 0.0 {
            open = Some((xa, sb, k + 1));
        } else if sa != 0.0 && sb == 0.0 {
            if let Some((lo, sign, first)) = open.take() {
                intervals.push(make_interval(&interp, lo, xb, sign, first, k));
            }
        } else if sa * sb < 0.0 {
            let root = xa + (xb - xa) * a / (a - b);
            crossings.push(root);
            if let Some((lo, sign, first)) = open.take() {
                intervals.push(make_interval(&interp, lo, root, sign, first, k));
            }
            open = Some((root, sb, k + 1));
        }
    }
    InterfacePartition { crossings, intervals }
}

fn sign_of(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn make_interval(interp: &Interpolant<'_>, lo: f64, hi: f64, sign: f64, first: isize, last: isize) -> SignInterval {
    let len_lo = (interp.node(first) - lo).min(hi - lo);
    let len_hi = (hi - interp.node(last)).min(hi - lo);
    let slope_lo = if len_lo > 0.0 { interp.node_value(first).abs() / len_lo } else { 0.0 };
    let slope_hi = if len_hi > 0.0 { interp.node_value(last).abs() / len_hi } else { 0.0 };
    SignInterval { lo, hi, sign, slope_lo, len_lo, slope_hi, len_hi }
}

/// An interval seen from one of its ends: x = end + dir p, p in [0, extent].
struct Side<'a> {
    interp: &'a Interpolant<'a>,
    end: f64,
    dir: f64,
    extent: f64,
    linear_len: f64,
    slope: f64,
}

impl Side<'_> {
    fn abs_value(&self, p: f64) -> f64 {
        if p <= self.linear_len {
            self.slope * p
        } else {
            self.interp.eval(self.end + self.dir * p).abs()
        }
    }
}

/// Quadrature controls; the defaults are what the public entry points use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    /// Widest cell allowed, in length units.
    pub cell_width: f64,
    /// Add the closed-form corner cell for touching intervals.
    pub closure: bool,
    /// Force the dyadic depth instead of choosing it from the geometry.
    pub depth: Option<u32>,
    /// Number of halvings of `cell_width` tried before giving up.
    pub refinements: u32,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { cell_width: 0.25, closure: true, depth: None, refinements: 4 }
    }
}

/// Cells in one local coordinate: dyadic toward 0 down to R 2^{-depth}, each
/// subdivided to width at most `width`.
fn cells(extent: f64, r: f64, depth: u32, width: f64) -> Vec<(f64, f64)> {
    let mut bounds = Vec::new();
    let mut hi = r;
    for _ in 0..depth {
        let lo = hi / 2.0;
        bounds.push((lo, hi));
        hi = lo;
    }
    bounds.push((0.0, hi));
    let mut out = Vec::new();
    for (lo, hi) in bounds.into_iter().rev() {
        let hi = hi.min(extent);
        if hi <= lo {
            continue;
        }
        let pieces = ((hi - lo) / width).ceil().max(1.0) as usize;
        let step = (hi - lo) / pieces as f64;
        for i in 0..pieces {
            let a = lo + i as f64 * step;
            let b = if i + 1 == pieces { hi } else { a + step };
            out.push((a, b));
        }
    }
    out
}

/// int_0^1 int_0^1 p q (p+q)^{-1-2s} dp dq. Integrating along p + q = r
/// leaves r^3/6 on [0, 1] and -r^3/6 + r - 2/3 on [1, 2].
fn corner_integral(s: f64) -> f64 {
    // int_1^2 r^{k-1-2s} dr, stable when k = 2s
    let moment = |k: f64| {
        let x = k - 2.0 * s;
        if x == 0.0 {
            std::f64::consts::LN_2
        } else {
            (x * std::f64::consts::LN_2).exp_m1() / x
        }
    };
    1.0 / (6.0 * (3.0 - 2.0 * s)) - moment(3.0) / 6.0 + moment(1.0) - 2.0 * moment(0.0) / 3.0
}

/// Sampled cells for one side: (node positions p, weight * |u(p)|) per cell.
fn sample_cells(side: &Side<'_>, cells: &[(f64, f64)]) -> Vec<[(f64, f64); 12]> {
    cells
        .iter()
        .map(|&(a, b)| {
            let mut pts = gauss_on(a, b);
            for pt in pts.iter_mut() {
                pt.1 *= side.abs_value(pt.0);
            }
            pts
        })
        .collect()
}

/// int int |u_a|(p) |u_b|(q) (g + p + q)^{-1-2s} over one interval pair.
fn pair_value(a: &Side<'_>, b: &Side<'_>, gap: f64, s: f64, depth: u32, width: f64, closure: bool) -> f64 {
    let e = 1.0 + 2.0 * s;
    let r = a.extent.max(b.extent);
    let ca = cells(a.extent, r, depth, width);
    let cb = cells(b.extent, r, depth, width);
    let sa = sample_cells(a, &ca);
    let sb = sample_cells(b, &cb);
    let corner = r * 0.5f64.powi(depth as i32);
    let touching = gap == 0.0;
    let rows: Vec<f64> = sa
        .par_iter()
        .enumerate()
        .map(|(i, pa)| {
            let mut row = 0.0;
            for (j, pb) in sb.iter().enumerate() {
                if touching && ca[i].0 == 0.0 && cb[j].0 == 0.0 {
                    continue;
                }
                let mut cell = 0.0;
                for &(p, wp) in pa.iter() {
                    if wp == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for &(q, wq) in pb.iter() {
                        inner += wq * (gap + p + q).powf(-e);
                    }
                    cell += wp * inner;
                }
                row += cell;
            }
            row
        })
        .collect();
    let mut total: f64 = rows.iter().sum();
    if touching && closure {
        total += a.slope * b.slope * corner.powf(3.0 - 2.0 * s) * corner_integral(s);
    }
    total
}

/// Depth used for one pair: cells at the corner no larger than the gap, or,
/// when touching, no larger than the linear pieces at both ends.
fn pair_depth(a: &Side<'_>, b: &Side<'_>, gap: f64) -> u32 {
    let r = a.extent.max(b.extent);
    let target = if gap > 0.0 { gap } else { a.linear_len.min(b.linear_len) };
    if target >= r {
        return if gap > 0.0 { 0 } else { 1 };
    }
    ((r / target).log2().ceil().max(1.0)) as u32
}

/// The two facing ends of intervals `a` (for x) and `b` (for y).
fn facing_sides<'a>(interp_a: &'a Interpolant<'a>, a: &SignInterval, interp_b: &'a Interpolant<'a>, b: &SignInterval) -> (Side<'a>, Side<'a>, f64) {
    let trim_a = a.hi - a.lo;
    let trim_b = b.hi - b.lo;
    if a.lo >= b.hi {
        let sa = Side { interp: interp_a, end: a.lo, dir: 1.0, extent: trim_a, linear_len: a.len_lo, slope: a.slope_lo };
        let sb = Side { interp: interp_b, end: b.hi, dir: -1.0, extent: trim_b, linear_len: b.len_hi, slope: b.slope_hi };
        (sa, sb, a.lo - b.hi)
    } else {
        let sa = Side { interp: interp_a, end: a.hi, dir: -1.0, extent: trim_a, linear_len: a.len_hi, slope: a.slope_hi };
        let sb = Side { interp: interp_b, end: b.lo, dir: 1.0, extent: trim_b, linear_len: b.len_lo, slope: b.slope_lo };
        (sa, sb, b.lo - a.hi)
    }
}

/// Drops the far part of an interval where |u| is negligible.
fn trimmed(interp: &Interpolant<'_>, iv: &SignInterval, scale: f64) -> SignInterval {
    let floor = 1e-18 * scale;
    let h = interp.spec.step();
    let l = interp.spec.half_width();
    let first = ((iv.lo + l) / h).ceil() as isize;
    let last = ((iv.hi + l) / h).floor() as isize;
    let mut lo_idx = first;
    while lo_idx < last && interp.node_value(lo_idx).abs() <= floor {
        lo_idx += 1;
    }
    let mut hi_idx = last;
    while hi_idx > lo_idx && interp.node_value(hi_idx).abs() <= floor {
        hi_idx -= 1;
    }
    let mut out = *iv;
    // keep the end that is a root; only trim ends made of negligible nodes
    if lo_idx > first + 1 {
        out.lo = interp.node(lo_idx - 1);
        out.len_lo = h.min(out.hi - out.lo);
        out.slope_lo = interp.node_value(lo_idx).abs() / h;
    }
    if hi_idx + 1 < last {
        out.hi = interp.node(hi_idx + 1);
        out.len_hi = h.min(out.hi - out.lo);
        out.slope_hi = interp.node_value(hi_idx).abs() / h;
    }
    out
}

/// One evaluation of the whole sum over interval pairs at a given cell width
/// and depth offset.
fn evaluate_pairs(
    pairs: &[(SignInterval, SignInterval)],
    interp_a: &Interpolant<'_>,
    interp_b: &Interpolant<'_>,
    s: f64,
    width: f64,
    depth_offset: i32,
    opts: &KernelOptions,
) -> (f64, u32) {
    let mut total = 0.0;
    let mut max_depth = 0;
    for (a, b) in pairs {
        let (sa, sb, gap) = facing_sides(interp_a, a, interp_b, b);
        let base = opts.depth.unwrap_or_else(|| pair_depth(&sa, &sb, gap));
        let depth = (base as i32 + depth_offset).max(if gap > 0.0 { 0 } else { 1 }) as u32;
        max_depth = max_depth.max(depth);
        total += pair_value(&sa, &sb, gap, s, depth, width, opts.closure);
    }
    (total, max_depth)
}

fn refine(
    pairs: &[(SignInterval, SignInterval)],
    interp_a: &Interpolant<'_>,
    interp_b: &Interpolant<'_>,
    s: f64,
    tol: f64,
    opts: &KernelOptions,
) -> Result<QuadratureResult, KernelError> {
    if pairs.is_empty() {
        return Ok(QuadratureResult { value: 0.0, error_estimate: 0.0, depth: 1 });
    }
    let mut width = opts.cell_width;
    let mut last = None;
    for _ in 0..=opts.refinements {
        let (fine, depth) = evaluate_pairs(pairs, interp_a, interp_b, s, width, 0, opts);
        let (coarse, _) = evaluate_pairs(pairs, interp_a, interp_b, s, 2.0 * width, -1, opts);
        let estimate = (fine - coarse).abs();
        let result = QuadratureResult { value: fine, error_estimate: estimate, depth: depth.max(1) };
        if estimate <= tol * fine.abs() {
            return Ok(result);
        }
        last = Some(result);
        width /= 2.0;
    }
    let r = last.expect("at least one pass");
    Err(KernelError::ToleranceNotReached { value: r.value, estimate: r.error_estimate, tol })
}

fn check_common(u: &GridFunction, tol: f64) -> Result<(), KernelError> {
    if u.spec().n() != 1 {
        return Err(KernelError::Dimension(u.spec().n()));
    }
    if !(tol > 0.0) {
        return Err(KernelError::Tolerance(tol));
    }
    Ok(())
}

/// int int u^+(x) u^-(y) / |x-y|^{1+2s} dx dy. `tol` is relative.
pub fn phi_integral(u: &GridFunction, s: FractionalOrder, tol: f64) -> Result<QuadratureResult, KernelError> {
    phi_integral_with(u, s, tol, &KernelOptions::default())
}

pub fn phi_integral_with(u: &GridFunction, s: FractionalOrder, tol: f64, opts: &KernelOptions) -> Result<QuadratureResult, KernelError> {
    check_common(u, tol)?;
    if s.is_integer() {
        return Err(SpecialError::IntegerOrder(s.value()).into());
    }
    let interp = Interpolant { spec: *u.spec(), samples: u.samples() };
    let part = interface_partition(u);
    let scale = u.max_abs();
    let ivs: Vec<SignInterval> = part.intervals.iter().map(|iv| trimmed(&interp, iv, scale)).collect();
    let mut pairs = Vec::new();
    for a in ivs.iter().filter(|iv| iv.sign > 0.0) {
        for b in ivs.iter().filter(|iv| iv.sign < 0.0) {
            let touching = a.lo == b.hi || a.hi == b.lo;
            if touching && s.value() >= 1.5 {
                return Err(KernelError::NotIntegrable(s.value()));
            }
            pairs.push((*a, *b));
        }
    }
    refine(&pairs, &interp, &interp, s.value(), tol, opts)
}

/// int int v(x) w(y) / |x-y|^{1+2s} for non-negative v, w with separated supports.
pub fn interaction_integral(v: &GridFunction, w: &GridFunction, s: FractionalOrder, tol: f64) -> Result<QuadratureResult, KernelError> {
    check_common(v, tol)?;
    if v.spec() != w.spec() {
        return Err(KernelError::SpecMismatch);
    }
    if s.is_integer() {
        return Err(SpecialError::IntegerOrder(s.value()).into());
    }
    for f in [v, w] {
        if let Some((index, &value)) = f.samples().iter().enumerate().find(|(_, x)| **x < 0.0) {
            return Err(KernelError::Negative { index, value });
        }
    }
    let iv = Interpolant { spec: *v.spec(), samples: v.samples() };
    let iw = Interpolant { spec: *w.spec(), samples: w.samples() };
    let pv: Vec<SignInterval> =
        interface_partition(v).intervals.iter().map(|x| trimmed(&iv, x, v.max_abs())).collect();
    let pw: Vec<SignInterval> =
        interface_partition(w).intervals.iter().map(|x| trimmed(&iw, x, w.max_abs())).collect();
    let mut pairs = Vec::new();
    for a in &pv {
        for b in &pw {
            let gap = if a.lo >= b.hi { a.lo - b.hi } else { b.lo - a.hi };
            if gap <= 0.0 {
                return Err(KernelError::SupportsOverlap { gap });
            }
            pairs.push((*a, *b));
        }
    }
    refine(&pairs, &iv, &iw, s.value(), tol, &KernelOptions::default())
}

/// (C_{1,s}/2) int int (u(x)-u(y))(v(x)-v(y)) / |x-y|^{1+2s} dx dy for s in (0, 1).
pub fn gagliardo_form(u: &GridFunction, v: &GridFunction, s: f64, tol: f64) -> Result<f64, KernelError> {
    check_common(u, tol)?;
    if u.spec() != v.spec() {
        return Err(KernelError::SpecMismatch);
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(KernelError::OrderRange(s));
    }
    let c = kernel_constant(1, FractionalOrder::non_integer(s)?)?.value;
    let corr = DifferenceCorrelation::new(u, v);
    let mut width = 0.25;
    let mut previous = corr.integral(s, 2.0 * width);
    for _ in 0..6 {
        let current = corr.integral(s, width);
        let estimate = (current - previous).abs();
        if estimate <= tol * current.abs() || current == 0.0 {
            return Ok(c * current);
        }
        previous = current;
        width /= 2.0;
    }
    Err(KernelError::ToleranceNotReached { value: c * previous, estimate: f64::NAN, tol })
}

/// A(t) = int (f(x+t) - f(x)) (g(x+t) - g(x)) dx for piecewise-linear f, g.
struct DifferenceCorrelation {
    h: f64,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl DifferenceCorrelation {
    fn new(u: &GridFunction, v: &GridFunction) -> Self {
        // extended node values with two zero nodes of padding per side
        let pad = |x: &[f64]| {
            let mut out = vec![0.0; x.len() + 4];
            out[2..2 + x.len()].copy_from_slice(x);
            out
        };
        Self { h: u.spec().step(), f: pad(u.samples()), g: pad(v.samples()) }
    }

    fn at(values: &[f64], k: isize) -> f64 {
        if k < 0 || k as usize >= values.len() {
            0.0
        } else {
            values[k as usize]
        }
    }

    /// Exact A(t) by Simpson on the pieces where both differences are linear.
    fn value(&self, t: f64) -> f64 {
        let h = self.h;
        let m = (t / h).floor() as isize;
        let r = t - m as f64 * h;
        let n = self.f.len() as isize;
        let diff = |vals: &[f64], k: isize, sigma: f64| -> f64 {
            // f(x_k + sigma + t) - f(x_k + sigma), sigma in [0, h]
            let here = Self::at(vals, k) + (Self::at(vals, k + 1) - Self::at(vals, k)) * sigma / h;
            let shifted = if sigma <= h - r {
                let base = k + m;
                Self::at(vals, base) + (Self::at(vals, base + 1) - Self::at(vals, base)) * (r + sigma) / h
            } else {
                let base = k + m + 1;
                Self::at(vals, base) + (Self::at(vals, base + 1) - Self::at(vals, base)) * (sigma - (h - r)) / h
            };
            shifted - here
        };
        let mut total = 0.0;
        for k in (-m - 2)..n {
            for (a, b) in [(0.0, h - r), (h - r, h)] {
                if b <= a {
                    continue;
                }
                let mid = 0.5 * (a + b);
                let prod = |sigma: f64| diff(&self.f, k, sigma) * diff(&self.g, k, sigma);
                total += (b - a) / 6.0 * (prod(a) + 4.0 * prod(mid) + prod(b));
            }
        }
        total
    }

    /// Coefficients of A(t) = a2 t^2 + a3 t^3 on [0, h].
    fn small_t(&self) -> (f64, f64) {
        let h = self.h;
        let n = self.f.len() as isize;
        let slope = |vals: &[f64], k: isize| (Self::at(vals, k + 1) - Self::at(vals, k)) / h;
        let mut a2 = 0.0;
        let mut a3 = 0.0;
        for k in -1..n {
            a2 += slope(&self.f, k) * slope(&self.g, k);
            a3 += (slope(&self.f, k + 1) - slope(&self.f, k)) * (slope(&self.g, k + 1) - slope(&self.g, k));
        }
        (h * a2, -a3 / 6.0)
    }

    /// Exact int f g of the interpolants.
    fn inner(&self) -> f64 {
        let n = self.f.len() as isize;
        let mut total = 0.0;
        for k in -1..n {
            let (f0, f1) = (Self::at(&self.f, k), Self::at(&self.f, k + 1));
            let (g0, g1) = (Self::at(&self.g, k), Self::at(&self.g, k + 1));
            total += self.h / 6.0 * (2.0 * f0 * g0 + f0 * g1 + f1 * g0 + 2.0 * f1 * g1);
        }
        total
    }

    /// int_0^inf A(t) t^{-1-2s} dt.
    fn integral(&self, s: f64, width: f64) -> f64 {
        let h = self.h;
        let (a2, a3) = self.small_t();
        let mut total = a2 * h.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s) + a3 * h.powf(3.0 - 2.0 * s) / (3.0 - 2.0 * s);
        let span = (self.f.len() as f64 + 2.0) * h;
        let mut cells = Vec::new();
        let mut lo = h;
        while lo < span {
            let hi = if lo < width { (2.0 * lo).min(width.max(2.0 * h)) } else { lo + width };
            let hi = hi.min(span);
            cells.push((lo, hi));
            lo = hi;
        }
        let parts: Vec<f64> = cells
            .par_iter()
            .map(|&(a, b)| gauss_on(a, b).iter().map(|&(t, w)| w * self.value(t) * t.powf(-1.0 - 2.0 * s)).sum())
            .collect();
        total += parts.iter().sum::<f64>();
        // beyond the span the shifted copies are disjoint: A = 2 <f, g>
        total += self.inner() * span.powf(-2.0 * s) / s;
        total
    }
}

/// Kernel-side value of Q_s(u^+, u^-): -C_{1,s} times [`phi_integral`].
pub fn kernel_cross_form(u: &GridFunction, s: FractionalOrder, tol: f64) -> Result<(f64, QuadratureResult), KernelError> {
    let c = kernel_constant(1, s)?.value;
    let q = phi_integral(u, s, tol)?;
    Ok((-c * q.value, q))
}
