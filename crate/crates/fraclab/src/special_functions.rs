//! Gamma, zeta and Dirichlet beta on the real line, and the kernel constant
//! C_{n,s} of the fractional Laplacian.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("pole at x = {0}")]
    Pole(f64),
    #[error("gamma({0}) overflows f64")]
    Overflow(f64),
    #[error("argument {0} is not finite")]
    NonFinite(f64),
    #[error("order s = {0} must be positive")]
    NonPositiveOrder(f64),
    #[error("order s = {0} is an integer; the kernel representation does not exist")]
    IntegerOrder(f64),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("distance r = {0} must be positive")]
    NonPositiveDistance(f64),
}

/// Tolerance below which an order is classified as an integer.
pub const INTEGER_TOLERANCE: f64 = 1e-12;

/// Largest argument whose gamma value fits in an f64.
const GAMMA_MAX_ARG: f64 = 171.624_376_956_302_7;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_P: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// A positive fractional order together with its integer part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalOrder {
    s: f64,
    floor_s: u32,
    is_integer: bool,
}

impl FractionalOrder {
    pub fn new(s: f64) -> Result<Self, SpecialError> {
        if !s.is_finite() {
            return Err(SpecialError::NonFinite(s));
        }
        if s <= 0.0 {
            return Err(SpecialError::NonPositiveOrder(s));
        }
        let is_integer = (s - s.round()).abs() < INTEGER_TOLERANCE;
        let floor_s = if is_integer { s.round() } else { s.floor() } as u32;
        Ok(Self { s, floor_s, is_integer })
    }

    /// Like [`FractionalOrder::new`] but rejects integer orders.
    pub fn non_integer(s: f64) -> Result<Self, SpecialError> {
        let order = Self::new(s)?;
        if order.is_integer {
            return Err(SpecialError::IntegerOrder(s));
        }
        Ok(order)
    }

    pub fn value(&self) -> f64 {
        self.s
    }

    pub fn floor(&self) -> u32 {
        self.floor_s
    }

    pub fn is_integer(&self) -> bool {
        self.is_integer
    }
}

/// sin(pi x) with the argument reduced before multiplying by pi.
pub fn sin_pi(x: f64) -> f64 {
    let mut r = x - 2.0 * (x / 2.0).round();
    if r > 0.5 {
        r = 1.0 - r;
    } else if r < -0.5 {
        r = -1.0 - r;
    }
    (PI * r).sin()
}

/// cos(pi x), reduced like [`sin_pi`].
pub fn cos_pi(x: f64) -> f64 {
    sin_pi(x + 0.5)
}

fn gamma_positive(x: f64) -> f64 {
    if x == x.floor() && x <= 30.0 {
        let mut f = 1.0;
        let mut k = 2.0;
        while k < x {
            f *= k;
            k += 1.0;
        }
        return f;
    }
    let z = x - 1.0;
    let mut a = LANCZOS_P[0];
    for (i, p) in LANCZOS_P.iter().enumerate().skip(1) {
        a += p / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    // split the power so t^(z+1/2) cannot overflow before e^{-t} is applied
    let half = t.powf((z + 0.5) / 2.0);
    (2.0 * PI).sqrt() * half * (half * (-t).exp()) * a
}

/// The gamma function for real arguments away from the poles.
pub fn gamma(x: f64) -> Result<f64, SpecialError> {
    if !x.is_finite() {
        return Err(SpecialError::NonFinite(x));
    }
    if x <= 0.0 && x == x.floor() {
        return Err(SpecialError::Pole(x));
    }
    if x > GAMMA_MAX_ARG {
        return Err(SpecialError::Overflow(x));
    }
    if x >= 0.5 {
        return Ok(gamma_positive(x));
    }
    let reflected = 1.0 - x;
    if reflected > GAMMA_MAX_ARG {
        // 1/Gamma(1-x) underflows; the true value is below the f64 range
        return Ok(0.0);
    }
    Ok(PI / (sin_pi(x) * gamma_positive(reflected)))
}

/// Sum of (-1)^k a(k) by the Cohen-Rodriguez Villegas-Zagier acceleration.
/// Valid when a(k) are moments of a positive measure on [0, 1].
fn alternating_sum(a: impl Fn(usize) -> f64) -> f64 {
    const TERMS: usize = 24;
    let n = TERMS as f64;
    let d0 = (3.0 + 8f64.sqrt()).powf(n);
    let d = (d0 + 1.0 / d0) / 2.0;
    let mut b = -1.0;
    let mut c = -d;
    let mut sum = 0.0;
    for k in 0..TERMS {
        let kf = k as f64;
        c = b - c;
        sum += c * a(k);
        b *= (kf + n) * (kf - n) / ((kf + 0.5) * (kf + 1.0));
    }
    sum / d
}

/// Riemann zeta for real s != 1; negative arguments through the functional
/// equation.
pub fn zeta(s: f64) -> Result<f64, SpecialError> {
    if !s.is_finite() {
        return Err(SpecialError::NonFinite(s));
    }
    if s == 1.0 {
        return Err(SpecialError::Pole(s));
    }
    if s >= 0.0 {
        let eta = alternating_sum(|k| ((k + 1) as f64).powf(-s));
        // 1 - 2^{1-s} without cancellation near s = 1
        let denom = -((1.0 - s) * std::f64::consts::LN_2).exp_m1();
        return Ok(eta / denom);
    }
    let x = -s;
    let trig = sin_pi(x / 2.0);
    if trig == 0.0 {
        return Ok(0.0);
    }
    Ok(-2.0 * (2.0 * PI).powf(-1.0 - x) * trig * gamma(1.0 + x)? * zeta(1.0 + x)?)
}

/// Dirichlet beta function, sum of (-1)^k (2k+1)^{-s}.
pub fn dirichlet_beta(s: f64) -> Result<f64, SpecialError> {
    if !s.is_finite() {
        return Err(SpecialError::NonFinite(s));
    }
    if s >= 0.0 {
        return Ok(alternating_sum(|k| ((2 * k + 1) as f64).powf(-s)));
    }
    let x = -s;
    let trig = cos_pi(x / 2.0);
    if trig == 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 / PI).powf(1.0 + x) * trig * gamma(1.0 + x)? * dirichlet_beta(1.0 + x)?)
}

/// C_{n,s} together with the arguments it was computed for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstant {
    pub n: usize,
    pub s: FractionalOrder,
    pub value: f64,
}

impl KernelConstant {
    /// +1 when floor(s) is even, -1 when odd.
    pub fn expected_sign(&self) -> f64 {
        if self.s.floor() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// C_{n,s} = 2^{2s} s Gamma(n/2 + s) / (pi^{n/2} Gamma(1 - s)).
pub fn kernel_constant(n: usize, s: FractionalOrder) -> Result<KernelConstant, SpecialError> {
    if n == 0 {
        return Err(SpecialError::ZeroDimension);
    }
    if s.is_integer() {
        return Err(SpecialError::IntegerOrder(s.value()));
    }
    let sv = s.value();
    let half_n = n as f64 / 2.0;
    let value = 4f64.powf(sv) * sv * gamma(half_n + sv)? / (PI.powf(half_n) * gamma(1.0 - sv)?);
    Ok(KernelConstant { n, s, value })
}

/// C_{n,a} r^{-(n+2a)}.
pub fn riesz_kernel(n: usize, a: FractionalOrder, r: f64) -> Result<f64, SpecialError> {
    if !(r > 0.0) {
        return Err(SpecialError::NonPositiveDistance(r));
    }
    let c = kernel_constant(n, a)?;
    Ok(c.value * r.powf(-(n as f64 + 2.0 * a.value())))
}
