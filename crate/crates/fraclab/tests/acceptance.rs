//! Acceptance suite: one line per criterion, run on a single thread.
//! Exits non-zero when any criterion fails.

use std::time::Instant;

use fraclab::experiments::{
    counterexample_scan, discrepancy, interp_sweep, random_family, sign_sweep, truncation_bound_probe,
    verify_identity_with, ExperimentReport, Richardson, Verdict,
};
use fraclab::grid::{mollify, sample, truncate, GridFunction, GridSpec, Truncation};
use fraclab::expr::parse;
use fraclab::kernel_form::{gagliardo_form, interaction_integral};
use fraclab::special_functions::{gamma, kernel_constant, FractionalOrder};
use fraclab::spectral_form::quadratic_form;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;

/// Outcome of one criterion plus every number it computed, for the
/// reproducibility check.
struct Outcome {
    pass: bool,
    detail: String,
    values: Vec<f64>,
}

impl Outcome {
    fn new(pass: bool, detail: String, values: Vec<f64>) -> Self {
        Self { pass, detail, values }
    }
}

fn grid(l: f64, points: usize) -> GridSpec {
    GridSpec::new(1, l, points).expect("valid grid")
}

fn load(src: &str, spec: &GridSpec) -> GridFunction {
    sample(&parse(src, 1).expect("parses"), spec).expect("samples")
}

fn report_values(r: &ExperimentReport) -> Vec<f64> {
    let mut out = Vec::new();
    for rec in &r.results {
        out.push(rec.spectral);
        out.extend([rec.kernel, rec.reference, rec.discrepancy, rec.spectral_error, rec.kernel_error].into_iter().flatten());
    }
    out
}

fn verdicts_ok(r: &ExperimentReport, claim_prefix: &str) -> bool {
    r.verdicts.iter().filter(|v| v.claim.starts_with(claim_prefix)).all(|v| v.verdict == Verdict::Pass)
}

fn constants() -> Outcome {
    let c = kernel_constant(1, FractionalOrder::non_integer(0.5).unwrap()).unwrap().value;
    let err_half = (c - std::f64::consts::FRAC_1_PI).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut values = vec![c];
    let mut drawn = 0;
    while drawn < 200 {
        let n = rng.gen_range(1..=3);
        let a: f64 = rng.gen_range(0.0..3.0);
        let Ok(order) = FractionalOrder::non_integer(a) else { continue };
        let Ok(next) = FractionalOrder::non_integer(a + 1.0) else { continue };
        let ca = kernel_constant(n, order).unwrap().value;
        let cb = kernel_constant(n, next).unwrap().value;
        let nf = n as f64;
        let residual = (ca * (nf + 2.0 * a) * (2.0 * a + 2.0) + cb).abs() / cb.abs();
        worst = worst.max(residual);
        values.push(residual);
        drawn += 1;
    }
    let mut sign_ok = true;
    for n in 1..=3 {
        for k in 1..100 {
            if k % 20 == 0 {
                continue;
            }
            let s = k as f64 * 0.05;
            let kc = kernel_constant(n, FractionalOrder::non_integer(s).unwrap()).unwrap();
            let expected = if (s.floor() as i64) % 2 == 0 { 1.0 } else { -1.0 };
            sign_ok &= kc.value.signum() == expected;
            values.push(kc.value);
        }
    }
    let pass = err_half <= 1e-12 && worst <= 1e-12 && sign_ok;
    Outcome::new(pass, format!("|C - 1/pi| = {err_half:.1e}, max recursion residual {worst:.1e}, signs ok: {sign_ok}"), values)
}

fn spectral_oracle() -> Outcome {
    let spec = grid(16.0, 4096);
    let u = load("exp(-x^2/2)", &spec);
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for s in [0.25, 0.5, 1.0, 1.25] {
        let q = quadratic_form(&u, &u, s, None).unwrap();
        let d = discrepancy(q, gamma(s + 0.5).unwrap());
        worst = worst.max(d);
        values.push(q);
    }
    Outcome::new(worst <= 1e-6, format!("max relative error vs Gamma(s+1/2) {worst:.1e} (<= 1e-6)"), values)
}

fn gagliardo() -> Outcome {
    let spec = grid(16.0, 4096);
    let u = load("exp(-x^2/2)", &spec);
    let g = gagliardo_form(&u, &u, 0.5, 1e-6).unwrap();
    let q = quadratic_form(&u, &u, 0.5, None).unwrap();
    let d = discrepancy(g, q);
    Outcome::new(d <= 1e-3, format!("difference form {g:.10}, spectral {q:.10}, relative {d:.1e} (<= 1e-3)"), vec![g, q])
}

/// Unit-mass mollifier of radius 1/2 centered at `center`.
fn bump_at(spec: &GridSpec, center: f64) -> GridFunction {
    let j = ((center + spec.half_width()) / spec.step()).round() as usize;
    let mut samples = vec![0.0; spec.len()];
    samples[j] = 1.0 / spec.step();
    let delta = GridFunction::from_samples(*spec, samples).unwrap();
    mollify(&delta, 2).unwrap()
}

fn disjoint_supports() -> Outcome {
    let spec = grid(8.0, 1 << 14);
    let v = bump_at(&spec, -2.0);
    let w = bump_at(&spec, 2.0);
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for s in [0.5, 1.25, 2.5] {
        let order = FractionalOrder::non_integer(s).unwrap();
        let kernel = interaction_integral(&v, &w, order, 1e-6).unwrap().value;
        let c = kernel_constant(1, order).unwrap().value;
        let spectral = quadratic_form(&v, &w, s, None).unwrap();
        let d = discrepancy(spectral, -c * kernel);
        worst = worst.max(d);
        values.extend([kernel, spectral]);
    }
    Outcome::new(worst <= 1e-5, format!("max relative discrepancy {worst:.1e} (<= 1e-5)"), values)
}

fn main_identity() -> Outcome {
    let spec = grid(20.0, 1 << 14);
    let mut parts = Vec::new();
    let mut pass = true;
    let mut values = Vec::new();
    for (s, tol) in [(1.1, 1e-3), (1.25, 1e-3), (1.4, 5e-3)] {
        let r = verify_identity_with("x*exp(-x^2)", s, &spec, tol, Richardson::Auto).unwrap();
        let main = r.results.iter().find(|x| x.quantity == "cross_form").unwrap();
        let d = main.discrepancy.unwrap();
        pass &= verdicts_ok(&r, "identity");
        let extrapolated = if r.params.iter().any(|(k, v)| k == "richardson" && *v == fraclab::experiments::Param::Text("on".into())) { "+R" } else { "" };
        parts.push(format!("s={s}{extrapolated}: {d:.1e}"));
        values.extend(report_values(&r));
    }
    Outcome::new(pass, format!("relative discrepancies {}", parts.join(", ")), values)
}

fn sign_law() -> Outcome {
    let spec = grid(20.0, 1 << 14);
    let r = sign_sweep("x*exp(-x^2)", &[0.25, 0.5, 0.75, 1.1, 1.25, 1.4], &spec).unwrap();
    let pass = verdicts_ok(&r, "sign_law");
    let probe = sign_sweep("x^3*exp(-x^2)", &[1.75, 2.5], &spec).unwrap();
    let notes: Vec<String> = probe
        .results
        .iter()
        .map(|x| format!("s={}: D={:.3e}", x.s.unwrap_or(f64::NAN), x.spectral))
        .collect();
    let mut values = report_values(&r);
    values.extend(report_values(&probe));
    Outcome::new(pass, format!("6/6 signs as predicted: {pass}; probe (not graded) {}", notes.join(", ")), values)
}

fn counterexample() -> Outcome {
    let spec = grid(20.0, 1 << 14);
    let cutoffs = [64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0];
    let r = counterexample_scan("x*exp(-x^2)", &[1.3, 1.4, 1.6, 1.7], &cutoffs, &spec).unwrap();
    let exps: Vec<String> = r
        .results
        .iter()
        .filter(|x| x.quantity == "growth_exponent" && x.s.unwrap_or(0.0) > 1.5)
        .map(|x| format!("s={}: {:.3}", x.s.unwrap(), x.spectral))
        .collect();
    let pass = r.passed() && r.count(Verdict::Pass) == 4;
    Outcome::new(pass, format!("growth exponents {}; Cauchy below 3/2: {}", exps.join(", "), verdicts_ok(&r, "cauchy")), report_values(&r))
}

fn polarization() -> Outcome {
    let spec = grid(20.0, 1 << 14);
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for src in random_family(20, SEED) {
        let u = load(&src, &spec);
        let up = truncate(&u, Truncation::Pos).unwrap();
        let um = truncate(&u, Truncation::Neg).unwrap();
        let ab = truncate(&u, Truncation::Abs).unwrap();
        for s in [0.5, 1.25] {
            let lhs = 4.0 * quadratic_form(&up, &um, s, None).unwrap();
            let rhs = quadratic_form(&ab, &ab, s, None).unwrap() - quadratic_form(&u, &u, s, None).unwrap();
            worst = worst.max(discrepancy(lhs, rhs));
            values.extend([lhs, rhs]);
        }
    }
    Outcome::new(worst <= 1e-12, format!("max relative defect {worst:.1e} (<= 1e-12)"), values)
}

fn interpolation() -> Outcome {
    let spec = grid(20.0, 1 << 14);
    let r = interp_sweep(100, SEED, 1.45, &spec).unwrap();
    let worst = r.results.iter().map(|x| x.spectral).fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(r.passed() && r.results.len() == 100, format!("max ratio {worst:.15} (<= 1 + 1e-12)"), report_values(&r))
}

fn truncation() -> Outcome {
    let spec = grid(20.0, 1 << 14);
    let r = truncation_bound_probe("x*exp(-x^2)", 1.25, &[0.2, 0.1, 0.05, 0.02, 0.01], &spec, 1e-3).unwrap();
    let lim = r.results.iter().find(|x| x.quantity == "eps_limit").unwrap();
    let pass = verdicts_ok(&r, "bounded") && verdicts_ok(&r, "limit");
    Outcome::new(
        pass,
        format!("eps -> 0 limit {:.8} vs Q_s(u^+) {:.8}, relative {:.1e} (<= 1e-3)", lim.spectral, lim.reference.unwrap(), lim.discrepancy.unwrap()),
        report_values(&r),
    )
}

type Criterion = (&'static str, fn() -> Outcome, f64);

const CRITERIA: [Criterion; 10] = [
    ("constants", constants, 1.0),
    ("spectral oracle", spectral_oracle, 1.0),
    ("difference form", gagliardo, 10.0),
    ("disjoint supports", disjoint_supports, 30.0),
    ("main identity", main_identity, 60.0),
    ("sign law", sign_law, 30.0),
    ("counterexample", counterexample, 30.0),
    ("polarization", polarization, 5.0),
    ("interpolation", interpolation, 10.0),
    ("truncation bound", truncation, 10.0),
];

fn run_suite(print: bool) -> (bool, Vec<u64>, f64) {
    let start = Instant::now();
    let mut all = true;
    let mut bits = Vec::new();
    for (i, (name, f, budget)) in CRITERIA.iter().enumerate() {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        let ok = out.pass && secs < *budget;
        all &= ok;
        bits.extend(out.values.iter().map(|v| v.to_bits()));
        if print {
            let tag = if ok { "PASS" } else { "FAIL" };
            println!("criterion {:>2} [{tag}] {name}: {} ({secs:.2} s, budget {budget} s)", i + 1, out.detail);
        }
    }
    (all, bits, start.elapsed().as_secs_f64())
}

fn main() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
    let (first_ok, first_bits, secs) = pool.install(|| run_suite(true));
    let (_, second_bits, _) = pool.install(|| run_suite(false));
    let reproducible = first_bits == second_bits;
    let ok11 = secs < 120.0 && reproducible;
    let tag = if ok11 { "PASS" } else { "FAIL" };
    println!(
        "criterion 11 [{tag}] full suite: {secs:.2} s on one thread (< 120 s), {} values bitwise identical on rerun: {reproducible}",
        first_bits.len()
    );
    if !(first_ok && ok11) {
        std::process::exit(1);
    }
}
