//! Integration engines.
//!
//! Three families live here:
//! * adaptive one-dimensional Gauss-Legendre with worst-panel bisection,
//! * tensor-product Gauss-Legendre over boxes with dyadic refinement,
//! * seeded Monte Carlo with a sampler that draws wavevectors from Γ.
//!
//! A 7/15 Gauss-Kronrod pair is also exposed for nested integrals that need
//! an error estimate at no extra cost.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SpectrumModel;

/// Tolerances and budgets shared by every numerical routine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evals: usize,
    pub truncation_sigmas: f64,
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-6,
            abs_tol: 1e-14,
            max_evals: 50_000_000,
            truncation_sigmas: 8.0,
            mc_samples: 1_000_000,
            mc_seed: 0x5eed_0001,
        }
    }
}

impl QuadratureSpec {
    /// Settings used by the normalization and identity checks.
    pub fn precise() -> Self {
        QuadratureSpec { rel_tol: 1e-11, abs_tol: 1e-15, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(Error::Domain(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        if !(self.abs_tol >= 0.0) {
            return Err(Error::Domain(format!("abs_tol must be non-negative, got {}", self.abs_tol)));
        }
        if !(self.truncation_sigmas >= 5.0) || !self.truncation_sigmas.is_finite() {
            return Err(Error::Domain(format!("truncation_sigmas must be at least 5, got {}", self.truncation_sigmas)));
        }
        if self.max_evals == 0 {
            return Err(Error::Domain("max_evals must be positive".into()));
        }
        Ok(())
    }

    fn tolerance(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evals: usize,
}

// ---------------------------------------------------------------------------
// Gauss-Legendre rules

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    fn compute(n: usize) -> GaussRule {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussRule { nodes, weights }
    }

    /// Applies the rule on [a, b].
    #[inline]
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Cached Gauss-Legendre rule of order `n`.
pub fn gauss_legendre(n: usize) -> &'static GaussRule {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static GaussRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard.entry(n).or_insert_with(|| Box::leak(Box::new(GaussRule::compute(n))))
}

/// Base rule for the adaptive integrators.
pub const BASE_ORDER: usize = 32;

// ---------------------------------------------------------------------------
// Adaptive 1D

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn check_finite(v: f64, x: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("integrand is not finite at x = {x}")))
    }
}

/// Evaluates a panel: the halves sum is the value, its distance from the
/// whole-panel rule is the error estimate.
fn eval_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Panel> {
    let rule = gauss_legendre(BASE_ORDER);
    let mut bad = None;
    let mut g = |x: f64| {
        let v = f(x);
        if !v.is_finite() && bad.is_none() {
            bad = Some(x);
        }
        v
    };
    let m = 0.5 * (a + b);
    let whole = rule.integrate(a, b, &mut g);
    let left = rule.integrate(a, m, &mut g);
    let right = rule.integrate(m, b, &mut g);
    if let Some(x) = bad {
        check_finite(f64::NAN, x)?;
    }
    let value = left + right;
    let mut error = (whole - value).abs();
    // Rounding floor, so panels of a cancelling integrand are not split forever.
    let floor = 50.0 * f64::EPSILON * (left.abs() + right.abs());
    if error < floor {
        error = floor;
    }
    Ok(Panel { a, b, value, error })
}

/// Adaptive integral of `f` over [a, b].
pub fn integrate_1d<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, quad: &QuadratureSpec) -> Result<IntegrationResult> {
    integrate_1d_with_breaks(f, &[a, b], quad)
}

/// Adaptive integral over consecutive intervals of `points`, which must be
/// non-decreasing. Interior points mark kinks or discontinuities.
pub fn integrate_1d_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    quad: &QuadratureSpec,
) -> Result<IntegrationResult> {
    if points.len() < 2 {
        return Err(Error::Domain("need at least two integration limits".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Domain("integration limits must be finite".into()));
    }
    if points.windows(2).any(|w| w[1] < w[0]) || points[0] >= points[points.len() - 1] {
        return Err(Error::Domain(format!("integration limits not increasing: {points:?}")));
    }
    let per_panel = 3 * BASE_ORDER;
    let mut heap = BinaryHeap::new();
    let mut evals = 0usize;
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(eval_panel(&mut f, w[0], w[1])?);
            evals += per_panel;
        }
    }
    let mut previous = f64::NAN;
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if error <= quad.tolerance(value) {
            return Ok(IntegrationResult { value, error_estimate: error, evals });
        }
        if evals + 2 * per_panel > quad.max_evals {
            return Err(Error::NonConvergence { estimate: value, previous, error, evals });
        }
        let worst = heap.pop().expect("panel list is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // Cannot split further in floating point; accept what we have.
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        heap.push(eval_panel(&mut f, worst.a, m)?);
        heap.push(eval_panel(&mut f, m, worst.b)?);
        evals += 2 * per_panel;
        previous = value;
    }
}

// ---------------------------------------------------------------------------
// Tensor-product nD

fn nd_order(dim: usize) -> usize {
    match dim {
        1 | 2 => 32,
        3 => 16,
        4 => 10,
        _ => 8,
    }
}

fn tensor_level<F>(f: &F, bounds: &[(f64, f64)], order: usize, panels: usize) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let rule = gauss_legendre(order);
    let dim = bounds.len();
    // Node and weight lists per axis.
    let axes: Vec<Vec<(f64, f64)>> = bounds
        .iter()
        .map(|&(a, b)| {
            let h = (b - a) / panels as f64;
            let mut v = Vec::with_capacity(panels * order);
            for p in 0..panels {
                let lo = a + h * p as f64;
                let mid = lo + 0.5 * h;
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    v.push((mid + 0.5 * h * x, 0.5 * h * w));
                }
            }
            v
        })
        .collect();
    let per_axis = panels * order;
    let inner_count: usize = per_axis.pow(dim as u32 - 1);
    // Parallel over the first axis, ordered reduction afterwards.
    let partial: Vec<f64> = axes[0]
        .par_iter()
        .map(|&(x0, w0)| {
            let mut point = vec![0.0; dim];
            point[0] = x0;
            let mut sum = 0.0;
            for flat in 0..inner_count {
                let mut rem = flat;
                let mut w = w0;
                for d in (1..dim).rev() {
                    let (x, wd) = axes[d][rem % per_axis];
                    rem /= per_axis;
                    point[d] = x;
                    w *= wd;
                }
                sum += w * f(&point);
            }
            sum
        })
        .collect();
    partial.iter().sum()
}

/// Tensor Gauss-Legendre integral over a box with dyadic panel refinement.
/// Each level doubles the panel count per axis; the routine stops when two
/// successive levels agree.
pub fn integrate_nd<F>(f: F, bounds: &[(f64, f64)], quad: &QuadratureSpec) -> Result<IntegrationResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = bounds.len();
    if !(1..=5).contains(&dim) {
        return Err(Error::Domain(format!("integrate_nd supports 1 to 5 dimensions, got {dim}")));
    }
    for &(a, b) in bounds {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Domain(format!("invalid interval [{a}, {b}]")));
        }
    }
    let order = nd_order(dim);
    let mut evals = 0usize;
    let mut panels = 1usize;
    let cost = |panels: usize| (panels * order).pow(dim as u32);
    let mut previous = tensor_level(&f, bounds, order, panels);
    evals += cost(panels);
    check_finite(previous, f64::NAN)?;
    loop {
        panels *= 2;
        if evals + cost(panels) > quad.max_evals {
            return Err(Error::NonConvergence { estimate: previous, previous, error: f64::INFINITY, evals });
        }
        let value = tensor_level(&f, bounds, order, panels);
        evals += cost(panels);
        check_finite(value, f64::NAN)?;
        let error = (value - previous).abs();
        if error <= quad.tolerance(value) {
            return Ok(IntegrationResult { value, error_estimate: error, evals });
        }
        previous = value;
    }
}

// ---------------------------------------------------------------------------
// Embedded 7/15 Gauss-Kronrod pair

/// A value integrated with the Kronrod rule together with the value from the
/// embedded Gauss rule, used for nested integrals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Embedded {
    pub kronrod: f64,
    pub gauss: f64,
}

impl Embedded {
    pub fn new(kronrod: f64, gauss: f64) -> Self {
        Embedded { kronrod, gauss }
    }

    pub fn splat(v: f64) -> Self {
        Embedded { kronrod: v, gauss: v }
    }

    pub fn error(&self) -> f64 {
        (self.kronrod - self.gauss).abs()
    }
}

impl std::ops::Add for Embedded {
    type Output = Embedded;
    fn add(self, o: Embedded) -> Embedded {
        Embedded::new(self.kronrod + o.kronrod, self.gauss + o.gauss)
    }
}

impl std::ops::AddAssign for Embedded {
    fn add_assign(&mut self, o: Embedded) {
        self.kronrod += o.kronrod;
        self.gauss += o.gauss;
    }
}

impl std::ops::Mul<f64> for Embedded {
    type Output = Embedded;
    fn mul(self, s: f64) -> Embedded {
        Embedded::new(self.kronrod * s, self.gauss * s)
    }
}

#[allow(clippy::excessive_precision)]
const XGK15: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WG7: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];
#[allow(clippy::excessive_precision)]
const WGK15: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Nodes of the 15-point Kronrod rule on [-1, 1] with Kronrod weights and
/// the weights of the embedded 7-point Gauss rule (zero off the Gauss nodes).
pub fn kronrod15() -> &'static [(f64, f64, f64); 15] {
    static RULE: OnceLock<[(f64, f64, f64); 15]> = OnceLock::new();
    RULE.get_or_init(|| {
        let mut out = [(0.0, 0.0, 0.0); 15];
        for j in 0..7 {
            let wg = if j % 2 == 1 { WG7[j / 2] } else { 0.0 };
            out[j] = (-XGK15[j], WGK15[j], wg);
            out[14 - j] = (XGK15[j], WGK15[j], wg);
        }
        out[7] = (0.0, WGK15[7], WG7[3]);
        out
    })
}

/// Integrates `f` over consecutive intervals of `edges` with the 7/15 pair.
/// `f` itself returns an embedded pair, which lets integrals nest: the Gauss
/// component of the outer sum only sees Gauss components of inner values.
#[inline]
pub fn kronrod_panels<F: FnMut(f64) -> Embedded>(edges: &[f64], mut f: F) -> Embedded {
    let rule = kronrod15();
    let mut acc = Embedded::default();
    for w in edges.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        if half <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let mut k = 0.0;
        let mut g = 0.0;
        for &(x, wk, wg) in rule.iter() {
            let v = f(mid + half * x);
            k += wk * v.kronrod;
            if wg != 0.0 {
                g += wg * v.gauss;
            }
        }
        acc += Embedded::new(k * half, g * half);
    }
    acc
}

/// Kronrod nodes over consecutive intervals of `edges` as
/// (x, Kronrod weight, Gauss weight), weights already scaled to the panel.
pub fn kronrod_nodes(edges: &[f64]) -> Vec<(f64, f64, f64)> {
    let rule = kronrod15();
    let mut out = Vec::with_capacity(15 * edges.len().saturating_sub(1));
    for w in edges.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        if half <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        for &(x, wk, wg) in rule.iter() {
            out.push((mid + half * x, wk * half, wg * half));
        }
    }
    out
}

/// Splits [a, b] into panels no wider than `max_width`, honouring the
/// mandatory interior points in `marks` (ignored when outside (a, b)), then
/// cuts every panel into `splits` equal parts.
pub fn panel_edges(a: f64, b: f64, marks: &[f64], max_width: f64, splits: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::with_capacity(marks.len() + 2);
    pts.push(a);
    let span = b - a;
    for &m in marks {
        if m > a + 1e-12 * span && m < b - 1e-12 * span {
            pts.push(m);
        }
    }
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut edges = Vec::with_capacity(pts.len() * 2);
    edges.push(a);
    for w in pts.windows(2) {
        let n = if max_width.is_finite() && max_width > 0.0 {
            ((w[1] - w[0]) / max_width).ceil().max(1.0) as usize
        } else {
            1
        } * splits.max(1);
        let h = (w[1] - w[0]) / n as f64;
        for i in 1..n {
            edges.push(w[0] + h * i as f64);
        }
        edges.push(w[1]);
    }
    edges
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// A source of independent samples.
pub trait Sampler: Sync {
    type Sample;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Sample;
}

/// Smallest sample count accepted by [`mc_integrate`].
pub const MC_MIN_SAMPLES: usize = 1_000;
const MC_CHUNK: usize = 1 << 14;

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }
}

/// Random generator for chunk `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sample mean of `f` under `sampler`, with its standard error.
///
/// Samples are drawn in fixed-size chunks, each with its own ChaCha stream,
/// and reduced in chunk order, so the result does not depend on the number
/// of worker threads.
pub fn mc_integrate<S, F>(sampler: &S, f: F, n: usize, seed: u64) -> Result<IntegrationResult>
where
    S: Sampler,
    F: Fn(&S::Sample) -> f64 + Sync,
{
    if n < MC_MIN_SAMPLES {
        return Err(Error::TooFewSamples { got: n, min: MC_MIN_SAMPLES });
    }
    let chunks = n.div_ceil(MC_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let count = MC_CHUNK.min(n - c * MC_CHUNK);
            let mut m = Moments::default();
            for _ in 0..count {
                let s = sampler.sample(&mut rng);
                m.push(f(&s));
            }
            m
        })
        .collect();
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    if !total.mean.is_finite() {
        return Err(Error::Sampler("non-finite Monte Carlo mean".into()));
    }
    let var = if total.n > 1.0 { total.m2 / (total.n - 1.0) } else { 0.0 };
    Ok(IntegrationResult { value: total.mean, error_estimate: (var / total.n).sqrt(), evals: n })
}

/// Number of nodes in the tabulated radial inverse CDF.
pub const SAMPLER_TABLE_SIZE: usize = 4096;

/// Draws wavevectors from the luminescence spectrum Γ.
///
/// The radial part is sampled by inverting a tabulated CDF of k²ρ(k), with
/// ρ linear between table nodes. The polar angle is drawn from a uniform
/// sphere and accepted with probability (sinθ cosθ)²/(1/4); a filter with
/// angular dependence adds one more rejection step against its bound.
#[derive(Debug, Clone)]
pub struct GammaSampler {
    spectrum: SpectrumModel,
    k: Vec<f64>,
    pdf: Vec<f64>,
    cdf: Vec<f64>,
    angular_filter: bool,
    filter_bound: f64,
}

const MAX_REJECTIONS: usize = 1_000_000;

impl GammaSampler {
    pub fn new(spectrum: &SpectrumModel, quad: &QuadratureSpec) -> Result<Self> {
        let (lo, hi) = spectrum.radial_support(quad.truncation_sigmas);
        let angular_filter = !spectrum.is_angle_separable();
        let n = SAMPLER_TABLE_SIZE;
        let h = (hi - lo) / (n - 1) as f64;
        let k: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let pdf: Vec<f64> = k
            .iter()
            .map(|&k| {
                let radial = if angular_filter { spectrum.g(k) } else { spectrum.radial_density(k) };
                k * k * radial
            })
            .collect();
        let mut cdf = Vec::with_capacity(n);
        cdf.push(0.0);
        for i in 1..n {
            let prev = cdf[i - 1];
            cdf.push(prev + 0.5 * h * (pdf[i - 1] + pdf[i]));
        }
        let total = cdf[n - 1];
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Sampler("radial density has no mass on its support".into()));
        }
        let filter_bound = if angular_filter { spectrum.filter_bound() } else { 1.0 };
        if !(filter_bound > 0.0) {
            return Err(Error::Sampler("filter bound must be positive".into()));
        }
        Ok(GammaSampler { spectrum: spectrum.clone(), k, pdf, cdf, angular_filter, filter_bound })
    }

    fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cdf.last().expect("table is non-empty");
        let r = rng.gen::<f64>() * total;
        let i = self.cdf.partition_point(|&c| c <= r).clamp(1, self.cdf.len() - 1) - 1;
        let h = self.k[i + 1] - self.k[i];
        let p0 = self.pdf[i];
        let slope = (self.pdf[i + 1] - p0) / h;
        let rem = r - self.cdf[i];
        // Solve p0 t + slope t²/2 = rem in the cancellation-free form.
        let disc = (p0 * p0 + 2.0 * slope * rem).max(0.0);
        let denom = p0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * rem / denom } else { 0.0 };
        (self.k[i] + t.clamp(0.0, h)).min(self.k[i + 1])
    }

    fn sample_polar<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        loop {
            let c: f64 = 2.0 * rng.gen::<f64>() - 1.0;
            let s2 = 1.0 - c * c;
            if rng.gen::<f64>() * 0.25 < s2 * c * c {
                return (s2.max(0.0).sqrt(), c);
            }
        }
    }
}

impl Sampler for GammaSampler {
    type Sample = [f64; 3];

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        for _ in 0..MAX_REJECTIONS {
            let k = self.sample_radius(rng);
            let (s, c) = self.sample_polar(rng);
            if self.angular_filter {
                let w = self.spectrum.filter_weight(k, c.acos());
                if rng.gen::<f64>() * self.filter_bound >= w {
                    continue;
                }
            }
            let phi = std::f64::consts::TAU * rng.gen::<f64>();
            return [k * s * phi.cos(), k * s * phi.sin(), k * c];
        }
        // Unreachable for filters accepted by apply_filter; keep the sampler total.
        [0.0, 0.0, 0.0]
    }
}

/// Pairs of independent draws from an inner sampler.
pub struct PairSampler<'a, S>(pub &'a S);

impl<S: Sampler> Sampler for PairSampler<'_, S> {
    type Sample = (S::Sample, S::Sample);

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Sample {
        (self.0.sample(rng), self.0.sample(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn tight() -> QuadratureSpec {
        QuadratureSpec { rel_tol: 1e-13, abs_tol: 1e-15, ..QuadratureSpec::default() }
    }

    #[test]
    fn legendre_rules_integrate_polynomials_exactly() {
        for n in [1usize, 2, 5, 8, 16, 32, 64] {
            let rule = gauss_legendre(n);
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-14, "n = {n}");
            for deg in 0..(2 * n) {
                let got = rule.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n = {n}, deg = {deg}: {got}");
            }
        }
    }

    #[test]
    fn kronrod_pair_weights_sum_to_two() {
        let r = kronrod15();
        let k: f64 = r.iter().map(|t| t.1).sum();
        let g: f64 = r.iter().map(|t| t.2).sum();
        assert!((k - 2.0).abs() < 1e-14);
        assert!((g - 2.0).abs() < 1e-14);
        let e = kronrod_panels(&[0.0, 1.0], |x| Embedded::splat(x.powi(13)));
        assert!((e.gauss - 1.0 / 14.0).abs() < 1e-15);
        assert!((e.kronrod - 1.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn polynomial_on_unit_interval() {
        let r = integrate_1d(|x| x * x, 0.0, 1.0, &tight()).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-15);
        assert!(r.error_estimate >= 0.0);
    }

    #[test]
    fn truncated_gaussian() {
        let r = integrate_1d(|x: f64| (-x * x).exp(), -8.0, 8.0, &tight()).unwrap();
        assert!((r.value - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn breakpoints_handle_kinks() {
        let r = integrate_1d_with_breaks(|x: f64| (x - 0.3).abs(), &[0.0, 0.3, 1.0], &tight()).unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-15);
    }

    #[test]
    fn budget_exhaustion_reports_best_estimate() {
        let quad = QuadratureSpec { rel_tol: 1e-15, abs_tol: 0.0, max_evals: 2000, ..QuadratureSpec::default() };
        match integrate_1d(|x: f64| x.abs().sqrt().recip(), -1.0, 1.0, &quad) {
            Err(Error::NonConvergence { estimate, evals, .. }) => {
                assert!(estimate > 3.0 && estimate < 4.0);
                assert!(evals <= 2000);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        assert!(integrate_1d(|_| f64::NAN, 0.0, 1.0, &tight()).is_err());
        assert!(integrate_1d(|x| x, 1.0, 0.0, &tight()).is_err());
    }

    #[test]
    fn unit_square_product() {
        let r = integrate_nd(|p| p[0] * p[1], &[(0.0, 1.0), (0.0, 1.0)], &tight()).unwrap();
        assert!((r.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn nd_gaussian_in_three_and_five_dimensions() {
        let quad = QuadratureSpec { rel_tol: 1e-9, ..QuadratureSpec::default() };
        let g3 =
            integrate_nd(|p| (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])).exp(), &[(-6.0, 6.0); 3], &quad).unwrap();
        assert!((g3.value - std::f64::consts::PI.powf(1.5)).abs() < 1e-8);
        let g5 = integrate_nd(|p| p.iter().map(|x| x.cos()).product(), &[(0.0, 1.0); 5], &quad).unwrap();
        assert!((g5.value - 1f64.sin().powi(5)).abs() < 1e-12);
    }

    #[test]
    fn nd_rejects_bad_dimension() {
        assert!(integrate_nd(|_| 1.0, &[], &tight()).is_err());
        assert!(integrate_nd(|_| 1.0, &[(0.0, 1.0); 6], &tight()).is_err());
    }

    #[test]
    fn panel_edges_respect_marks_and_width() {
        let e = panel_edges(0.0, 10.0, &[3.0, -1.0, 12.0], 2.0, 1);
        assert_eq!(e.first(), Some(&0.0));
        assert_eq!(e.last(), Some(&10.0));
        assert!(e.contains(&3.0));
        assert!(e.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 2.0 + 1e-12));
    }

    struct Uniform;
    impl Sampler for Uniform {
        type Sample = f64;
        fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
            rng.gen()
        }
    }

    #[test]
    fn mc_rejects_small_n_and_is_deterministic() {
        assert_eq!(mc_integrate(&Uniform, |x| *x, 999, 1), Err(Error::TooFewSamples { got: 999, min: MC_MIN_SAMPLES }));
        let a = mc_integrate(&Uniform, |x| *x, 50_000, 7).unwrap();
        let b = mc_integrate(&Uniform, |x| *x, 50_000, 7).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.error_estimate.to_bits(), b.error_estimate.to_bits());
        assert!((a.value - 0.5).abs() < 4.0 * a.error_estimate);
    }

    #[test]
    fn mc_standard_error_scales_as_inverse_root_n() {
        let f = |x: &f64| (-(x - 0.5) * (x - 0.5) / 0.02).exp();
        let small = mc_integrate(&Uniform, f, 40_000, 3).unwrap();
        let large = mc_integrate(&Uniform, f, 160_000, 3).unwrap();
        let ratio = small.error_estimate / large.error_estimate;
        assert!(ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5, "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn error_estimate_bounds_true_error_on_polynomials(
            coeffs in proptest::collection::vec(-1.0f64..1.0, 1..=21),
            a in -3.0f64..0.0,
            width in 0.1f64..4.0,
        ) {
            let b = a + width;
            let poly = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
            let exact: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * (b.powi(i as i32 + 1) - a.powi(i as i32 + 1)) / (i as f64 + 1.0))
                .sum();
            let r = integrate_1d(poly, a, b, &QuadratureSpec::default()).unwrap();
            let scale: f64 = coeffs.iter().map(|c| c.abs()).sum::<f64>() * 4f64.powi(coeffs.len() as i32) * width;
            prop_assert!((r.value - exact).abs() <= r.error_estimate + 1e-13 * scale);
        }
    }
}
