//! Monte Carlo estimators and sweep orchestration: V_γ frequencies, surface
//! tension, area/perimeter fits, tube events and suitable families.

use std::io::{Read, Write};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::relative_null_homology;
use crate::duality::{crossing_event, d_t_event, dualize, spanning_box, DualBondConfig, DualGraph, Tube, VGammaTester};
use crate::error::{invalid, Error, Result};
use crate::lattice::{loop_boundary_chain, BoundaryCondition, Chain, Complex, LatticeBox, PercolationConfig};
use crate::prcm::{integrated_autocorrelation, p_star, Coefficients, DualHeatBath, EdwardsSokal, PrcmParams};
use crate::rng::{stream, Rng};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for k successes out of n.
pub fn wilson_interval(k: f64, n: f64, z: f64) -> (f64, f64) {
    if n <= 0.0 {
        return (0.0, 1.0);
    }
    let ph = k / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (ph + z2 / (2.0 * n)) / denom;
    let half = z * (ph * (1.0 - ph) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k <= 0.0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k >= n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// A frequency with its Wilson interval. With MCMC samples `n_effective`
/// discounts the integrated autocorrelation time of the indicator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub successes: u64,
    pub n: u64,
    pub n_effective: f64,
    pub p_hat: f64,
    pub ci: (f64, f64),
}

impl Estimate {
    pub fn from_indicators(hits: &[bool], independent: bool) -> Self {
        let n = hits.len() as u64;
        let successes = hits.iter().filter(|&&h| h).count() as u64;
        let n_effective = if independent || n < 2 {
            n as f64
        } else {
            let series: Vec<f64> = hits.iter().map(|&h| f64::from(u8::from(h))).collect();
            n as f64 / (2.0 * integrated_autocorrelation(&series))
        };
        let p_hat = if n == 0 { 0.0 } else { successes as f64 / n as f64 };
        let ci = wilson_interval(p_hat * n_effective, n_effective, Z95);
        Estimate { successes, n, n_effective, p_hat, ci }
    }

    /// Zero successes: only the upper end of the interval is informative.
    pub fn upper_bound_only(&self) -> bool {
        self.successes == 0
    }

    /// Standard error on the effective sample size.
    pub fn stderr(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.n_effective.max(1.0)).sqrt()
    }
}

fn event_modulus(params: &PrcmParams) -> u64 {
    match params.coefficients {
        Coefficients::Cyclic(q) if q >= 2 => q,
        _ => 0,
    }
}

fn is_bernoulli(params: &PrcmParams) -> bool {
    params.q() == 1.0
}

fn bernoulli_config(cx: &Complex, bc: BoundaryCondition, vars: &[usize], p: f64, rng: &mut Rng, out: &mut PercolationConfig) {
    if out.len() != cx.count(cx.top()) || out.bc != bc {
        *out = PercolationConfig::empty(cx, bc);
    }
    for &c in vars {
        out.set(c, rng.random::<f64>() < p);
    }
}

/// Draws `n` configurations: independent at q = 1, otherwise successive
/// sweeps of the dual heat bath (i = d-1) or the Edwards–Sokal chain.
/// Returns whether the draws are independent.
pub fn for_each_sample(
    cx: &Complex,
    g: Option<&DualGraph>,
    params: &PrcmParams,
    n: usize,
    burn_in: usize,
    rng: &mut Rng,
    mut f: impl FnMut(&PercolationConfig, Option<&DualBondConfig>) -> Result<()>,
) -> Result<bool> {
    params.validate()?;
    if is_bernoulli(params) {
        let vars = cx.variable_cells(params.bc);
        let mut p = PercolationConfig::empty(cx, params.bc);
        for _ in 0..n {
            bernoulli_config(cx, params.bc, &vars, params.p, rng, &mut p);
            f(&p, None)?;
        }
        return Ok(true);
    }
    let init = PercolationConfig::full(cx, params.bc);
    match g {
        Some(g) if params.i + 1 == params.d => {
            let mut hb = DualHeatBath::new(cx, g, params, &init)?;
            for _ in 0..burn_in {
                hb.sweep(rng);
            }
            for _ in 0..n {
                hb.sweep(rng);
                let dual = hb.dual();
                f(&dual.to_primal(cx), Some(&dual))?;
            }
        }
        _ => {
            let mut es = EdwardsSokal::new(cx, params, init)?;
            for _ in 0..burn_in {
                es.sweep(rng)?;
            }
            for _ in 0..n {
                es.sweep(rng)?;
                f(es.config(), None)?;
            }
        }
    }
    Ok(false)
}

fn default_burn_in(n: usize) -> usize {
    (n / 10).max(100)
}

/// Monte Carlo frequency of V_γ^fin with coefficients Z_q (Z when q = 1 or
/// q is not an integer), decided on the dual.
pub fn estimate_v_gamma(params: &PrcmParams, bx: &LatticeBox, gamma: &Chain, n: usize, seed: u64) -> Result<Estimate> {
    if params.i + 1 != params.d {
        return Err(Error::Unsupported("the dual V_γ test needs i = d-1".into()));
    }
    let cx = Complex::new(bx, params.i)?;
    let g = DualGraph::new(&cx)?;
    let (r, _) = spanning_box(gamma)?;
    let tester = VGammaTester::new(&g, &cx, params.bc, &r, event_modulus(params))?;
    let mut hits = Vec::with_capacity(n);
    let mut rng = stream(seed, "estimate-v-gamma");
    let independent = for_each_sample(&cx, Some(&g), params, n, default_burn_in(n), &mut rng, |p, _| {
        hits.push(tester.test_config(&g, p));
        Ok(())
    })?;
    Ok(Estimate::from_indicators(&hits, independent))
}

/// Proposal of an importance sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiltTarget {
    /// The plaquettes of the flat spanning box r of γ are re-weighted together.
    SpanningSurface,
    /// Uniform mixture over the cells e of γ; component e re-weights the
    /// plaquettes having e as a face.
    LoopNeighbourhood,
}

/// Groups of variable cells re-weighted by each mixture component.
pub fn tilt_groups(cx: &Complex, bc: BoundaryCondition, gamma: &Chain, target: TiltTarget) -> Result<Vec<Vec<usize>>> {
    let top = cx.top();
    let vars = cx.variable_cells(bc);
    Ok(match target {
        TiltTarget::SpanningSurface => {
            let (r, _) = spanning_box(gamma)?;
            vec![vars.into_iter().filter(|&c| r.contains_cell(cx.cells(top).cell(c))).collect()]
        }
        TiltTarget::LoopNeighbourhood => {
            let mut is_var = vec![false; cx.count(top)];
            for c in vars {
                is_var[c] = true;
            }
            gamma
                .support()
                .map(|e| {
                    let e = cx.cells(top - 1).get(e).ok_or_else(|| Error::Geometry("γ leaves the box".into()))?;
                    Ok(cx.cofaces(top - 1, e).iter().map(|&(c, _)| c).filter(|&c| is_var[c]).collect())
                })
                .collect::<Result<_>>()?
        }
    })
}

/// Importance-sampling estimates of P(V_γ) and P(¬V_γ) under Bernoulli
/// percolation, from draws where the tilted cells are occupied with a
/// different probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEstimate {
    pub n: u64,
    /// Number of mixture components of the proposal.
    pub components: usize,
    pub proposal_p: f64,
    pub v_mean: f64,
    pub v_stderr: f64,
    pub fail_mean: f64,
    pub fail_stderr: f64,
    /// Raw V_γ count among the proposal draws.
    pub proposal_hits: u64,
}

impl ImportanceEstimate {
    /// P̂(V_γ) and its standard error, from whichever of the two unbiased
    /// estimators is more precise.
    pub fn probability(&self) -> (f64, f64) {
        if self.fail_stderr < self.v_stderr {
            (1.0 - self.fail_mean, self.fail_stderr)
        } else {
            (self.v_mean, self.v_stderr)
        }
    }

    /// -log P̂(V_γ) with a delta-method standard error.
    pub fn neg_log(&self) -> (f64, f64) {
        let (p, se) = self.probability();
        (-p.ln(), se / p)
    }
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Importance-sampled V_γ^fin(Z) for Bernoulli plaquette percolation (q = 1).
pub fn estimate_v_gamma_tilted(
    params: &PrcmParams,
    bx: &LatticeBox,
    gamma: &Chain,
    target: TiltTarget,
    proposal_p: f64,
    n: usize,
    seed: u64,
) -> Result<ImportanceEstimate> {
    params.validate()?;
    if !is_bernoulli(params) {
        return Err(Error::Unsupported("importance sampling is implemented for q = 1".into()));
    }
    if params.i + 1 != params.d {
        return Err(Error::Unsupported("the dual V_γ test needs i = d-1".into()));
    }
    if !(0.0 < proposal_p && proposal_p < 1.0) || !(0.0 < params.p && params.p < 1.0) {
        return Err(invalid("importance sampling needs p and the proposal strictly inside (0, 1)"));
    }
    if n < 2 {
        return Err(invalid("need at least two samples"));
    }
    let cx = Complex::new(bx, params.i)?;
    let g = DualGraph::new(&cx)?;
    let (r, _) = spanning_box(gamma)?;
    let tester = VGammaTester::new(&g, &cx, params.bc, &r, 0)?;
    let groups = tilt_groups(&cx, params.bc, gamma, target)?;
    if groups.iter().any(|grp| grp.is_empty()) {
        return Err(Error::Geometry("a tilt group has no variable cells".into()));
    }
    let (p, pp) = (params.p, proposal_p);
    // log of proposal/target per tilted cell
    let (lr_occ, lr_vac) = ((pp / p).ln(), ((1.0 - pp) / (1.0 - p)).ln());
    let vars = cx.variable_cells(params.bc);
    let mut in_group = vec![false; cx.count(cx.top())];
    let mut rng = stream(seed, "estimate-v-gamma-tilted");
    let mut config = PercolationConfig::empty(&cx, params.bc);
    let (mut v, mut fail) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut hits = 0;
    for _ in 0..n {
        let j = rng.random_range(0..groups.len());
        for &c in &groups[j] {
            in_group[c] = true;
        }
        for &c in &vars {
            let prob = if in_group[c] { pp } else { p };
            config.set(c, rng.random::<f64>() < prob);
        }
        for &c in &groups[j] {
            in_group[c] = false;
        }
        let mixture = groups
            .iter()
            .map(|grp| grp.iter().map(|&c| if config.is_occupied(c) { lr_occ } else { lr_vac }).sum::<f64>().exp())
            .sum::<f64>()
            / groups.len() as f64;
        let w = 1.0 / mixture;
        let ok = tester.test_config(&g, &config);
        hits += u64::from(ok);
        v.push(if ok { w } else { 0.0 });
        fail.push(if ok { 0.0 } else { w });
    }
    let (v_mean, v_stderr) = mean_and_stderr(&v);
    let (fail_mean, fail_stderr) = mean_and_stderr(&fail);
    Ok(ImportanceEstimate {
        n: n as u64,
        components: groups.len(),
        proposal_p,
        v_mean,
        v_stderr,
        fail_mean,
        fail_stderr,
        proposal_hits: hits,
    })
}

/// τ̂ from the top/bottom separation probability of the free PRCM on
/// [-N, N]^d at p = p_star(p*), normalized by (2N)^{d-1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensionEstimate {
    pub p_star: f64,
    pub q: f64,
    pub d: usize,
    pub half_width: i64,
    pub normalization: f64,
    pub separation: Estimate,
    /// Dual top-bottom crossing probability, 1 - separation.
    pub crossing_probability: f64,
    /// None when no separation was observed.
    pub tau: Option<f64>,
    /// Lower bound from the upper end of the interval.
    pub tau_lower_bound: f64,
}

pub fn surface_tension_estimate(p_star_dual: f64, q: f64, d: usize, half_width: i64, n: usize, seed: u64) -> Result<TensionEstimate> {
    if half_width < 1 {
        return Err(invalid("N must be at least 1"));
    }
    if d < 2 {
        return Err(invalid("d must be at least 2"));
    }
    if !(0.0..=1.0).contains(&p_star_dual) {
        return Err(invalid("p* outside [0, 1]"));
    }
    let p = p_star(p_star_dual, q);
    let coeffs = if q.fract() == 0.0 { Coefficients::Cyclic(q as u64) } else { Coefficients::Rational(q) };
    let params = PrcmParams::new(p, coeffs, d - 1, d, BoundaryCondition::Free)?;
    let bx = LatticeBox::new(&vec![-half_width; d], &vec![half_width; d])?;
    let cx = Complex::new(&bx, d - 1)?;
    let g = DualGraph::new(&cx)?;
    let mut hits = Vec::with_capacity(n);
    let mut rng = stream(seed, "surface-tension");
    let independent = for_each_sample(&cx, Some(&g), &params, n, default_burn_in(n), &mut rng, |pc, dual| {
        let sep = match dual {
            Some(q) => crossing_event(&g, q, &bx, d - 1)?,
            None => crossing_event(&g, &dualize(&cx, pc)?, &bx, d - 1)?,
        };
        hits.push(sep);
        Ok(())
    })?;
    let separation = Estimate::from_indicators(&hits, independent);
    let normalization = ((2 * half_width) as f64).powi(d as i32 - 1);
    let tau = (separation.successes > 0).then(|| -separation.p_hat.ln() / normalization);
    let tau_lower_bound = -separation.ci.1.ln() / normalization;
    Ok(TensionEstimate {
        p_star: p_star_dual,
        q,
        d,
        half_width,
        normalization,
        crossing_probability: 1.0 - separation.p_hat,
        separation,
        tau,
        tau_lower_bound,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayLaw {
    Area,
    Perimeter,
}

/// One loop: its area, its perimeter and the estimated P(V_γ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub area: f64,
    pub per: f64,
    pub p_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawFit {
    pub slope: f64,
    pub stderr: f64,
    /// sqrt(Σ residual² / Σ y²).
    pub normalized_residual: f64,
    /// -log p̂ divided by the law's denominator, per point.
    pub raw: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub law: DecayLaw,
    pub decay_constant: f64,
    pub stderr: f64,
    pub area: LawFit,
    pub perimeter: LawFit,
}

fn fit_through_origin(xs: &[f64], ys: &[f64]) -> Result<LawFit> {
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Precondition("degenerate fit".into()));
    }
    let slope = xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / sxx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x).powi(2)).sum();
    Ok(LawFit {
        slope,
        stderr: (ssr / (xs.len() as f64 - 1.0) / sxx).sqrt(),
        normalized_residual: (ssr / syy).sqrt(),
        raw: xs.iter().zip(ys).map(|(x, y)| y / x).collect(),
    })
}

/// Least squares of -log p̂ through the origin against Area and against
/// Per; the law with the smaller normalized residual wins.
pub fn fit_decay(points: &[DecayPoint]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::Precondition("a decay fit needs at least three sizes".into()));
    }
    if points.iter().any(|pt| !(pt.p_hat > 0.0 && pt.p_hat <= 1.0) || pt.area <= 0.0 || pt.per <= 0.0) {
        return Err(Error::Precondition("degenerate point in decay fit".into()));
    }
    let ys: Vec<f64> = points.iter().map(|pt| -pt.p_hat.ln()).collect();
    let area = fit_through_origin(&points.iter().map(|pt| pt.area).collect::<Vec<_>>(), &ys)?;
    let perimeter = fit_through_origin(&points.iter().map(|pt| pt.per).collect::<Vec<_>>(), &ys)?;
    let (law, best) = if area.normalized_residual <= perimeter.normalized_residual {
        (DecayLaw::Area, &area)
    } else {
        (DecayLaw::Perimeter, &perimeter)
    };
    Ok(FitResult { law, decay_constant: best.slope, stderr: best.stderr, area: area.clone(), perimeter: perimeter.clone() })
}

/// Area and perimeter of a rectangular boundary: the volume of r and the
/// number of (d-2)-cells of γ.
pub fn area_and_perimeter(gamma: &Chain) -> Result<(f64, f64)> {
    let (r, _) = spanning_box(gamma)?;
    let area: i64 = r.dims().into_iter().filter(|&x| x > 0).product();
    Ok((area as f64, gamma.len() as f64))
}

/// Frequencies of C_t, D_t and C̄_t = C_t ∩ D_t on the box t.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeRates {
    pub core_size: usize,
    pub c_t: Estimate,
    pub d_t: Estimate,
    pub c_bar_t: Estimate,
}

impl TubeRates {
    /// -log rate(C̄_t) / |s|; None when C̄_t was never observed.
    pub fn perimeter_trend(&self) -> Option<f64> {
        (self.c_bar_t.successes > 0).then(|| -self.c_bar_t.p_hat.ln() / self.core_size as f64)
    }
}

pub fn tube_event_rate(params: &PrcmParams, s: &LatticeBox, l: i64, n: usize, seed: u64) -> Result<TubeRates> {
    if params.i + 1 != params.d {
        return Err(Error::Unsupported("tube events need i = d-1".into()));
    }
    let tube = Tube::new(s, l)?;
    let t = tube.region()?;
    let cx = Complex::new(&t, params.i)?;
    let g = DualGraph::new(&cx)?;
    let modulus = event_modulus(params);
    let core = tube.core_chain(modulus)?;
    let (mut c, mut dd, mut both) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut rng = stream(seed, "tube-event-rate");
    let independent = for_each_sample(&cx, Some(&g), params, n, default_burn_in(n), &mut rng, |p, dual| {
        let owned;
        let dual = match dual {
            Some(q) => q,
            None => {
                owned = dualize(&cx, p)?;
                &owned
            }
        };
        let ct = relative_null_homology(&cx, p, &core, &t, modulus)?;
        let dt = d_t_event(&g, dual, &tube)?;
        c.push(ct);
        dd.push(dt);
        both.push(ct && dt);
        Ok(())
    })?;
    Ok(TubeRates {
        core_size: core.len(),
        c_t: Estimate::from_indicators(&c, independent),
        d_t: Estimate::from_indicators(&dd, independent),
        c_bar_t: Estimate::from_indicators(&both, independent),
    })
}

/// (d-1)-boxes r_l = [0, M_l] × [0, m_l]^{d-2} × {0} with M_l = l² and
/// m_l = min(M_l, ⌈α log M_l √l⌉), for l = 2 ..= l_max.
#[derive(Clone, Debug, PartialEq)]
pub struct SuitableFamily {
    pub alpha: f64,
    pub boxes: Vec<LatticeBox>,
}

impl SuitableFamily {
    /// (m(r_l), M(r_l)) per member.
    pub fn sides(&self) -> Vec<(i64, i64)> {
        self.boxes
            .iter()
            .map(|b| {
                let dims: Vec<i64> = b.dims().into_iter().filter(|&x| x > 0).collect();
                (*dims.iter().min().expect("nonempty"), *dims.iter().max().expect("nonempty"))
            })
            .collect()
    }

    /// m/log M ≥ α√l along the prefix, so the ratio diverges.
    pub fn check(&self) -> bool {
        self.sides().iter().enumerate().all(|(j, &(m, big))| {
            let l = (j + 2) as f64;
            m == big || m as f64 / (big as f64).ln() >= self.alpha * l.sqrt() - 1e-12
        })
    }
}

pub fn make_suitable_family(d: usize, l_max: usize, alpha: f64) -> Result<SuitableFamily> {
    if l_max < 3 {
        return Err(invalid("a suitable family needs l_max ≥ 3"));
    }
    if d < 2 {
        return Err(invalid("d must be at least 2"));
    }
    if !(alpha > 0.0) {
        return Err(invalid("α must be positive"));
    }
    let mut boxes = Vec::new();
    for l in 2..=l_max {
        let big = (l * l) as i64;
        let m = ((alpha * (big as f64).ln() * (l as f64).sqrt()).ceil() as i64).min(big);
        let mut highs = vec![m; d];
        highs[0] = big;
        highs[d - 1] = 0;
        boxes.push(LatticeBox::new(&vec![0; d], &highs)?);
    }
    Ok(SuitableFamily { alpha, boxes })
}

/// The square boundary ∂([0,m]^{d-1} × {0}) in a box with the given margin.
pub fn square_loop(d: usize, side: i64, margin: i64) -> Result<(LatticeBox, Chain)> {
    if d < 3 || side < 1 || margin < 1 {
        return Err(invalid("square loops need d ≥ 3, side ≥ 1 and margin ≥ 1"));
    }
    let mut highs = vec![side; d];
    highs[d - 1] = 0;
    let r = LatticeBox::new(&vec![0; d], &highs)?;
    let bx = r.expand(margin)?;
    Ok((bx, loop_boundary_chain(&r, 0)?))
}

/// A grid of (p, q, d, loop side) points, each estimated independently.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub p: Vec<f64>,
    pub q: Vec<u64>,
    #[serde(default = "default_d")]
    pub d: Vec<usize>,
    pub sides: Vec<i64>,
    #[serde(default = "default_margin")]
    pub margin: i64,
    #[serde(default = "default_bc")]
    pub bc: BoundaryCondition,
    pub samples: usize,
    pub seed: u64,
}

fn default_d() -> Vec<usize> {
    vec![3]
}

fn default_margin() -> i64 {
    2
}

fn default_bc() -> BoundaryCondition {
    BoundaryCondition::Free
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub q: u64,
    pub d: usize,
    pub bc: BoundaryCondition,
    pub side: i64,
    pub area: f64,
    pub per: f64,
    pub successes: u64,
    pub n: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

pub const SWEEP_HEADER: [&str; 13] = ["p", "q", "d", "bc", "side", "area", "per", "successes", "n", "p_hat", "ci_lo", "ci_hi", "seed"];

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.margin < 1 {
            return Err(invalid("loops need a margin of at least 1 inside each box"));
        }
        if self.p.iter().any(|p| !(0.0..=1.0).contains(p)) || self.q.contains(&0) || self.d.iter().any(|&d| d < 3) {
            return Err(invalid("sweep grid has an invalid p, q or d"));
        }
        if self.sides.iter().any(|&s| s < 1) {
            return Err(invalid("loop sides must be positive"));
        }
        Ok(())
    }

    fn grid(&self) -> Vec<(f64, u64, usize, i64)> {
        let mut out = Vec::new();
        for &p in &self.p {
            for &q in &self.q {
                for &d in &self.d {
                    for &s in &self.sides {
                        out.push((p, q, d, s));
                    }
                }
            }
        }
        out
    }
}

/// Seed of one grid point, derived from the master seed and its coordinates.
pub fn point_seed(master: u64, p: f64, q: u64, d: usize, side: i64) -> u64 {
    let mut rng = stream(master, &format!("sweep/p={p}/q={q}/d={d}/side={side}"));
    rng.random()
}

/// Runs every grid point in parallel; rows come back in grid order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    spec.grid()
        .into_par_iter()
        .map(|(p, q, d, side)| {
            let params = PrcmParams::cyclic(p, q, d - 1, d, spec.bc)?;
            let (bx, gamma) = square_loop(d, side, spec.margin)?;
            let seed = point_seed(spec.seed, p, q, d, side);
            let est = estimate_v_gamma(&params, &bx, &gamma, spec.samples, seed)?;
            let (area, per) = area_and_perimeter(&gamma)?;
            Ok(SweepRow {
                p,
                q,
                d,
                bc: spec.bc,
                side,
                area,
                per,
                successes: est.successes,
                n: est.n,
                p_hat: est.p_hat,
                ci_lo: est.ci.0,
                ci_hi: est.ci.1,
                seed,
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_sweep_csv(rows: &[SweepRow], w: impl Write) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for row in rows {
        wr.serialize(row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_sweep_csv(r: impl Read) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != SWEEP_HEADER {
        return Err(Error::Config(format!("unexpected sweep header {header:?}")));
    }
    rd.deserialize().map(|row| row.map_err(csv_err)).collect()
}
