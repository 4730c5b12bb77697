//! The plaquette random-cluster measure: exact weights and laws on tiny
//! boxes, and Markov chain samplers.

use std::io::Write;

use fixedbitset::FixedBitSet;
use num_bigint::BigUint;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::algebra::{cocycle_group, null_homology_test, HomologyEngine};
use crate::duality::{dualize, DualBondConfig, DualGraph, VGammaTester};
use crate::error::{invalid, Error, Result};
use crate::lattice::{BoundaryCondition, Chain, Cochain, Complex, LatticeBox, PercolationConfig};
use crate::rng::{stream, Rng};

/// Largest number of state variables `enumerate_measure` accepts.
pub const ENUMERATION_CAP: usize = 24;

/// Coefficient group of the cohomology factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "q")]
pub enum Coefficients {
    /// Z_q; q = 1 is the trivial group and gives Bernoulli percolation.
    Cyclic(u64),
    /// Weight q^{b_{i-1}(P; Q)} with real q ≥ 1.
    Rational(f64),
}

impl Coefficients {
    pub fn q(&self) -> f64 {
        match *self {
            Coefficients::Cyclic(q) => q as f64,
            Coefficients::Rational(q) => q,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrcmParams {
    pub p: f64,
    pub coefficients: Coefficients,
    pub i: usize,
    pub d: usize,
    pub bc: BoundaryCondition,
}

impl PrcmParams {
    pub fn new(p: f64, coefficients: Coefficients, i: usize, d: usize, bc: BoundaryCondition) -> Result<Self> {
        let params = PrcmParams { p, coefficients, i, d, bc };
        params.validate()?;
        Ok(params)
    }

    pub fn cyclic(p: f64, q: u64, i: usize, d: usize, bc: BoundaryCondition) -> Result<Self> {
        Self::new(p, Coefficients::Cyclic(q), i, d, bc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid(format!("p = {} outside [0, 1]", self.p)));
        }
        if self.i == 0 || self.i >= self.d {
            return Err(invalid(format!("plaquette dimension {} needs 0 < i < d = {}", self.i, self.d)));
        }
        match self.coefficients {
            Coefficients::Cyclic(0) => Err(invalid("q must be at least 1")),
            Coefficients::Rational(q) if !(q >= 1.0) || !q.is_finite() => Err(invalid(format!("q = {q} must be ≥ 1"))),
            Coefficients::Rational(q) if q.fract() != 0.0 && self.i + 1 != self.d => {
                Err(Error::Unsupported("non-integer q only in codimension one".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn q(&self) -> f64 {
        self.coefficients.q()
    }

    /// Dual edge parameter p*.
    pub fn p_star(&self) -> f64 {
        p_star(self.p, self.q())
    }

    fn check_complex(&self, cx: &Complex) -> Result<()> {
        if cx.ambient_dim() != self.d || cx.top() != self.i {
            return Err(Error::DimensionMismatch(format!(
                "parameters (i={}, d={}) against complex (top={}, d={})",
                self.i,
                self.d,
                cx.top(),
                cx.ambient_dim()
            )));
        }
        Ok(())
    }
}

pub fn p_star(p: f64, q: f64) -> f64 {
    (1.0 - p) * q / ((1.0 - p) * q + p)
}

pub fn beta_star(beta: f64, q: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("β* diverges at β = 0"));
    }
    Ok(((beta.exp() + q - 1.0) / beta.exp_m1()).ln())
}

/// Self-dual point √q/(1+√q).
pub fn self_dual_point(q: f64) -> f64 {
    q.sqrt() / (1.0 + q.sqrt())
}

/// Unnormalized weight of one configuration, split into its factors.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigWeight {
    pub occupied: usize,
    pub vacant: usize,
    /// |H^{i-1}(P; Z_q)| in Z_q mode.
    pub cohomology_order: Option<BigUint>,
    /// Natural log of the cohomology factor (q^{b} in rational mode).
    pub log_factor: f64,
}

impl ConfigWeight {
    pub fn ln(&self, p: f64) -> f64 {
        xlogy(self.occupied, p) + xlogy(self.vacant, 1.0 - p) + self.log_factor
    }

    pub fn value(&self, p: f64) -> f64 {
        self.ln(p).exp()
    }
}

fn xlogy(n: usize, x: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 * x.ln()
    }
}

fn log_factor(engine: &HomologyEngine, p: &PercolationConfig, coeffs: Coefficients) -> Result<(Option<BigUint>, f64)> {
    let k = p.dim - 1;
    match coeffs {
        Coefficients::Cyclic(1) => Ok((Some(BigUint::from(1u8)), 0.0)),
        Coefficients::Cyclic(q) => {
            let h = engine.homology_order(p, k, q)?;
            let ln = engine.log_homology_order(p, k, q)?;
            Ok((Some(h), ln))
        }
        Coefficients::Rational(q) => Ok((None, engine.betti_rational(p, k)? as f64 * q.ln())),
    }
}

/// p^{|P|} (1-p)^{N-|P|} |H^{i-1}(P; G)|, with N the number of state variables.
/// The cohomology order is computed through |H_{i-1}(P; Z_q)|, which has the same size.
pub fn config_weight(cx: &Complex, p: &PercolationConfig, params: &PrcmParams) -> Result<ConfigWeight> {
    params.check_complex(cx)?;
    if p.bc != params.bc {
        return Err(invalid("configuration boundary condition differs from the parameters"));
    }
    p.validate(cx)?;
    let engine = HomologyEngine::new(cx);
    weight_with(&engine, cx, p, params.coefficients)
}

fn weight_with(engine: &HomologyEngine, cx: &Complex, p: &PercolationConfig, coeffs: Coefficients) -> Result<ConfigWeight> {
    let n = cx.variable_cells(p.bc).len();
    let occupied = p.count();
    let (cohomology_order, log_factor) = log_factor(engine, p, coeffs)?;
    Ok(ConfigWeight { occupied, vacant: n - occupied, cohomology_order, log_factor })
}

/// Cohomology factors of every configuration of a tiny box, reusable across p.
#[derive(Clone, Debug)]
pub struct WeightTable {
    pub bc: BoundaryCondition,
    pub variables: Vec<usize>,
    log_factors: Vec<f64>,
}

impl WeightTable {
    pub fn new(cx: &Complex, bc: BoundaryCondition, coeffs: Coefficients) -> Result<Self> {
        let variables = cx.variable_cells(bc);
        if variables.len() > ENUMERATION_CAP {
            return Err(Error::TooLarge(format!("{} state variables exceed the cap of {ENUMERATION_CAP}", variables.len())));
        }
        let engine = HomologyEngine::new(cx);
        let log_factors = (0..1u64 << variables.len())
            .map(|m| Ok(log_factor(&engine, &PercolationConfig::from_variable_mask(cx, bc, m), coeffs)?.1))
            .collect::<Result<_>>()?;
        Ok(WeightTable { bc, variables, log_factors })
    }

    pub fn log_factor(&self, mask: u64) -> f64 {
        self.log_factors[mask as usize]
    }

    pub fn distribution(&self, p: f64) -> ExactDistribution {
        let n = self.variables.len();
        let logs: Vec<f64> = self
            .log_factors
            .iter()
            .enumerate()
            .map(|(m, lf)| {
                let k = (m as u64).count_ones() as usize;
                xlogy(k, p) + xlogy(n - k, 1.0 - p) + lf
            })
            .collect();
        ExactDistribution::from_logs(self.bc, self.variables.clone(), logs)
    }
}

/// A law on the configurations of a tiny box, indexed by variable mask
/// (bit j for the j-th state variable).
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDistribution {
    pub bc: BoundaryCondition,
    pub variables: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub log_partition: f64,
}

impl ExactDistribution {
    pub fn from_logs(bc: BoundaryCondition, variables: Vec<usize>, logs: Vec<f64>) -> Self {
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        let log_partition = max + sum.ln();
        let probabilities = logs.iter().map(|l| (l - log_partition).exp()).collect();
        ExactDistribution { bc, variables, probabilities, log_partition }
    }

    pub fn partition_value(&self) -> f64 {
        self.log_partition.exp()
    }

    pub fn probability(&self, cx: &Complex, p: &PercolationConfig) -> f64 {
        self.probabilities[p.variable_mask(cx) as usize]
    }

    pub fn probability_of(&self, mut event: impl FnMut(u64) -> bool) -> f64 {
        self.probabilities.iter().enumerate().filter(|(m, _)| event(*m as u64)).map(|(_, w)| w).sum()
    }

    pub fn expectation(&self, mut f: impl FnMut(u64) -> f64) -> f64 {
        self.probabilities.iter().enumerate().map(|(m, w)| w * f(m as u64)).sum()
    }

    pub fn max_abs_difference(&self, other: &ExactDistribution) -> f64 {
        self.probabilities.iter().zip(&other.probabilities).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub fn enumerate_measure(cx: &Complex, params: &PrcmParams) -> Result<ExactDistribution> {
    params.check_complex(cx)?;
    Ok(WeightTable::new(cx, params.bc, params.coefficients)?.distribution(params.p))
}

/// Classical random-cluster law at `p_star` on the dual graph, pushed back
/// to primal variable masks: an edge is open exactly when its plaquette is
/// vacant; edges of non-variable plaquettes keep their forced state.
pub fn dual_rcm_distribution(cx: &Complex, g: &DualGraph, bc: BoundaryCondition, p_star: f64, q: f64) -> Result<ExactDistribution> {
    let variables = cx.variable_cells(bc);
    if variables.len() > ENUMERATION_CAP {
        return Err(Error::TooLarge(format!("{} state variables exceed the cap of {ENUMERATION_CAP}", variables.len())));
    }
    let n = variables.len();
    let mut base = FixedBitSet::with_capacity(g.edge_count());
    if bc == BoundaryCondition::Free {
        for e in 0..g.edge_count() {
            if g.plaquette_on_boundary(e) {
                base.insert(e);
            }
        }
    }
    let logs = (0..1u64 << n)
        .map(|m| {
            let mut open = base.clone();
            for (j, &e) in variables.iter().enumerate() {
                if m & (1 << j) == 0 {
                    open.insert(e);
                }
            }
            let (k, _) = g.components(&open);
            let closed = m.count_ones() as usize;
            xlogy(n - closed, p_star) + xlogy(closed, 1.0 - p_star) + k as f64 * q.ln()
        })
        .collect();
    Ok(ExactDistribution::from_logs(bc, variables, logs))
}

/// Heat-bath probability that a dual edge is open given whether its
/// endpoints are joined without it.
pub fn heat_bath_open_probability(p_star: f64, q: f64, connected: bool) -> f64 {
    if connected {
        p_star
    } else {
        p_star / (p_star + (1.0 - p_star) * q)
    }
}

/// Single-bond heat bath for the dual classical random-cluster model (i = d-1).
pub struct DualHeatBath<'a> {
    g: &'a DualGraph,
    bc: BoundaryCondition,
    p_star: f64,
    q: f64,
    variables: Vec<usize>,
    open: FixedBitSet,
}

impl<'a> DualHeatBath<'a> {
    pub fn new(cx: &Complex, g: &'a DualGraph, params: &PrcmParams, init: &PercolationConfig) -> Result<Self> {
        params.check_complex(cx)?;
        if params.i + 1 != params.d {
            return Err(Error::Unsupported("the dual sampler needs i = d-1".into()));
        }
        let dual = dualize(cx, init)?;
        Ok(DualHeatBath {
            g,
            bc: params.bc,
            p_star: params.p_star(),
            q: params.q(),
            variables: cx.variable_cells(params.bc),
            open: dual.open().clone(),
        })
    }

    pub fn update(&mut self, e: usize, rng: &mut Rng) {
        let (u, v) = self.g.ends(e);
        let connected = self.g.connected(&self.open, u, v, Some(e));
        let prob = heat_bath_open_probability(self.p_star, self.q, connected);
        self.open.set(e, rng.random::<f64>() < prob);
    }

    /// One systematic scan over the state variables.
    pub fn sweep(&mut self, rng: &mut Rng) {
        for j in 0..self.variables.len() {
            self.update(self.variables[j], rng);
        }
    }

    pub fn dual(&self) -> DualBondConfig {
        DualBondConfig::from_open(self.bc, self.open.clone())
    }

    pub fn open(&self) -> &FixedBitSet {
        &self.open
    }

    pub fn config(&self, cx: &Complex) -> PercolationConfig {
        self.dual().to_primal(cx)
    }
}

/// Single-plaquette heat bath on the primal measure, any i; each update
/// computes two cohomology factors.
pub struct DirectHeatBath<'a> {
    engine: HomologyEngine<'a>,
    params: PrcmParams,
    variables: Vec<usize>,
    state: PercolationConfig,
}

impl<'a> DirectHeatBath<'a> {
    pub fn new(cx: &'a Complex, params: &PrcmParams, init: PercolationConfig) -> Result<Self> {
        params.check_complex(cx)?;
        init.validate(cx)?;
        Ok(DirectHeatBath {
            engine: HomologyEngine::new(cx),
            params: *params,
            variables: cx.variable_cells(params.bc),
            state: init,
        })
    }

    pub fn update(&mut self, c: usize, rng: &mut Rng) -> Result<()> {
        self.state.set(c, true);
        let with = log_factor(&self.engine, &self.state, self.params.coefficients)?.1;
        self.state.set(c, false);
        let without = log_factor(&self.engine, &self.state, self.params.coefficients)?.1;
        let p = self.params.p;
        let prob = if p == 0.0 || p == 1.0 {
            p
        } else {
            1.0 / (1.0 + (1.0 - p) / p * (without - with).exp())
        };
        self.state.set(c, rng.random::<f64>() < prob);
        Ok(())
    }

    pub fn sweep(&mut self, rng: &mut Rng) -> Result<()> {
        for j in 0..self.variables.len() {
            self.update(self.variables[j], rng)?;
        }
        Ok(())
    }

    pub fn config(&self) -> &PercolationConfig {
        &self.state
    }
}

/// δf evaluated on the top cell `c`.
pub fn coboundary_at(cx: &Complex, f: &Cochain, c: usize) -> i64 {
    let k = cx.top();
    let s: i64 = cx.faces(k, c).iter().map(|&(face, sign)| sign * f.values[face]).sum();
    s.rem_euclid(f.q as i64)
}

/// Edwards–Sokal alternation between the gauge field f and the plaquettes P.
pub struct EdwardsSokal<'a> {
    cx: &'a Complex,
    p: f64,
    q: u64,
    variables: Vec<usize>,
    f: Cochain,
    state: PercolationConfig,
}

impl<'a> EdwardsSokal<'a> {
    pub fn new(cx: &'a Complex, params: &PrcmParams, init: PercolationConfig) -> Result<Self> {
        params.check_complex(cx)?;
        let q = match params.coefficients {
            Coefficients::Cyclic(q) => q,
            _ => return Err(Error::Unsupported("Edwards–Sokal needs cyclic coefficients".into())),
        };
        init.validate(cx)?;
        let f = Cochain::zero(cx.bx(), cx.top() - 1, q)?;
        Ok(EdwardsSokal { cx, p: params.p, q, variables: cx.variable_cells(params.bc), f, state: init })
    }

    /// Bernoulli(p) on the plaquettes where δf vanishes, empty elsewhere.
    pub fn plaquette_step(&mut self, rng: &mut Rng) {
        for j in 0..self.variables.len() {
            let c = self.variables[j];
            let allowed = coboundary_at(self.cx, &self.f, c) == 0;
            self.state.set(c, allowed && rng.random::<f64>() < self.p);
        }
    }

    /// Uniform cocycle of the current P; a no-op over the trivial group Z_1.
    pub fn field_step(&mut self, rng: &mut Rng) -> Result<()> {
        if self.q == 1 {
            return Ok(());
        }
        let group = cocycle_group(self.cx, &self.state, self.q)?;
        self.f = Cochain::from_values(self.cx.bx(), self.cx.top() - 1, self.q, group.sample(rng))?;
        Ok(())
    }

    pub fn sweep(&mut self, rng: &mut Rng) -> Result<()> {
        self.plaquette_step(rng);
        self.field_step(rng)
    }

    pub fn field(&self) -> &Cochain {
        &self.f
    }

    pub fn set_field(&mut self, f: Cochain) {
        self.f = f;
    }

    pub fn config(&self) -> &PercolationConfig {
        &self.state
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    DualHeatBath,
    DirectHeatBath,
    EdwardsSokal,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual" | "dual-heat-bath" => Ok(SamplerKind::DualHeatBath),
            "direct" | "direct-heat-bath" => Ok(SamplerKind::DirectHeatBath),
            "es" | "edwards-sokal" => Ok(SamplerKind::EdwardsSokal),
            _ => Err(invalid(format!("unknown sampler '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Empty,
    Full,
    Random,
}

#[derive(Clone, Debug)]
pub struct SampleSpec {
    pub params: PrcmParams,
    pub bx: LatticeBox,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub sampler: SamplerKind,
    pub init: Init,
    pub gamma: Option<Chain>,
    /// Coefficients of the traced V_γ test; defaults to Z_q in cyclic mode and Z otherwise.
    pub v_gamma_modulus: Option<u64>,
}

impl SampleSpec {
    pub fn new(params: PrcmParams, bx: LatticeBox, sweeps: usize, burn_in: usize, seed: u64) -> Self {
        let sampler = if params.i + 1 == params.d { SamplerKind::DualHeatBath } else { SamplerKind::EdwardsSokal };
        SampleSpec { params, bx, sweeps, burn_in, seed, sampler, init: Init::Random, gamma: None, v_gamma_modulus: None }
    }

    fn modulus(&self) -> u64 {
        self.v_gamma_modulus.unwrap_or(match self.params.coefficients {
            Coefficients::Cyclic(q) if q >= 2 => q,
            _ => 0,
        })
    }
}

/// One per-sweep observable row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sweep: usize,
    pub occupied: usize,
    pub components: Option<usize>,
    pub v_gamma: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct SampleRun {
    pub config: PercolationConfig,
    pub trace: Vec<TraceRow>,
}

impl SampleRun {
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for row in &self.trace {
            let line = serde_json::to_string(row).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn v_gamma_frequency(&self) -> Option<f64> {
        let vals: Vec<bool> = self.trace.iter().filter_map(|r| r.v_gamma).collect();
        (!vals.is_empty()).then(|| vals.iter().filter(|&&v| v).count() as f64 / vals.len() as f64)
    }
}

fn initial_config(cx: &Complex, params: &PrcmParams, init: Init, rng: &mut Rng) -> PercolationConfig {
    match init {
        Init::Empty => PercolationConfig::empty(cx, params.bc),
        Init::Full => PercolationConfig::full(cx, params.bc),
        Init::Random => {
            let mut p = PercolationConfig::empty(cx, params.bc);
            for c in cx.variable_cells(params.bc) {
                p.set(c, rng.random::<f64>() < params.p);
            }
            p
        }
    }
}

struct Observer<'a> {
    cx: &'a Complex,
    g: Option<&'a DualGraph>,
    tester: Option<VGammaTester>,
    gamma: Option<&'a Chain>,
    modulus: u64,
}

impl Observer<'_> {
    fn row(&self, sweep: usize, p: &PercolationConfig, open: Option<&FixedBitSet>) -> Result<TraceRow> {
        let components = match (self.g, open) {
            (Some(g), Some(open)) => Some(g.components(open).0),
            (Some(g), None) => Some(dualize(self.cx, p)?.components(g).0),
            _ => None,
        };
        let v_gamma = match (&self.tester, self.gamma) {
            (Some(t), _) => Some(t.test(self.g.expect("dual graph"), |e| p.is_occupied(e))),
            (None, Some(gamma)) => Some(null_homology_test(self.cx, p, gamma, self.modulus)?),
            _ => None,
        };
        Ok(TraceRow { sweep, occupied: p.count(), components, v_gamma })
    }
}

/// Runs one chain; rows are recorded after burn-in, one per sweep.
pub fn sample(spec: &SampleSpec) -> Result<SampleRun> {
    let params = &spec.params;
    params.validate()?;
    if spec.bx.ambient_dim() != params.d {
        return Err(Error::DimensionMismatch("box dimension differs from d".into()));
    }
    let cx = Complex::new(&spec.bx, params.i)?;
    let codim_one = params.i + 1 == params.d;
    let g = if codim_one { Some(DualGraph::new(&cx)?) } else { None };
    let modulus = spec.modulus();
    let tester = match (&g, &spec.gamma) {
        (Some(g), Some(gamma)) => {
            let (r, _) = crate::duality::spanning_box(gamma)?;
            Some(VGammaTester::new(g, &cx, params.bc, &r, modulus)?)
        }
        _ => None,
    };
    let obs = Observer { cx: &cx, g: g.as_ref(), tester, gamma: spec.gamma.as_ref(), modulus };
    let mut rng = stream(spec.seed, "prcm-sample");
    let init = initial_config(&cx, params, spec.init, &mut rng);
    let mut trace = Vec::with_capacity(spec.sweeps);
    let total = spec.burn_in + spec.sweeps;
    let config = match spec.sampler {
        SamplerKind::DualHeatBath => {
            let g = g.as_ref().ok_or_else(|| Error::Unsupported("the dual sampler needs i = d-1".into()))?;
            let mut hb = DualHeatBath::new(&cx, g, params, &init)?;
            for s in 0..total {
                hb.sweep(&mut rng);
                if s >= spec.burn_in {
                    let p = hb.config(&cx);
                    trace.push(obs.row(s - spec.burn_in, &p, Some(hb.open()))?);
                }
            }
            hb.config(&cx)
        }
        SamplerKind::DirectHeatBath => {
            let mut hb = DirectHeatBath::new(&cx, params, init)?;
            for s in 0..total {
                hb.sweep(&mut rng)?;
                if s >= spec.burn_in {
                    trace.push(obs.row(s - spec.burn_in, hb.config(), None)?);
                }
            }
            hb.config().clone()
        }
        SamplerKind::EdwardsSokal => {
            let mut es = EdwardsSokal::new(&cx, params, init)?;
            for s in 0..total {
                es.sweep(&mut rng)?;
                if s >= spec.burn_in {
                    trace.push(obs.row(s - spec.burn_in, es.config(), None)?);
                }
            }
            es.config().clone()
        }
    };
    Ok(SampleRun { config, trace })
}

/// Integrated autocorrelation time with Sokal's self-consistent window (c = 5).
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.5;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for t in 1..n {
        let c = (0..n - t).map(|k| (series[k] - mean) * (series[k + t] - mean)).sum::<f64>() / ((n - t) as f64 * var);
        tau += c;
        if t as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}
