//! Potts lattice gauge theory: Hamiltonian, exact Gibbs laws on tiny
//! complexes, a single-spin heat bath, Wilson loops, the joint coupling with
//! the plaquette random-cluster model, and the anomaly example.
//!
//! Spins live on the (i-1)-cells of a box complex whose top dimension is i.
//! Exact laws are computed on coboundary classes: every weight and every
//! Wilson loop of a box depends on f only through δf, and f ↦ δf is affine
//! on each state set, so all classes have the same number of preimages.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;

use crate::algebra::{cocycle_group, full_boundary_matrix, homology_order, null_homology_test, null_homology_witness, SparseIntMatrix, ZqSubgroup};
use crate::error::{invalid, Error, Result};
use crate::lattice::{loop_boundary_chain, reduce_mod, BoundaryCondition, CellId, Chain, Cochain, Complex, LatticeBox, PercolationConfig};
use crate::prcm::{coboundary_at, enumerate_measure, Coefficients, PrcmParams};
use crate::rng::Rng;

/// Largest number of coboundary classes an exact computation visits.
pub const CLASS_CAP: u64 = 1 << 24;

/// Boundary condition of the gauge field.
#[derive(Clone, Debug, PartialEq)]
pub enum GaugeBoundary {
    /// Hamiltonian over interior plaquettes, no constraint on spins.
    Free,
    /// Hamiltonian over every plaquette of the closed box.
    Closed,
    /// δf vanishes on every boundary plaquette.
    Wired,
    /// Spins on boundary cells fixed to a boundary cocycle η.
    Eta(Cochain),
}

impl GaugeBoundary {
    pub fn percolation_bc(&self) -> BoundaryCondition {
        match self {
            GaugeBoundary::Free => BoundaryCondition::Free,
            GaugeBoundary::Closed => BoundaryCondition::Closed,
            GaugeBoundary::Wired | GaugeBoundary::Eta(_) => BoundaryCondition::Wired,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlgtParams {
    pub beta: f64,
    pub q: u64,
    pub bc: GaugeBoundary,
}

impl PlgtParams {
    pub fn new(beta: f64, q: u64, bc: GaugeBoundary) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(invalid(format!("β = {beta} must be finite and ≥ 0")));
        }
        if q < 2 {
            return Err(invalid("gauge group Z_q needs q ≥ 2"));
        }
        if let GaugeBoundary::Eta(eta) = &bc {
            if eta.q != q {
                return Err(invalid("η has a different modulus"));
            }
        }
        Ok(PlgtParams { beta, q, bc })
    }

    /// p = 1 - e^{-β}.
    pub fn p(&self) -> f64 {
        -(-self.beta).exp_m1()
    }

    pub fn prcm(&self, cx: &Complex) -> Result<PrcmParams> {
        PrcmParams::new(self.p(), Coefficients::Cyclic(self.q), cx.top(), cx.ambient_dim(), self.bc.percolation_bc())
    }
}

fn check_spins(cx: &Complex, f: &Cochain) -> Result<()> {
    if cx.top() == 0 || f.dim + 1 != cx.top() || &f.bx != cx.bx() || f.values.len() != cx.count(f.dim) {
        return Err(Error::DimensionMismatch("spin cochain does not match the complex".into()));
    }
    Ok(())
}

/// H(f) = -#{σ : δf(σ) = 0} over the plaquettes of the Hamiltonian.
pub fn hamiltonian(cx: &Complex, bc: &GaugeBoundary, f: &Cochain) -> Result<i64> {
    check_spins(cx, f)?;
    Ok(-(cx.variable_cells(bc.percolation_bc()).into_iter().filter(|&c| coboundary_at(cx, f, c) == 0).count() as i64))
}

fn boundary_spin_cells(cx: &Complex) -> Vec<usize> {
    let k = cx.top() - 1;
    (0..cx.count(k)).filter(|&c| cx.on_boundary(k, c)).collect()
}

fn check_eta(cx: &Complex, eta: &Cochain) -> Result<()> {
    check_spins(cx, eta)?;
    let top = cx.top();
    for c in 0..cx.count(top) {
        if cx.on_boundary(top, c) && coboundary_at(cx, eta, c) != 0 {
            return Err(Error::Precondition("η is not a cocycle on the box boundary".into()));
        }
    }
    Ok(())
}

/// Whether f belongs to the state set of the boundary condition.
pub fn in_state_set(cx: &Complex, bc: &GaugeBoundary, f: &Cochain) -> Result<bool> {
    check_spins(cx, f)?;
    let top = cx.top();
    Ok(match bc {
        GaugeBoundary::Free | GaugeBoundary::Closed => true,
        GaugeBoundary::Wired => (0..cx.count(top)).all(|c| !cx.on_boundary(top, c) || coboundary_at(cx, f, c) == 0),
        GaugeBoundary::Eta(eta) => boundary_spin_cells(cx).into_iter().all(|c| f.values[c] == eta.values[c]),
    })
}

fn root_of_unity(a: i64, q: u64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * reduce_mod(a, q) as f64 / q as f64)
}

/// W_γ(f) = exp(2πi f(γ)/q).
pub fn wilson_loop(f: &Cochain, gamma: &Chain) -> Result<Complex64> {
    if gamma.dim() > 0 && !gamma.boundary()?.is_empty() {
        return Err(Error::NotACycle);
    }
    Ok(root_of_unity(f.pair(gamma)?, f.q))
}

/// Rows of δ^{i-1} for the given top cells.
fn delta_rows(cx: &Complex, rows: &[usize]) -> Result<SparseIntMatrix> {
    Ok(full_boundary_matrix(cx, cx.top())?.transpose().select_rows(rows))
}

/// The image of the state set under f ↦ δf restricted to `tracked`, as an
/// offset plus a subgroup.
fn class_space(cx: &Complex, params: &PlgtParams, tracked: &[usize]) -> Result<(Vec<i64>, ZqSubgroup)> {
    let q = params.q;
    let top = cx.top();
    let dt = delta_rows(cx, tracked)?;
    let n_spins = cx.count(top - 1);
    let apply = |v: &[i64]| -> Vec<i64> { dt.mul_vec(v).into_iter().map(|x| reduce_mod(x, q)).collect() };
    match &params.bc {
        GaugeBoundary::Free | GaugeBoundary::Closed => Ok((vec![0; tracked.len()], ZqSubgroup::image(&dt, q)?)),
        GaugeBoundary::Wired => {
            let bd: Vec<usize> = (0..cx.count(top)).filter(|&c| cx.on_boundary(top, c)).collect();
            let ker = ZqSubgroup::kernel(&delta_rows(cx, &bd)?, q)?;
            let imgs: Vec<Vec<i64>> = ker.generators().map(|(g, _)| apply(g)).collect();
            Ok((vec![0; tracked.len()], ZqSubgroup::generated_by(&imgs, tracked.len(), q)?))
        }
        GaugeBoundary::Eta(eta) => {
            check_eta(cx, eta)?;
            let mut f0 = vec![0i64; n_spins];
            for c in boundary_spin_cells(cx) {
                f0[c] = eta.values[c];
            }
            let imgs: Vec<Vec<i64>> = (0..n_spins)
                .filter(|&c| !cx.on_boundary(top - 1, c))
                .map(|c| {
                    let mut e = vec![0i64; n_spins];
                    e[c] = 1;
                    apply(&e)
                })
                .collect();
            Ok((apply(&f0), ZqSubgroup::generated_by(&imgs, tracked.len(), q)?))
        }
    }
}

/// Exact Gibbs law on coboundary classes over a set of tracked plaquettes
/// containing the Hamiltonian's plaquettes.
pub struct GaugeClassLaw {
    pub tracked: Vec<usize>,
    /// Positions in `tracked` of the Hamiltonian's plaquettes.
    pub hamiltonian_positions: Vec<usize>,
    offset: Vec<i64>,
    group: ZqSubgroup,
    q: u64,
}

impl GaugeClassLaw {
    pub fn new(cx: &Complex, params: &PlgtParams, extra: &[usize]) -> Result<Self> {
        let mut tracked = cx.variable_cells(params.bc.percolation_bc());
        let n_ham = tracked.len();
        for &c in extra {
            if !tracked.contains(&c) {
                tracked.push(c);
            }
        }
        let (offset, group) = class_space(cx, params, &tracked)?;
        match group.order_u64() {
            Some(n) if n <= CLASS_CAP => {}
            _ => return Err(Error::TooLarge(format!("{} coboundary classes exceed {CLASS_CAP}", group.order()))),
        }
        Ok(GaugeClassLaw { tracked, hamiltonian_positions: (0..n_ham).collect(), offset, group, q: params.q })
    }

    pub fn class_count(&self) -> u64 {
        self.group.order_u64().expect("checked at construction")
    }

    /// Visits every class b (values on `tracked`) once.
    pub fn for_each_class(&self, mut f: impl FnMut(&[i64])) {
        let mut b = vec![0i64; self.offset.len()];
        self.group.for_each_element(|g| {
            for ((x, o), y) in b.iter_mut().zip(&self.offset).zip(g) {
                *x = reduce_mod(o + y, self.q);
            }
            f(&b);
        });
    }

    pub fn satisfied(&self, b: &[i64]) -> usize {
        self.hamiltonian_positions.iter().filter(|&&j| b[j] == 0).count()
    }

    /// Normalized Gibbs probabilities of the classes in visiting order.
    pub fn probabilities(&self, beta: f64) -> Vec<f64> {
        let n = self.hamiltonian_positions.len() as f64;
        let mut w = Vec::with_capacity(self.class_count() as usize);
        self.for_each_class(|b| w.push((beta * (self.satisfied(b) as f64 - n)).exp()));
        let z: f64 = w.iter().sum();
        w.iter().map(|x| x / z).collect()
    }
}

/// A chain τ of top cells with ∂τ = γ in the closed box, over Z.
fn filling(cx: &Complex, gamma: &Chain) -> Result<Chain> {
    let full = PercolationConfig::full(cx, BoundaryCondition::Closed);
    null_homology_witness(cx, &full, &gamma.with_modulus(0), 0)?
        .ok_or_else(|| Error::Precondition("cycle does not bound in the box".into()))
}

/// E_ν[W_γ] by exact summation over coboundary classes.
pub fn wilson_expectation_exact(cx: &Complex, params: &PlgtParams, gamma: &Chain) -> Result<Complex64> {
    let tau = filling(cx, gamma)?;
    let top = cx.top();
    let support: Vec<(usize, i64)> = tau.iter().map(|(c, v)| (cx.cells(top).get(c).expect("in box"), v)).collect();
    let cells: Vec<usize> = support.iter().map(|x| x.0).collect();
    let law = GaugeClassLaw::new(cx, params, &cells)?;
    let pos: Vec<(usize, i64)> =
        support.iter().map(|&(c, v)| (law.tracked.iter().position(|&t| t == c).expect("tracked"), v)).collect();
    let n = law.hamiltonian_positions.len();
    let q = params.q as usize;
    // exact class counts by (satisfied plaquettes, f(γ) mod q)
    let mut counts = vec![vec![0u64; q]; n + 1];
    law.for_each_class(|b| {
        let a: i64 = pos.iter().map(|&(j, v)| v * b[j]).sum();
        counts[law.satisfied(b)][reduce_mod(a, params.q) as usize] += 1;
    });
    let (mut num, mut den) = (Complex64::new(0.0, 0.0), 0.0);
    for (sat, row) in counts.iter().enumerate() {
        let w = (params.beta * (sat as f64 - n as f64)).exp();
        for (a, &c) in row.iter().enumerate() {
            num += root_of_unity(a as i64, params.q) * (w * c as f64);
            den += w * c as f64;
        }
    }
    Ok(num / den)
}

/// ν on every spin configuration, indexed by Σ_c f(c) q^c; zero off the state set.
pub fn gibbs_exact(cx: &Complex, params: &PlgtParams, cap: u64) -> Result<Vec<f64>> {
    let n = cx.count(cx.top() - 1);
    let size = (params.q as u128).checked_pow(n as u32).filter(|&s| s <= cap as u128);
    let size = size.ok_or_else(|| Error::TooLarge(format!("q^{n} spin configurations exceed {cap}")))? as usize;
    let mut f = Cochain::zero(cx.bx(), cx.top() - 1, params.q)?;
    let mut w = vec![0.0; size];
    for (idx, slot) in w.iter_mut().enumerate() {
        let mut x = idx;
        for v in f.values.iter_mut() {
            *v = (x % params.q as usize) as i64;
            x /= params.q as usize;
        }
        if in_state_set(cx, &params.bc, &f)? {
            *slot = (-params.beta * hamiltonian(cx, &params.bc, &f)? as f64).exp();
        }
    }
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

pub fn spin_index(f: &Cochain) -> usize {
    f.values.iter().rev().fold(0usize, |acc, &v| acc * f.q as usize + v as usize)
}

/// Resamples the spin on cell `c` from its conditional law. Boundary spins
/// are frozen under η; the wired state set is not reachable by single-spin moves.
pub fn heatbath_spin_step(cx: &Complex, params: &PlgtParams, f: &mut Cochain, c: usize, rng: &mut Rng) -> Result<()> {
    check_spins(cx, f)?;
    match &params.bc {
        GaugeBoundary::Wired => return Err(Error::Unsupported("single-spin moves do not preserve the wired state set".into())),
        GaugeBoundary::Eta(_) if cx.on_boundary(cx.top() - 1, c) => return Ok(()),
        _ => {}
    }
    let bc = params.bc.percolation_bc();
    let top = cx.top();
    let plaquettes: Vec<usize> = cx
        .cofaces(top - 1, c)
        .iter()
        .map(|&(s, _)| s)
        .filter(|&s| bc == BoundaryCondition::Closed || !cx.on_boundary(top, s))
        .collect();
    let weights: Vec<f64> = (0..params.q as i64)
        .map(|v| {
            f.values[c] = v;
            let sat = plaquettes.iter().filter(|&&s| coboundary_at(cx, f, s) == 0).count();
            (params.beta * sat as f64).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (v, w) in weights.iter().enumerate() {
        if u < *w || v + 1 == weights.len() {
            f.values[c] = v as i64;
            break;
        }
        u -= w;
    }
    Ok(())
}

pub fn heatbath_sweep(cx: &Complex, params: &PlgtParams, f: &mut Cochain, rng: &mut Rng) -> Result<()> {
    for c in 0..cx.count(cx.top() - 1) {
        heatbath_spin_step(cx, params, f, c, rng)?;
    }
    Ok(())
}

/// ∏_σ [(1-p) 1{σ∉P} + p 1{σ∈P, δf(σ)=0}] for f in the state set, 0 otherwise.
pub fn coupling_joint_weight(cx: &Complex, params: &PlgtParams, f: &Cochain, p: &PercolationConfig) -> Result<f64> {
    if !in_state_set(cx, &params.bc, f)? {
        return Ok(0.0);
    }
    p.validate(cx)?;
    let pr = params.p();
    Ok(cx
        .variable_cells(params.bc.percolation_bc())
        .into_iter()
        .map(|c| {
            if !p.is_occupied(c) {
                1.0 - pr
            } else if coboundary_at(cx, f, c) == 0 {
                pr
            } else {
                0.0
            }
        })
        .product())
}

/// The joint law κ on (coboundary class, plaquette mask), exhaustively.
pub struct CouplingLaw {
    /// Classes on the Hamiltonian's plaquettes, in visiting order.
    pub classes: Vec<Vec<i64>>,
    pub variables: Vec<usize>,
    /// joint[class][mask]
    pub joint: Vec<Vec<f64>>,
}

impl CouplingLaw {
    pub fn f_marginal(&self) -> Vec<f64> {
        self.joint.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn p_marginal(&self) -> Vec<f64> {
        let m = self.joint.first().map_or(0, |r| r.len());
        (0..m).map(|j| self.joint.iter().map(|row| row[j]).sum()).collect()
    }
}

pub fn coupling_exact(cx: &Complex, params: &PlgtParams) -> Result<CouplingLaw> {
    let law = GaugeClassLaw::new(cx, params, &[])?;
    let n = law.tracked.len();
    if n > crate::prcm::ENUMERATION_CAP || law.class_count().saturating_mul(1 << n) > CLASS_CAP {
        return Err(Error::TooLarge("coupling state space".into()));
    }
    let pr = params.p();
    let mut classes = Vec::new();
    let mut joint = Vec::new();
    law.for_each_class(|b| {
        let row: Vec<f64> = (0..1u64 << n)
            .map(|m| {
                (0..n)
                    .map(|j| {
                        if m & (1 << j) == 0 {
                            1.0 - pr
                        } else if b[j] == 0 {
                            pr
                        } else {
                            0.0
                        }
                    })
                    .product()
            })
            .collect();
        classes.push(b.to_vec());
        joint.push(row);
    });
    let z: f64 = joint.iter().flatten().sum();
    for row in joint.iter_mut() {
        for x in row.iter_mut() {
            *x /= z;
        }
    }
    Ok(CouplingLaw { classes, variables: law.tracked, joint })
}

/// E[W_γ | P]: the average of W_γ over Z^{i-1}(P; Z_q), taken factor by
/// factor over its cyclic decomposition. Boundary cells are adjoined to P
/// under wired boundary conditions.
pub fn conditional_wilson(cx: &Complex, p: &PercolationConfig, gamma: &Chain, q: u64) -> Result<Complex64> {
    let group = cocycle_group(cx, p, q)?;
    let mut out = Complex64::new(1.0, 0.0);
    for (g, order) in group.generators() {
        let f = Cochain::from_values(cx.bx(), cx.top() - 1, q, g.to_vec())?;
        let a = f.pair(&gamma.with_modulus(q))?;
        let avg: Complex64 = (0..order as i64).map(|c| root_of_unity(c * a, q)).sum::<Complex64>() / order as f64;
        out *= avg;
    }
    Ok(out)
}

/// (E_ν[W_γ], μ̃(V_γ)) computed independently, both exactly.
pub fn comparison_identity_check(cx: &Complex, params: &PlgtParams, gamma: &Chain) -> Result<(Complex64, f64)> {
    let i = cx.top();
    if i >= 2 {
        let sub = Complex::new(cx.bx(), i - 1)?;
        let skel = PercolationConfig::full(&sub, BoundaryCondition::Closed);
        if homology_order(&sub, &skel, i - 2, params.q)? != 1u32.into() {
            return Err(Error::Precondition("H_{i-2}(X; Z_q) is nontrivial".into()));
        }
    }
    let w = wilson_expectation_exact(cx, params, gamma)?;
    let prcm = params.prcm(cx)?;
    let mu = enumerate_measure(cx, &prcm)?;
    let mut v = 0.0;
    for (m, &pr) in mu.probabilities.iter().enumerate() {
        if pr > 0.0 {
            let conf = PercolationConfig::from_variable_mask(cx, prcm.bc, m as u64);
            if null_homology_test(cx, &conf, gamma, params.q)? {
                v += pr;
            }
        }
    }
    Ok((w, v))
}

/// A plaquette configuration in d = 3 whose dual is a single tube core
/// winding k times through the rectangle r.
pub struct AnomalyExample {
    pub complex: Complex,
    pub config: PercolationConfig,
    pub gamma: Chain,
    pub r: LatticeBox,
    /// Lower corners of the tube cubes in cyclic order.
    pub tube: Vec<[i64; 3]>,
}

const RING: [(i64, i64); 12] =
    [(-2, -2), (-1, -2), (0, -2), (1, -2), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-2, 1), (-2, 0), (-2, -1)];

fn tube_cells(k: i64) -> Vec<[i64; 3]> {
    let mut cells = Vec::new();
    let mut s = 0usize;
    for j in 0..k {
        for t in 0..12 {
            let (y, z) = RING[(s + t) % 12];
            cells.push([2 * j, y, z]);
        }
        let (y, z) = RING[(s + 11) % 12];
        cells.push([2 * j + 1, y, z]);
        s = (s + 11) % 12;
    }
    // back to the start outside r: down to the lane y = -3, z = -2, then along -x
    let [x, mut y, mut z] = *cells.last().expect("nonempty");
    while y > -3 {
        y -= 1;
        cells.push([x, y, z]);
    }
    while z != -2 {
        z += if z > -2 { -1 } else { 1 };
        cells.push([x, y, z]);
    }
    for xx in (-1..x).rev() {
        cells.push([xx, -3, -2]);
    }
    cells.push([-1, -2, -2]);
    cells
}

fn shared_face(a: &[i64; 3], b: &[i64; 3]) -> Result<CellId> {
    let diff: Vec<usize> = (0..3).filter(|&j| a[j] != b[j]).collect();
    if diff.len() != 1 || (a[diff[0]] - b[diff[0]]).abs() != 1 {
        return Err(Error::Geometry("tube cubes are not face-adjacent".into()));
    }
    let j = diff[0];
    let corner = if b[j] > a[j] { b } else { a };
    let dirs: Vec<usize> = (0..3).filter(|&x| x != j).collect();
    CellId::primal(corner, &dirs)
}

pub fn anomaly_example(k: i64) -> Result<AnomalyExample> {
    if !(2..=7).contains(&k) {
        return Err(invalid("the tube construction supports 2 ≤ k ≤ 7"));
    }
    let bx = LatticeBox::new(&[-1, -3, -2], &[2 * k, 2, 2])?;
    let complex = Complex::new(&bx, 2)?;
    let tube = tube_cells(k);
    let mut config = PercolationConfig::full(&complex, BoundaryCondition::Closed);
    for (a, b) in tube.iter().zip(tube.iter().cycle().skip(1)) {
        let gate = shared_face(a, b)?;
        let c = complex.cells(2).get(&gate).ok_or_else(|| Error::Geometry("tube leaves the box".into()))?;
        config.set(c, false);
    }
    let r = LatticeBox::new(&[0, 0, 0], &[2 * k - 1, 2, 0])?;
    let gamma = loop_boundary_chain(&r, 0)?;
    Ok(AnomalyExample { complex, config, gamma, r, tube })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::{dualize, linking_report, DualGraph};
    use crate::lattice::boundary_of_cell;
    use rand::SeedableRng;

    fn single_cube() -> Complex {
        Complex::new(&LatticeBox::cube(3, 1).unwrap(), 2).unwrap()
    }

    fn top_loop(cx: &Complex) -> Chain {
        let sigma = CellId::primal(&[0, 0, 1], &[0, 1]).unwrap();
        assert!(cx.cells(2).get(&sigma).is_some());
        boundary_of_cell(&sigma, 0).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let cx = single_cube();
        let mut f = Cochain::zero(cx.bx(), 1, 2).unwrap();
        assert_eq!(hamiltonian(&cx, &GaugeBoundary::Closed, &f).unwrap(), -6);
        f.values[3] = 1;
        assert_eq!(hamiltonian(&cx, &GaugeBoundary::Closed, &f).unwrap(), -6 + cx.cofaces(1, 3).len() as i64);
        let mut h = Cochain::zero(cx.bx(), 0, 3).unwrap();
        h.values = vec![0, 1, 2, 1, 0, 2, 1, 1];
        let g = h.coboundary().unwrap();
        assert_eq!(hamiltonian(&cx, &GaugeBoundary::Closed, &g).unwrap(), -6);
    }

    #[test]
    fn wilson_basics() {
        let cx = Complex::new(&LatticeBox::from_extents(&[3, 1, 1]).unwrap(), 2).unwrap();
        let a = boundary_of_cell(&CellId::primal(&[0, 0, 0], &[1, 2]).unwrap(), 0).unwrap();
        let b = boundary_of_cell(&CellId::primal(&[2, 0, 0], &[1, 2]).unwrap(), 0).unwrap();
        let zero = Cochain::zero(cx.bx(), 1, 5).unwrap();
        assert!((wilson_loop(&zero, &a).unwrap() - 1.0).norm() < 1e-15);
        let mut rng = Rng::seed_from_u64(1);
        let vals: Vec<i64> = (0..cx.count(1)).map(|_| rng.random_range(0..5)).collect();
        let f = Cochain::from_values(cx.bx(), 1, 5, vals).unwrap();
        let ab = a.plus(&b).unwrap();
        let lhs = wilson_loop(&f, &ab).unwrap();
        let rhs = wilson_loop(&f, &a).unwrap() * wilson_loop(&f, &b).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
        let h = Cochain::from_values(cx.bx(), 0, 5, (0..cx.count(0) as i64).collect()).unwrap();
        let dh = h.coboundary().unwrap();
        let shifted = Cochain::from_values(cx.bx(), 1, 5, f.values.iter().zip(&dh.values).map(|(x, y)| x + y).collect()).unwrap();
        assert!((wilson_loop(&shifted, &a).unwrap() - wilson_loop(&f, &a).unwrap()).norm() < 1e-12);
        let edge = Chain::from_terms(0, 1, [(CellId::primal(&[0, 0, 0], &[0]).unwrap(), 1)]).unwrap();
        assert!(matches!(wilson_loop(&f, &edge), Err(Error::NotACycle)));
    }

    #[test]
    fn gibbs_uniform_at_zero_beta_and_gauge_invariant() {
        let cx = single_cube();
        let par = PlgtParams::new(0.0, 2, GaugeBoundary::Closed).unwrap();
        let nu = gibbs_exact(&cx, &par, 1 << 20).unwrap();
        assert!(nu.iter().all(|&x| (x - 1.0 / 4096.0).abs() < 1e-15));
        let par = PlgtParams::new(0.8, 2, GaugeBoundary::Closed).unwrap();
        let nu = gibbs_exact(&cx, &par, 1 << 20).unwrap();
        let mut rng = Rng::seed_from_u64(2);
        for _ in 0..5 {
            let h = Cochain::from_values(cx.bx(), 0, 2, (0..8).map(|_| rng.random_range(0..2)).collect()).unwrap();
            let dh = h.coboundary().unwrap();
            for idx in 0..4096usize {
                let vals: Vec<i64> = (0..12).map(|c| ((idx >> c) & 1) as i64 + dh.values[c]).collect();
                let g = Cochain::from_values(cx.bx(), 1, 2, vals).unwrap();
                assert!((nu[idx] - nu[spin_index(&g)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn class_law_matches_full_enumeration() {
        let cx = single_cube();
        let par = PlgtParams::new(0.6, 3, GaugeBoundary::Closed).unwrap();
        let gamma = top_loop(&cx);
        let full = gibbs_exact(&cx, &par, 1 << 20).unwrap();
        let mut direct = Complex64::new(0.0, 0.0);
        let mut f = Cochain::zero(cx.bx(), 1, 3).unwrap();
        for (idx, &w) in full.iter().enumerate() {
            let mut x = idx;
            for v in f.values.iter_mut() {
                *v = (x % 3) as i64;
                x /= 3;
            }
            direct += wilson_loop(&f, &gamma).unwrap() * w;
        }
        let reduced = wilson_expectation_exact(&cx, &par, &gamma).unwrap();
        assert!((direct - reduced).norm() < 1e-12);
    }

    #[test]
    fn coupling_marginals_composite_q() {
        let cx = single_cube();
        let par = PlgtParams::new(0.7, 4, GaugeBoundary::Closed).unwrap();
        let kappa = coupling_exact(&cx, &par).unwrap();
        let law = GaugeClassLaw::new(&cx, &par, &[]).unwrap();
        let nu = law.probabilities(par.beta);
        for (a, b) in kappa.f_marginal().iter().zip(&nu) {
            assert!((a - b).abs() < 1e-12);
        }
        let mu = enumerate_measure(&cx, &par.prcm(&cx).unwrap()).unwrap();
        for (a, b) in kappa.p_marginal().iter().zip(&mu.probabilities) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn comparison_identity_single_cube() {
        let cx = single_cube();
        let gamma = top_loop(&cx);
        let par = PlgtParams::new(0.5, 3, GaugeBoundary::Closed).unwrap();
        let (w, v) = comparison_identity_check(&cx, &par, &gamma).unwrap();
        assert!(w.im.abs() < 1e-12);
        assert!((w.re - v).abs() < 1e-12);
        let cold = PlgtParams::new(40.0, 3, GaugeBoundary::Closed).unwrap();
        let (w, v) = comparison_identity_check(&cx, &cold, &gamma).unwrap();
        assert!((w.re - 1.0).abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn eta_and_wired_agree() {
        let bx = LatticeBox::from_extents(&[2, 2, 1]).unwrap();
        let cx = Complex::new(&bx, 2).unwrap();
        let sigma = CellId::primal(&[1, 0, 0], &[1, 2]).unwrap();
        let gamma = boundary_of_cell(&sigma, 0).unwrap();
        let q = 3;
        let wired = wilson_expectation_exact(&cx, &PlgtParams::new(0.4, q, GaugeBoundary::Wired).unwrap(), &gamma).unwrap();
        let mut rng = Rng::seed_from_u64(3);
        for _ in 0..4 {
            let h = Cochain::from_values(&bx, 0, q, (0..cx.count(0)).map(|_| rng.random_range(0..3)).collect()).unwrap();
            let eta = h.coboundary().unwrap();
            let e = wilson_expectation_exact(&cx, &PlgtParams::new(0.4, q, GaugeBoundary::Eta(eta)).unwrap(), &gamma).unwrap();
            assert!((e - wired).norm() < 1e-12);
        }
        let (w, v) = comparison_identity_check(&cx, &PlgtParams::new(0.4, q, GaugeBoundary::Wired).unwrap(), &gamma).unwrap();
        assert!((w.re - v).abs() < 1e-12 && (w - wired).norm() < 1e-12);
        // four interior plaquettes around the central edge: b = (t, ±t, ±t, ±t)
        let expect = ((4.0f64 * 0.4).exp() - 1.0) / ((4.0f64 * 0.4).exp() + 2.0);
        assert!((w.re - expect).abs() < 1e-12);
    }

    #[test]
    fn heat_bath_matches_exact_energy() {
        let cx = single_cube();
        let par = PlgtParams::new(0.9, 2, GaugeBoundary::Closed).unwrap();
        let law = GaugeClassLaw::new(&cx, &par, &[]).unwrap();
        let probs = law.probabilities(par.beta);
        let mut exact = 0.0;
        let mut idx = 0;
        law.for_each_class(|b| {
            exact += probs[idx] * law.satisfied(b) as f64;
            idx += 1;
        });
        let mut rng = Rng::seed_from_u64(4);
        let mut f = Cochain::zero(cx.bx(), 1, 2).unwrap();
        let (batches, per) = (50, 400);
        let mut means = Vec::new();
        for _ in 0..batches {
            let mut s = 0.0;
            for _ in 0..per {
                heatbath_sweep(&cx, &par, &mut f, &mut rng).unwrap();
                s += -hamiltonian(&cx, &par.bc, &f).unwrap() as f64;
            }
            means.push(s / per as f64);
        }
        let m = means.iter().sum::<f64>() / batches as f64;
        let se = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches * (batches - 1)) as f64).sqrt();
        assert!((m - exact).abs() < 3.0 * se + 1e-9, "{m} vs {exact} ± {se}");
    }

    #[test]
    fn anomaly_tube_is_a_closed_chain() {
        for k in 2..=4 {
            let t = tube_cells(k);
            let mut seen = std::collections::HashSet::new();
            assert!(t.iter().all(|c| seen.insert(*c)));
            for (a, b) in t.iter().zip(t.iter().cycle().skip(1)) {
                assert!(shared_face(a, b).is_ok());
            }
        }
    }

    #[test]
    fn anomaly_values() {
        let ex = anomaly_example(2).unwrap();
        let cx = &ex.complex;
        assert!(!null_homology_test(cx, &ex.config, &ex.gamma, 0).unwrap());
        assert!(null_homology_test(cx, &ex.config, &ex.gamma, 2).unwrap());
        assert!(!null_homology_test(cx, &ex.config, &ex.gamma, 3).unwrap());
        let g = DualGraph::new(cx).unwrap();
        let rep = linking_report(&g, cx, &dualize(cx, &ex.config).unwrap(), &ex.r).unwrap();
        assert_eq!(rep.linking_numbers.len(), 1);
        assert_eq!(rep.linking_numbers[0].abs(), 2);
        for (q, expect) in [(2u64, 1.0), (3, 0.0)] {
            let w = conditional_wilson(cx, &ex.config, &ex.gamma, q).unwrap();
            assert!((w - expect).norm() < 1e-12, "q={q}: {w}");
        }
        let ex3 = anomaly_example(3).unwrap();
        assert!(null_homology_test(&ex3.complex, &ex3.config, &ex3.gamma, 3).unwrap());
        assert!(!null_homology_test(&ex3.complex, &ex3.config, &ex3.gamma, 2).unwrap());
    }
}
