//! Cubical complex of Z^d and its dual lattice (Z + 1/2)^d.
//!
//! Coordinates are doubled so that dual cells, whose corners sit at
//! half-integers, have exact integer anchors. A cell is primal when every
//! anchor coordinate is even and dual when every coordinate is odd.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use fixedbitset::FixedBitSet;
use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MAX_DIM: usize = 16;

/// An oriented unit cell, stored with its positive orientation.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellId {
    anchor: Vec<i64>,
    dirs: u32,
}

impl CellId {
    /// `anchor` is the doubled lower corner; `directions` the extended axes.
    pub fn new(anchor: Vec<i64>, directions: &[usize]) -> Result<Self> {
        let d = anchor.len();
        if d == 0 || d > MAX_DIM {
            return Err(invalid(format!("ambient dimension {d} out of range")));
        }
        let parity = anchor[0].rem_euclid(2);
        if anchor.iter().any(|a| a.rem_euclid(2) != parity) {
            return Err(invalid("anchor mixes primal and dual parities"));
        }
        let mut dirs = 0u32;
        for &k in directions {
            if k >= d || dirs & (1 << k) != 0 {
                return Err(invalid(format!("bad direction {k}")));
            }
            dirs |= 1 << k;
        }
        Ok(CellId { anchor, dirs })
    }

    /// Primal cell with integer lower corner `corner`.
    pub fn primal(corner: &[i64], directions: &[usize]) -> Result<Self> {
        Self::new(corner.iter().map(|c| 2 * c).collect(), directions)
    }

    pub(crate) fn from_raw(anchor: Vec<i64>, dirs: u32) -> Self {
        CellId { anchor, dirs }
    }

    pub fn anchor(&self) -> &[i64] {
        &self.anchor
    }

    pub fn dir_mask(&self) -> u32 {
        self.dirs
    }

    pub fn directions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.anchor.len()).filter(move |&j| self.dirs & (1 << j) != 0)
    }

    pub fn has_direction(&self, axis: usize) -> bool {
        self.dirs & (1 << axis) != 0
    }

    pub fn dim(&self) -> usize {
        self.dirs.count_ones() as usize
    }

    pub fn ambient_dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn is_primal(&self) -> bool {
        self.anchor[0].rem_euclid(2) == 0
    }

    /// Doubled coordinates of the center point.
    pub fn center2(&self) -> Vec<i64> {
        self.anchor
            .iter()
            .enumerate()
            .map(|(j, a)| if self.has_direction(j) { a + 1 } else { *a })
            .collect()
    }

    /// Doubled coordinate range covered along `axis`.
    pub fn span2(&self, axis: usize) -> (i64, i64) {
        let a = self.anchor[axis];
        if self.has_direction(axis) {
            (a, a + 2)
        } else {
            (a, a)
        }
    }

    /// The face obtained by collapsing `axis` to its lower (`upper=false`) or
    /// upper end.
    pub fn face(&self, axis: usize, upper: bool) -> CellId {
        debug_assert!(self.has_direction(axis));
        let mut anchor = self.anchor.clone();
        if upper {
            anchor[axis] += 2;
        }
        CellId { anchor, dirs: self.dirs & !(1 << axis) }
    }

    pub fn translated2(&self, shift2: &[i64]) -> CellId {
        CellId {
            anchor: self.anchor.iter().zip(shift2).map(|(a, s)| a + s).collect(),
            dirs: self.dirs,
        }
    }
}

impl Ord for CellId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.anchor.cmp(&other.anchor).then_with(|| {
            let mut a = self.directions();
            let mut b = other.directions();
            loop {
                match (a.next(), b.next()) {
                    (None, None) => return Ordering::Equal,
                    (None, Some(_)) => return Ordering::Less,
                    (Some(_), None) => return Ordering::Greater,
                    (Some(x), Some(y)) if x != y => return x.cmp(&y),
                    _ => {}
                }
            }
        })
    }
}

impl PartialOrd for CellId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn fmt_half(v2: i64) -> String {
    if v2.rem_euclid(2) == 0 {
        format!("{}", v2 / 2)
    } else {
        format!("{}", v2 as f64 / 2.0)
    }
}

impl fmt::Debug for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = (0..self.anchor.len())
            .map(|j| {
                let a = self.anchor[j];
                if self.has_direction(j) {
                    format!("[{},{}]", fmt_half(a), fmt_half(a + 2))
                } else {
                    format!("{{{}}}", fmt_half(a))
                }
            })
            .collect();
        write!(f, "{}", parts.join("x"))
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The cell of the other lattice meeting `sigma` at its center.
pub fn dualize_cell(sigma: &CellId) -> CellId {
    let d = sigma.ambient_dim();
    let anchor = (0..d)
        .map(|j| {
            let a = sigma.anchor[j];
            if sigma.has_direction(j) {
                a + 1
            } else {
                a - 1
            }
        })
        .collect();
    let full = if d == 32 { u32::MAX } else { (1u32 << d) - 1 };
    CellId { anchor, dirs: full & !sigma.dirs }
}

/// Axis-aligned box. Bounds are kept doubled so that the half-shifted
/// regions r^{±1/2} are boxes too.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    lo2: Vec<i64>,
    hi2: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lows: &[i64], highs: &[i64]) -> Result<Self> {
        Self::from_doubled(
            lows.iter().map(|x| 2 * x).collect(),
            highs.iter().map(|x| 2 * x).collect(),
        )
    }

    pub fn from_doubled(lo2: Vec<i64>, hi2: Vec<i64>) -> Result<Self> {
        if lo2.len() != hi2.len() || lo2.is_empty() || lo2.len() > MAX_DIM {
            return Err(invalid("box bounds have inconsistent dimension"));
        }
        if lo2.iter().zip(&hi2).any(|(l, h)| l > h) {
            return Err(invalid("box lows exceed highs"));
        }
        Ok(LatticeBox { lo2, hi2 })
    }

    /// `[0, e_1] × … × [0, e_d]`.
    pub fn from_extents(extents: &[i64]) -> Result<Self> {
        Self::new(&vec![0; extents.len()], extents)
    }

    /// `[0, n]^d`.
    pub fn cube(d: usize, n: i64) -> Result<Self> {
        Self::from_extents(&vec![n; d])
    }

    pub fn ambient_dim(&self) -> usize {
        self.lo2.len()
    }

    pub fn lo2(&self) -> &[i64] {
        &self.lo2
    }

    pub fn hi2(&self) -> &[i64] {
        &self.hi2
    }

    pub fn is_integral(&self) -> bool {
        self.lo2.iter().chain(&self.hi2).all(|x| x.rem_euclid(2) == 0)
    }

    /// Integer lower corner (floor for half-integral boxes).
    pub fn lows(&self) -> Vec<i64> {
        self.lo2.iter().map(|x| x.div_euclid(2)).collect()
    }

    pub fn highs(&self) -> Vec<i64> {
        self.hi2.iter().map(|x| x.div_euclid(2)).collect()
    }

    /// Per-axis extents M_j.
    pub fn dims(&self) -> Vec<i64> {
        self.lo2.iter().zip(&self.hi2).map(|(l, h)| (h - l) / 2).collect()
    }

    pub fn nondegenerate_axes(&self) -> Vec<usize> {
        (0..self.ambient_dim()).filter(|&j| self.hi2[j] > self.lo2[j]).collect()
    }

    pub fn is_full_dimensional(&self) -> bool {
        self.nondegenerate_axes().len() == self.ambient_dim()
    }

    /// r^L: grown by `l` on every side.
    pub fn expand(&self, l: i64) -> Result<Self> {
        Self::from_doubled(
            self.lo2.iter().map(|x| x - 2 * l).collect(),
            self.hi2.iter().map(|x| x + 2 * l).collect(),
        )
    }

    /// r^{+1/2} for `outward`, r^{-1/2} otherwise.
    pub fn half_shift(&self, outward: bool) -> Result<Self> {
        let s = if outward { 1 } else { -1 };
        Self::from_doubled(
            self.lo2.iter().map(|x| x - s).collect(),
            self.hi2.iter().map(|x| x + s).collect(),
        )
    }

    pub fn contains_point2(&self, p2: &[i64]) -> bool {
        p2.iter().zip(self.lo2.iter().zip(&self.hi2)).all(|(x, (l, h))| l <= x && x <= h)
    }

    pub fn contains_cell(&self, c: &CellId) -> bool {
        c.ambient_dim() == self.ambient_dim()
            && (0..self.ambient_dim()).all(|j| {
                let (a, b) = c.span2(j);
                self.lo2[j] <= a && b <= self.hi2[j]
            })
    }

    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        (0..self.ambient_dim()).all(|j| self.lo2[j] <= other.lo2[j] && other.hi2[j] <= self.hi2[j])
    }

    /// Whether `c` lies in the topological boundary of this (full-dimensional) box.
    pub fn cell_on_boundary(&self, c: &CellId) -> bool {
        (0..self.ambient_dim())
            .any(|j| !c.has_direction(j) && (c.anchor[j] == self.lo2[j] || c.anchor[j] == self.hi2[j]))
    }

    /// Number of top-dimensional cells (the area of a (d-1)-box).
    pub fn volume(&self) -> u64 {
        self.dims().iter().filter(|&&m| m > 0).map(|&m| m as u64).product()
    }
}

/// Cells of dimension `k` contained in `b`, in canonical order
/// (lexicographic by anchor, then by direction list). `dual` selects the
/// half-integer lattice.
pub fn enumerate_cells(b: &LatticeBox, k: usize, dual: bool) -> Result<Vec<CellId>> {
    let d = b.ambient_dim();
    if k > d {
        return Err(invalid(format!("cell dimension {k} exceeds ambient dimension {d}")));
    }
    let parity = i64::from(dual);
    let axes: Vec<Vec<i64>> = (0..d)
        .map(|j| {
            let mut start = b.lo2[j];
            if start.rem_euclid(2) != parity {
                start += 1;
            }
            (start..=b.hi2[j]).step_by(2).collect()
        })
        .collect();
    let mut out = Vec::new();
    if axes.iter().any(|a| a.is_empty()) {
        return Ok(out);
    }
    for anchor in axes.iter().multi_cartesian_product() {
        let anchor: Vec<i64> = anchor.into_iter().copied().collect();
        let avail: Vec<usize> = (0..d).filter(|&j| anchor[j] + 2 <= b.hi2[j]).collect();
        for combo in avail.into_iter().combinations(k) {
            let dirs = combo.iter().fold(0u32, |m, &j| m | (1 << j));
            out.push(CellId::from_raw(anchor.clone(), dirs));
        }
    }
    Ok(out)
}

/// Sparse chain with coefficients in Z_q (`q = 0` means Z).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    q: u64,
    dim: usize,
    coeffs: BTreeMap<CellId, i64>,
}

impl Chain {
    pub fn zero(q: u64, dim: usize) -> Self {
        Chain { q, dim, coeffs: BTreeMap::new() }
    }

    pub fn from_terms(q: u64, dim: usize, terms: impl IntoIterator<Item = (CellId, i64)>) -> Result<Self> {
        let mut c = Chain::zero(q, dim);
        for (cell, v) in terms {
            c.add(cell, v)?;
        }
        Ok(c)
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn reduce(&self, v: i64) -> i64 {
        if self.q == 0 {
            v
        } else {
            v.rem_euclid(self.q as i64)
        }
    }

    pub fn add(&mut self, cell: CellId, v: i64) -> Result<()> {
        if cell.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "adding a {}-cell to a {}-chain",
                cell.dim(),
                self.dim
            )));
        }
        let cur = self.coeffs.get(&cell).copied().unwrap_or(0);
        let new = self.reduce(cur + v);
        if new == 0 {
            self.coeffs.remove(&cell);
        } else {
            self.coeffs.insert(cell, new);
        }
        Ok(())
    }

    pub fn coefficient(&self, cell: &CellId) -> i64 {
        self.coeffs.get(cell).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellId, i64)> {
        self.coeffs.iter().map(|(c, v)| (c, *v))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scaled(&self, s: i64) -> Chain {
        let mut out = Chain::zero(self.q, self.dim);
        for (c, v) in self.iter() {
            out.add(c.clone(), v * s).expect("same dimension");
        }
        out
    }

    pub fn plus(&self, other: &Chain) -> Result<Chain> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch("chain sum".into()));
        }
        let mut out = self.clone();
        for (c, v) in other.iter() {
            out.add(c.clone(), v)?;
        }
        Ok(out)
    }

    /// The same integer chain read with a different modulus.
    pub fn with_modulus(&self, q: u64) -> Chain {
        let mut out = Chain::zero(q, self.dim);
        for (c, v) in self.iter() {
            out.add(c.clone(), v).expect("same dimension");
        }
        out
    }

    /// Boundary chain; for 0-chains see [`Chain::augmentation`].
    pub fn boundary(&self) -> Result<Chain> {
        if self.dim == 0 {
            return Err(invalid("boundary of a 0-chain; use augmentation"));
        }
        let mut out = Chain::zero(self.q, self.dim - 1);
        for (c, v) in self.iter() {
            for (f, s) in cell_faces(c) {
                out.add(f, s * v)?;
            }
        }
        Ok(out)
    }

    /// ε: sum of the coefficients of a 0-chain.
    pub fn augmentation(&self) -> Result<i64> {
        if self.dim != 0 {
            return Err(invalid("augmentation is defined on 0-chains"));
        }
        Ok(self.reduce(self.coeffs.values().sum()))
    }

    pub fn support(&self) -> impl Iterator<Item = &CellId> {
        self.coeffs.keys()
    }
}

fn cell_faces(c: &CellId) -> Vec<(CellId, i64)> {
    let mut out = Vec::with_capacity(2 * c.dim());
    for (l, k) in c.directions().enumerate() {
        let s = if l % 2 == 0 { 1 } else { -1 };
        out.push((c.face(k, true), s));
        out.push((c.face(k, false), -s));
    }
    out
}

/// ∂σ as a chain over Z_q.
pub fn boundary_of_cell(sigma: &CellId, q: u64) -> Result<Chain> {
    if sigma.dim() == 0 {
        return Err(invalid("boundary of a vertex; use augmentation"));
    }
    Chain::from_terms(q, sigma.dim() - 1, cell_faces(sigma))
}

/// ρ_r: the sum of the positively oriented top cells of the box `r`.
pub fn box_chain(r: &LatticeBox, q: u64) -> Result<Chain> {
    let axes = r.nondegenerate_axes();
    let cells = enumerate_cells(r, axes.len(), false)?;
    let mut c = Chain::zero(q, axes.len());
    for cell in cells {
        if cell.dir_mask() == axes.iter().fold(0u32, |m, &j| m | (1 << j)) {
            c.add(cell, 1)?;
        }
    }
    Ok(c)
}

/// γ = ∂ρ_r for a lower-dimensional box `r`.
pub fn loop_boundary_chain(r: &LatticeBox, q: u64) -> Result<Chain> {
    let m = r.nondegenerate_axes().len();
    if m == r.ambient_dim() {
        return Err(Error::Geometry("loop box must be lower-dimensional".into()));
    }
    if m == 0 {
        return Err(Error::Geometry("loop box is a point".into()));
    }
    box_chain(r, q)?.boundary()
}

/// Index of every cell of a box of one dimension, by canonical order.
#[derive(Clone, Debug)]
pub struct CellIndex {
    cells: Vec<CellId>,
    index: HashMap<CellId, usize>,
}

impl CellIndex {
    pub fn new(b: &LatticeBox, k: usize, dual: bool) -> Result<Self> {
        let cells = enumerate_cells(b, k, dual)?;
        let index = cells.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        Ok(CellIndex { cells, index })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, c: &CellId) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn cell(&self, i: usize) -> &CellId {
        &self.cells[i]
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }
}

/// A Z_q-valued function on all k-cells of a box, in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cochain {
    pub bx: LatticeBox,
    pub dim: usize,
    pub q: u64,
    pub values: Vec<i64>,
}

impl Cochain {
    pub fn zero(bx: &LatticeBox, dim: usize, q: u64) -> Result<Self> {
        let n = enumerate_cells(bx, dim, false)?.len();
        Ok(Cochain { bx: bx.clone(), dim, q, values: vec![0; n] })
    }

    pub fn from_values(bx: &LatticeBox, dim: usize, q: u64, values: Vec<i64>) -> Result<Self> {
        let n = enumerate_cells(bx, dim, false)?.len();
        if values.len() != n {
            return Err(Error::DimensionMismatch(format!("{} values for {} cells", values.len(), n)));
        }
        let values = values.into_iter().map(|v| reduce_mod(v, q)).collect();
        Ok(Cochain { bx: bx.clone(), dim, q, values })
    }

    /// ⟨f, c⟩.
    pub fn pair(&self, c: &Chain) -> Result<i64> {
        if c.dim() != self.dim {
            return Err(Error::DimensionMismatch("cochain/chain pairing".into()));
        }
        let idx = CellIndex::new(&self.bx, self.dim, false)?;
        let mut s = 0i64;
        for (cell, v) in c.iter() {
            let i = idx.get(cell).ok_or_else(|| Error::Geometry(format!("{cell} outside the box")))?;
            s = reduce_mod(s + v * self.values[i], self.q);
        }
        Ok(s)
    }

    /// δf(α) = f(∂α) on every (k+1)-cell of the box.
    pub fn coboundary(&self) -> Result<Cochain> {
        let idx = CellIndex::new(&self.bx, self.dim, false)?;
        let up = enumerate_cells(&self.bx, self.dim + 1, false)?;
        let values = up
            .iter()
            .map(|a| {
                cell_faces(a)
                    .iter()
                    .map(|(f, s)| s * self.values[idx.get(f).expect("face in box")])
                    .sum::<i64>()
            })
            .map(|v| reduce_mod(v, self.q))
            .collect();
        Ok(Cochain { bx: self.bx.clone(), dim: self.dim + 1, q: self.q, values })
    }
}

pub(crate) fn reduce_mod(v: i64, q: u64) -> i64 {
    if q == 0 {
        v
    } else {
        v.rem_euclid(q as i64)
    }
}

/// Boundary condition of a box complex.
///
/// `Free` and `Wired` take the interior top cells as state variables, with
/// `Wired` adjoining every boundary top cell to the homology computation.
/// `Closed` takes every top cell of the closed box as a state variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Free,
    Wired,
    Closed,
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "free" => Ok(BoundaryCondition::Free),
            "wired" => Ok(BoundaryCondition::Wired),
            "closed" => Ok(BoundaryCondition::Closed),
            _ => Err(invalid(format!("unknown boundary condition '{s}'"))),
        }
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryCondition::Free => "free",
            BoundaryCondition::Wired => "wired",
            BoundaryCondition::Closed => "closed",
        };
        f.write_str(s)
    }
}

/// The closed box with all cells up to dimension `top`, indexed, with
/// signed face incidences.
#[derive(Debug)]
pub struct Complex {
    bx: LatticeBox,
    top: usize,
    cells: Vec<CellIndex>,
    faces: Vec<Vec<Vec<(usize, i64)>>>,
    cofaces: Vec<Vec<Vec<(usize, i64)>>>,
    on_boundary: Vec<Vec<bool>>,
}

impl Complex {
    pub fn new(bx: &LatticeBox, top: usize) -> Result<Self> {
        if !bx.is_integral() || !bx.is_full_dimensional() {
            return Err(Error::Geometry("complex box must be integral and full-dimensional".into()));
        }
        if top > bx.ambient_dim() {
            return Err(invalid("top dimension exceeds ambient dimension"));
        }
        let cells: Vec<CellIndex> = (0..=top).map(|k| CellIndex::new(bx, k, false)).collect::<Result<_>>()?;
        let mut faces: Vec<Vec<Vec<(usize, i64)>>> = vec![Vec::new()];
        for k in 1..=top {
            let fk = cells[k]
                .cells()
                .iter()
                .map(|c| cell_faces(c).into_iter().map(|(f, s)| (cells[k - 1].get(&f).expect("face in box"), s)).collect())
                .collect();
            faces.push(fk);
        }
        let mut cofaces: Vec<Vec<Vec<(usize, i64)>>> = (0..=top).map(|k| vec![Vec::new(); cells[k].len()]).collect();
        for k in 1..=top {
            for (c, fs) in faces[k].iter().enumerate() {
                for &(f, s) in fs {
                    cofaces[k - 1][f].push((c, s));
                }
            }
        }
        let on_boundary = cells.iter().map(|ci| ci.cells().iter().map(|c| bx.cell_on_boundary(c)).collect()).collect();
        Ok(Complex { bx: bx.clone(), top, cells, faces, cofaces, on_boundary })
    }

    pub fn bx(&self) -> &LatticeBox {
        &self.bx
    }

    pub fn top(&self) -> usize {
        self.top
    }

    pub fn ambient_dim(&self) -> usize {
        self.bx.ambient_dim()
    }

    pub fn cells(&self, k: usize) -> &CellIndex {
        &self.cells[k]
    }

    pub fn count(&self, k: usize) -> usize {
        self.cells[k].len()
    }

    /// Signed faces of the `c`-th k-cell as (index of (k-1)-cell, sign).
    pub fn faces(&self, k: usize, c: usize) -> &[(usize, i64)] {
        &self.faces[k][c]
    }

    /// Signed cofaces of the `c`-th k-cell among the (k+1)-cells.
    pub fn cofaces(&self, k: usize, c: usize) -> &[(usize, i64)] {
        &self.cofaces[k][c]
    }

    pub fn on_boundary(&self, k: usize, c: usize) -> bool {
        self.on_boundary[k][c]
    }

    /// Top cells that are state variables under `bc`.
    pub fn variable_cells(&self, bc: BoundaryCondition) -> Vec<usize> {
        (0..self.count(self.top))
            .filter(|&c| bc == BoundaryCondition::Closed || !self.on_boundary[self.top][c])
            .collect()
    }

    /// Top cells adjoined to every configuration under `bc`.
    pub fn forced_cells(&self, bc: BoundaryCondition) -> Vec<usize> {
        match bc {
            BoundaryCondition::Wired => (0..self.count(self.top)).filter(|&c| self.on_boundary[self.top][c]).collect(),
            _ => Vec::new(),
        }
    }

    /// Index vector of a chain of k-cells of this complex.
    pub fn chain_vector(&self, c: &Chain) -> Result<Vec<i64>> {
        let k = c.dim();
        if k > self.top {
            return Err(Error::DimensionMismatch("chain dimension above the complex".into()));
        }
        let mut v = vec![0; self.count(k)];
        for (cell, x) in c.iter() {
            let i = self.cells[k].get(cell).ok_or_else(|| Error::Geometry(format!("{cell} outside the box")))?;
            v[i] = x;
        }
        Ok(v)
    }

    pub fn chain_from_vector(&self, k: usize, q: u64, v: &[i64]) -> Chain {
        let mut c = Chain::zero(q, k);
        for (i, &x) in v.iter().enumerate() {
            if x != 0 {
                c.add(self.cells[k].cell(i).clone(), x).expect("dimension");
            }
        }
        c
    }
}

/// An i-dimensional percolation subcomplex: the full (i-1)-skeleton of the
/// box plus the occupied i-cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PercolationConfig {
    pub bx: LatticeBox,
    pub dim: usize,
    pub bc: BoundaryCondition,
    occupied: FixedBitSet,
}

impl PercolationConfig {
    pub fn empty(cx: &Complex, bc: BoundaryCondition) -> Self {
        PercolationConfig {
            bx: cx.bx().clone(),
            dim: cx.top(),
            bc,
            occupied: FixedBitSet::with_capacity(cx.count(cx.top())),
        }
    }

    /// Every state variable occupied.
    pub fn full(cx: &Complex, bc: BoundaryCondition) -> Self {
        let mut p = Self::empty(cx, bc);
        for c in cx.variable_cells(bc) {
            p.occupied.insert(c);
        }
        p
    }

    /// Bit `j` of `mask` sets the `j`-th variable cell.
    pub fn from_variable_mask(cx: &Complex, bc: BoundaryCondition, mask: u64) -> Self {
        let mut p = Self::empty(cx, bc);
        for (j, c) in cx.variable_cells(bc).into_iter().enumerate() {
            if j < 64 && mask & (1 << j) != 0 {
                p.occupied.insert(c);
            }
        }
        p
    }

    pub fn variable_mask(&self, cx: &Complex) -> u64 {
        cx.variable_cells(self.bc)
            .into_iter()
            .enumerate()
            .filter(|&(j, c)| j < 64 && self.occupied.contains(c))
            .fold(0u64, |m, (j, _)| m | (1 << j))
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_clear()
    }

    pub fn is_occupied(&self, c: usize) -> bool {
        self.occupied.contains(c)
    }

    pub fn set(&mut self, c: usize, occupied: bool) {
        self.occupied.set(c, occupied);
    }

    pub fn count(&self) -> usize {
        self.occupied.count_ones(..)
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.occupied.ones()
    }

    pub fn bits(&self) -> &FixedBitSet {
        &self.occupied
    }

    /// Occupied cells together with the cells adjoined by the boundary condition.
    pub fn effective_cells(&self, cx: &Complex) -> Vec<usize> {
        let mut v: Vec<usize> = self.occupied.ones().collect();
        v.extend(cx.forced_cells(self.bc));
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn is_effectively_occupied(&self, cx: &Complex, c: usize) -> bool {
        self.occupied.contains(c) || (self.bc == BoundaryCondition::Wired && cx.on_boundary(cx.top(), c))
    }

    pub fn validate(&self, cx: &Complex) -> Result<()> {
        if cx.bx() != &self.bx || cx.top() != self.dim || self.len() != cx.count(cx.top()) {
            return Err(Error::Geometry("configuration does not match complex".into()));
        }
        if self.bc != BoundaryCondition::Closed && self.occupied.ones().any(|c| cx.on_boundary(self.dim, c)) {
            return Err(Error::Geometry("boundary cell occupied outside closed boundary condition".into()));
        }
        Ok(())
    }

    /// Bitset as lowercase hex, bit `i` at byte `i / 8`, position `i % 8`.
    pub fn to_hex(&self) -> String {
        bits_to_hex(&self.occupied)
    }

    pub fn from_hex(cx: &Complex, bc: BoundaryCondition, s: &str) -> Result<Self> {
        let mut p = Self::empty(cx, bc);
        p.occupied = hex_to_bits(s, cx.count(cx.top()))?;
        p.validate(cx)?;
        Ok(p)
    }
}

pub fn bits_to_hex(bits: &FixedBitSet) -> String {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for i in bits.ones() {
        bytes[i / 8] |= 1 << (i % 8);
    }
    hex::encode(bytes)
}

pub fn hex_to_bits(s: &str, len: usize) -> Result<FixedBitSet> {
    let bytes = hex::decode(s).map_err(|e| invalid(format!("bad hex bitset: {e}")))?;
    if bytes.len() != len.div_ceil(8) {
        return Err(invalid(format!("bitset has {} bytes, expected {}", bytes.len(), len.div_ceil(8))));
    }
    let mut bits = FixedBitSet::with_capacity(len);
    for (i, b) in bytes.iter().enumerate() {
        for j in 0..8 {
            if b & (1 << j) != 0 {
                let k = 8 * i + j;
                if k >= len {
                    return Err(invalid("bitset has bits past its length"));
                }
                bits.insert(k);
            }
        }
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(corner: &[i64], dirs: &[usize]) -> CellId {
        CellId::primal(corner, dirs).unwrap()
    }

    #[test]
    fn counts_match_small_boxes() {
        let sq = LatticeBox::cube(2, 1).unwrap();
        assert_eq!(enumerate_cells(&sq, 1, false).unwrap().len(), 4);
        let cube = LatticeBox::cube(3, 1).unwrap();
        assert_eq!(enumerate_cells(&cube, 2, false).unwrap().len(), 6);
        let two = LatticeBox::from_extents(&[2, 1]).unwrap();
        assert_eq!(enumerate_cells(&two, 2, false).unwrap().len(), 2);
        assert!(enumerate_cells(&two, 3, false).is_err());
    }

    #[test]
    fn enumeration_is_sorted_and_unique() {
        let b = LatticeBox::from_extents(&[2, 1, 3]).unwrap();
        for k in 0..=3 {
            let cs = enumerate_cells(&b, k, false).unwrap();
            assert!(cs.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn square_boundary_is_counterclockwise() {
        let s = cell(&[0, 0], &[0, 1]);
        let b = boundary_of_cell(&s, 0).unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b.coefficient(&cell(&[0, 0], &[0])), 1);
        assert_eq!(b.coefficient(&cell(&[1, 0], &[1])), 1);
        assert_eq!(b.coefficient(&cell(&[0, 1], &[0])), -1);
        assert_eq!(b.coefficient(&cell(&[0, 0], &[1])), -1);
    }

    #[test]
    fn xz_face_signs() {
        // directions (x, z): +x-face, -x-face with sign +; z-faces with sign -.
        let s = cell(&[0, 0, 0], &[0, 2]);
        let b = boundary_of_cell(&s, 0).unwrap();
        assert_eq!(b.coefficient(&cell(&[1, 0, 0], &[2])), 1);
        assert_eq!(b.coefficient(&cell(&[0, 0, 0], &[2])), -1);
        assert_eq!(b.coefficient(&cell(&[0, 0, 1], &[0])), -1);
        assert_eq!(b.coefficient(&cell(&[0, 0, 0], &[0])), 1);
    }

    #[test]
    fn boundary_mod_q_reduces() {
        let s = cell(&[0, 0], &[0, 1]);
        let b = boundary_of_cell(&s, 2).unwrap();
        assert!(b.iter().all(|(_, v)| v == 1));
    }

    #[test]
    fn augmentation_sums_coefficients() {
        let c = Chain::from_terms(0, 0, [(cell(&[0, 0], &[]), 3), (cell(&[1, 0], &[]), -1)]).unwrap();
        assert_eq!(c.augmentation().unwrap(), 2);
        let e = boundary_of_cell(&cell(&[0, 0], &[0]), 0).unwrap();
        assert_eq!(e.augmentation().unwrap(), 0);
    }

    #[test]
    fn dual_of_face_is_vertical_edge() {
        let f = cell(&[0, 0, 0], &[0, 1]);
        let e = dualize_cell(&f);
        assert!(!e.is_primal());
        assert_eq!(e.dim(), 1);
        assert_eq!(e.anchor(), &[1, 1, -1]);
        assert!(e.has_direction(2));
        assert_eq!(e.center2(), f.center2());
        assert_eq!(dualize_cell(&e), f);
    }

    #[test]
    fn dual_counts_pair_up() {
        let r = LatticeBox::from_extents(&[2, 3, 2]).unwrap();
        let outer = r.half_shift(true).unwrap();
        let inner = r.half_shift(false).unwrap();
        for i in 0..=3 {
            let primal = enumerate_cells(&r, i, false).unwrap();
            let outer_interior = enumerate_cells(&outer, 3 - i, true).unwrap();
            let outer_interior: Vec<_> = outer_interior.into_iter().filter(|c| !outer.cell_on_boundary(c)).collect();
            assert_eq!(primal.len(), outer_interior.len());
            assert!(primal.iter().all(|c| outer_interior.binary_search(&dualize_cell(c)).is_ok()));
            let interior = primal.iter().filter(|c| !r.cell_on_boundary(c)).count();
            assert_eq!(interior, enumerate_cells(&inner, 3 - i, true).unwrap().len());
        }
    }

    #[test]
    fn rectangle_loop() {
        let r = LatticeBox::new(&[0, 0, 0], &[2, 2, 0]).unwrap();
        let g = loop_boundary_chain(&r, 0).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.boundary().unwrap().is_empty());
        assert_eq!(r.volume(), 4);
        let full = LatticeBox::cube(3, 1).unwrap();
        assert!(loop_boundary_chain(&full, 0).is_err());
    }

    #[test]
    fn cochain_pairing_and_coboundary() {
        let b = LatticeBox::cube(2, 1).unwrap();
        let f = Cochain::from_values(&b, 1, 3, vec![1, 2, 0, 1]).unwrap();
        let df = f.coboundary().unwrap();
        let sq = Chain::from_terms(3, 2, [(cell(&[0, 0], &[0, 1]), 1)]).unwrap();
        assert_eq!(df.pair(&sq).unwrap(), f.pair(&sq.boundary().unwrap()).unwrap());
        let zero = Cochain::zero(&b, 1, 3).unwrap();
        assert!(zero.coboundary().unwrap().values.iter().all(|&v| v == 0));
    }

    #[test]
    fn complex_boundary_flags() {
        let b = LatticeBox::cube(3, 2).unwrap();
        let cx = Complex::new(&b, 2).unwrap();
        assert_eq!(cx.count(2), 36);
        assert_eq!(cx.variable_cells(BoundaryCondition::Free).len(), 12);
        assert_eq!(cx.forced_cells(BoundaryCondition::Wired).len(), 24);
        assert_eq!(cx.variable_cells(BoundaryCondition::Closed).len(), 36);
    }

    #[test]
    fn hex_round_trip() {
        let b = LatticeBox::cube(3, 2).unwrap();
        let cx = Complex::new(&b, 2).unwrap();
        let p = PercolationConfig::from_variable_mask(&cx, BoundaryCondition::Free, 0b1010_0110_0001);
        let s = p.to_hex();
        let back = PercolationConfig::from_hex(&cx, BoundaryCondition::Free, &s).unwrap();
        assert_eq!(p, back);
        assert_eq!(back.variable_mask(&cx), 0b1010_0110_0001);
    }
}
