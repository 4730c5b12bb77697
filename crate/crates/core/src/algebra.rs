//! Integer linear algebra over Z and Z_q: Smith normal form, homology
//! orders and ranks, null-homology solves and uniform cocycles.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::lattice::{reduce_mod, Chain, Cochain, Complex, LatticeBox, PercolationConfig};
use crate::rng::Rng;

/// Sparse integer matrix keyed by (row, col).
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SparseIntMatrix {
    rows: usize,
    cols: usize,
    entries: BTreeMap<(usize, usize), i64>,
}

impl SparseIntMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        SparseIntMatrix { rows, cols, entries: BTreeMap::new() }
    }

    pub fn from_dense(a: &[Vec<i64>]) -> Result<Self> {
        let rows = a.len();
        let cols = a.first().map_or(0, |r| r.len());
        if a.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged dense matrix".into()));
        }
        let mut m = SparseIntMatrix::new(rows, cols);
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.add(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0)
    }

    pub fn add(&mut self, i: usize, j: usize, v: i64) {
        assert!(i < self.rows && j < self.cols, "entry ({i},{j}) out of range");
        let e = self.entries.entry((i, j)).or_insert(0);
        *e += v;
        if *e == 0 {
            self.entries.remove(&(i, j));
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, i64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn to_dense(&self) -> Vec<Vec<i64>> {
        let mut a = vec![vec![0; self.cols]; self.rows];
        for (i, j, v) in self.iter() {
            a[i][j] = v;
        }
        a
    }

    pub fn transpose(&self) -> SparseIntMatrix {
        let mut t = SparseIntMatrix::new(self.cols, self.rows);
        for (i, j, v) in self.iter() {
            t.entries.insert((j, i), v);
        }
        t
    }

    pub fn mul(&self, other: &SparseIntMatrix) -> Result<SparseIntMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch("matrix product".into()));
        }
        let mut by_row: Vec<Vec<(usize, i64)>> = vec![Vec::new(); other.rows];
        for (i, j, v) in other.iter() {
            by_row[i].push((j, v));
        }
        let mut out = SparseIntMatrix::new(self.rows, other.cols);
        for (i, k, a) in self.iter() {
            for &(j, b) in &by_row[k] {
                out.add(i, j, a * b);
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[i64]) -> Vec<i64> {
        let mut y = vec![0; self.rows];
        for (i, j, v) in self.iter() {
            y[i] += v * x[j];
        }
        y
    }

    /// Columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> SparseIntMatrix {
        let mut pos = vec![usize::MAX; self.cols];
        for (n, &c) in cols.iter().enumerate() {
            pos[c] = n;
        }
        let mut out = SparseIntMatrix::new(self.rows, cols.len());
        for (i, j, v) in self.iter() {
            if pos[j] != usize::MAX {
                out.entries.insert((i, pos[j]), v);
            }
        }
        out
    }

    /// Rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> SparseIntMatrix {
        self.transpose().select_columns(rows).transpose()
    }

    /// `[self | column]`.
    pub fn with_column(&self, column: &[i64]) -> SparseIntMatrix {
        let mut out = self.clone();
        out.cols += 1;
        for (i, &v) in column.iter().enumerate() {
            if v != 0 {
                out.entries.insert((i, self.cols), v);
            }
        }
        out
    }
}

trait Scalar: Clone + fmt::Debug + Sized {
    fn from_i64(v: i64) -> Self;
    fn is_nil(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn cmp_abs(&self, o: &Self) -> Ordering;
    fn add(&self, o: &Self) -> Option<Self>;
    fn mul(&self, o: &Self) -> Option<Self>;
    fn neg(&self) -> Option<Self>;
    /// Quotient truncated toward zero.
    fn quot(&self, o: &Self) -> Option<Self>;
    fn divides(&self, o: &Self) -> bool;
    /// (g, s, t) with g = gcd > 0 and s·self + t·o = g.
    fn ext_gcd(&self, o: &Self) -> Option<(Self, Self, Self)>;
    fn into_dense(m: Vec<Vec<Self>>) -> Dense;
    fn to_bigint(&self) -> BigInt;

    fn sub(&self, o: &Self) -> Option<Self> {
        self.add(&o.neg()?)
    }
}

impl Scalar for i64 {
    fn from_i64(v: i64) -> Self {
        v
    }
    fn is_nil(&self) -> bool {
        *self == 0
    }
    fn is_neg(&self) -> bool {
        *self < 0
    }
    fn cmp_abs(&self, o: &Self) -> Ordering {
        self.unsigned_abs().cmp(&o.unsigned_abs())
    }
    fn add(&self, o: &Self) -> Option<Self> {
        self.checked_add(*o)
    }
    fn mul(&self, o: &Self) -> Option<Self> {
        self.checked_mul(*o)
    }
    fn neg(&self) -> Option<Self> {
        self.checked_neg()
    }
    fn quot(&self, o: &Self) -> Option<Self> {
        self.checked_div(*o)
    }
    fn divides(&self, o: &Self) -> bool {
        if *self == 0 {
            *o == 0
        } else {
            o.checked_rem(*self) == Some(0)
        }
    }
    fn ext_gcd(&self, o: &Self) -> Option<(Self, Self, Self)> {
        if *self == i64::MIN || *o == i64::MIN {
            return None;
        }
        let e = self.extended_gcd(o);
        if e.gcd < 0 {
            Some((-e.gcd, -e.x, -e.y))
        } else {
            Some((e.gcd, e.x, e.y))
        }
    }
    fn into_dense(m: Vec<Vec<Self>>) -> Dense {
        Dense::Small(m)
    }
    fn to_bigint(&self) -> BigInt {
        BigInt::from(*self)
    }
}

impl Scalar for BigInt {
    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }
    fn is_nil(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_neg(&self) -> bool {
        Signed::is_negative(self)
    }
    fn cmp_abs(&self, o: &Self) -> Ordering {
        self.magnitude().cmp(o.magnitude())
    }
    fn add(&self, o: &Self) -> Option<Self> {
        Some(self + o)
    }
    fn mul(&self, o: &Self) -> Option<Self> {
        Some(self * o)
    }
    fn neg(&self) -> Option<Self> {
        Some(-self)
    }
    fn quot(&self, o: &Self) -> Option<Self> {
        Some(self / o)
    }
    fn divides(&self, o: &Self) -> bool {
        if Zero::is_zero(self) {
            Zero::is_zero(o)
        } else {
            Zero::is_zero(&(o % self))
        }
    }
    fn ext_gcd(&self, o: &Self) -> Option<(Self, Self, Self)> {
        let e = self.extended_gcd(o);
        if Signed::is_negative(&e.gcd) {
            Some((-e.gcd, -e.x, -e.y))
        } else {
            Some((e.gcd, e.x, e.y))
        }
    }
    fn into_dense(m: Vec<Vec<Self>>) -> Dense {
        Dense::Big(m)
    }
    fn to_bigint(&self) -> BigInt {
        self.clone()
    }
}

/// A dense transform matrix, kept in machine integers when no entry overflowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Dense {
    Small(Vec<Vec<i64>>),
    Big(Vec<Vec<BigInt>>),
}

impl Dense {
    pub fn rows(&self) -> usize {
        match self {
            Dense::Small(m) => m.len(),
            Dense::Big(m) => m.len(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Dense::Small(m) => m.first().map_or(0, |r| r.len()),
            Dense::Big(m) => m.first().map_or(0, |r| r.len()),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> BigInt {
        match self {
            Dense::Small(m) => BigInt::from(m[i][j]),
            Dense::Big(m) => m[i][j].clone(),
        }
    }

    /// Entry reduced into [0, q).
    pub fn get_mod(&self, i: usize, j: usize, q: u64) -> i64 {
        match self {
            Dense::Small(m) => m[i][j].rem_euclid(q as i64),
            Dense::Big(m) => big_mod(&m[i][j], q),
        }
    }

    pub fn to_mod(&self, q: u64) -> Vec<Vec<i64>> {
        (0..self.rows()).map(|i| (0..self.cols()).map(|j| self.get_mod(i, j, q)).collect()).collect()
    }

    pub fn is_big(&self) -> bool {
        matches!(self, Dense::Big(_))
    }
}

fn big_mod(x: &BigInt, q: u64) -> i64 {
    x.mod_floor(&BigInt::from(q)).to_i64().expect("residue fits")
}

/// Smith normal form U·A·V = D with d_1 | d_2 | … | d_r > 0.
#[derive(Clone, Debug)]
pub struct SmithForm {
    pub rows: usize,
    pub cols: usize,
    /// The nonzero invariant factors; their count is the rank.
    pub diag: Vec<BigInt>,
    pub u: Option<Dense>,
    pub v: Option<Dense>,
}

struct Work<T> {
    a: Vec<Vec<T>>,
    u: Option<Vec<Vec<T>>>,
    v: Option<Vec<Vec<T>>>,
    m: usize,
    n: usize,
}

fn identity<T: Scalar>(n: usize) -> Vec<Vec<T>> {
    (0..n).map(|i| (0..n).map(|j| T::from_i64(i64::from(i == j))).collect()).collect()
}

impl<T: Scalar> Work<T> {
    /// row_dst -= f · row_src
    fn row_axpy(&mut self, dst: usize, src: usize, f: &T, from: usize) -> Option<()> {
        for j in from..self.n {
            if !self.a[src][j].is_nil() {
                self.a[dst][j] = self.a[dst][j].sub(&f.mul(&self.a[src][j])?)?;
            }
        }
        if let Some(u) = self.u.as_mut() {
            for j in 0..self.m {
                if !u[src][j].is_nil() {
                    u[dst][j] = u[dst][j].sub(&f.mul(&u[src][j])?)?;
                }
            }
        }
        Some(())
    }

    /// col_dst -= f · col_src
    fn col_axpy(&mut self, dst: usize, src: usize, f: &T, from: usize) -> Option<()> {
        for i in from..self.m {
            if !self.a[i][src].is_nil() {
                self.a[i][dst] = self.a[i][dst].sub(&f.mul(&self.a[i][src])?)?;
            }
        }
        if let Some(v) = self.v.as_mut() {
            for row in v.iter_mut() {
                if !row[src].is_nil() {
                    row[dst] = row[dst].sub(&f.mul(&row[src])?)?;
                }
            }
        }
        Some(())
    }

    fn swap_rows(&mut self, i: usize, k: usize) {
        if i != k {
            self.a.swap(i, k);
            if let Some(u) = self.u.as_mut() {
                u.swap(i, k);
            }
        }
    }

    fn swap_cols(&mut self, j: usize, k: usize) {
        if j != k {
            for row in self.a.iter_mut() {
                row.swap(j, k);
            }
            if let Some(v) = self.v.as_mut() {
                for row in v.iter_mut() {
                    row.swap(j, k);
                }
            }
        }
    }

    fn negate_row(&mut self, i: usize) -> Option<()> {
        for j in 0..self.n {
            self.a[i][j] = self.a[i][j].neg()?;
        }
        if let Some(u) = self.u.as_mut() {
            for x in u[i].iter_mut() {
                *x = x.neg()?;
            }
        }
        Some(())
    }

    /// Rows (j, k) ← M·(row_j, row_k) for M = [[p, q], [r, s]].
    fn mix_rows(&mut self, j: usize, k: usize, mm: [&T; 4]) -> Option<()> {
        fn mix<T: Scalar>(rows: &mut [Vec<T>], j: usize, k: usize, mm: [&T; 4]) -> Option<()> {
            for c in 0..rows[j].len() {
                let x = rows[j][c].clone();
                let y = rows[k][c].clone();
                rows[j][c] = mm[0].mul(&x)?.add(&mm[1].mul(&y)?)?;
                rows[k][c] = mm[2].mul(&x)?.add(&mm[3].mul(&y)?)?;
            }
            Some(())
        }
        mix(&mut self.a, j, k, mm)?;
        if let Some(u) = self.u.as_mut() {
            mix(u, j, k, mm)?;
        }
        Some(())
    }

    /// Columns (j, k) ← (col_j, col_k)·M for M = [[p, q], [r, s]].
    fn mix_cols(&mut self, j: usize, k: usize, mm: [&T; 4]) -> Option<()> {
        fn mix<T: Scalar>(rows: &mut [Vec<T>], j: usize, k: usize, mm: [&T; 4]) -> Option<()> {
            for row in rows.iter_mut() {
                let x = row[j].clone();
                let y = row[k].clone();
                row[j] = x.mul(mm[0])?.add(&y.mul(mm[2])?)?;
                row[k] = x.mul(mm[1])?.add(&y.mul(mm[3])?)?;
            }
            Some(())
        }
        mix(&mut self.a, j, k, mm)?;
        if let Some(v) = self.v.as_mut() {
            mix(v, j, k, mm)?;
        }
        Some(())
    }

    fn choose_pivot(&self, t: usize) -> Option<(usize, usize)> {
        let mut row_nz = vec![0usize; self.m];
        let mut col_nz = vec![0usize; self.n];
        for i in t..self.m {
            for j in t..self.n {
                if !self.a[i][j].is_nil() {
                    row_nz[i] += 1;
                    col_nz[j] += 1;
                }
            }
        }
        let mut best: Option<(usize, usize)> = None;
        for i in t..self.m {
            if row_nz[i] == 0 {
                continue;
            }
            for j in t..self.n {
                if self.a[i][j].is_nil() {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bj)) => match self.a[i][j].cmp_abs(&self.a[bi][bj]) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => {
                            (row_nz[i] - 1) * (col_nz[j] - 1) < (row_nz[bi] - 1) * (col_nz[bj] - 1)
                        }
                    },
                };
                if better {
                    best = Some((i, j));
                }
            }
        }
        best
    }

    fn run(mut self) -> Option<SmithForm> {
        let mut t = 0;
        while t < self.m.min(self.n) {
            let Some((pi, pj)) = self.choose_pivot(t) else { break };
            self.swap_rows(t, pi);
            self.swap_cols(t, pj);
            loop {
                let p = self.a[t][t].clone();
                let mut clean = true;
                for i in t + 1..self.m {
                    if !self.a[i][t].is_nil() {
                        let f = self.a[i][t].quot(&p)?;
                        if !f.is_nil() {
                            self.row_axpy(i, t, &f, t)?;
                        }
                        clean &= self.a[i][t].is_nil();
                    }
                }
                for j in t + 1..self.n {
                    if !self.a[t][j].is_nil() {
                        let f = self.a[t][j].quot(&p)?;
                        if !f.is_nil() {
                            self.col_axpy(j, t, &f, t)?;
                        }
                        clean &= self.a[t][j].is_nil();
                    }
                }
                if clean {
                    break;
                }
                let mut best: Option<(bool, usize)> = None;
                let mut best_val: Option<T> = None;
                for i in t + 1..self.m {
                    let x = &self.a[i][t];
                    if !x.is_nil() && best_val.as_ref().is_none_or(|b| x.cmp_abs(b) == Ordering::Less) {
                        best = Some((true, i));
                        best_val = Some(x.clone());
                    }
                }
                for j in t + 1..self.n {
                    let x = &self.a[t][j];
                    if !x.is_nil() && best_val.as_ref().is_none_or(|b| x.cmp_abs(b) == Ordering::Less) {
                        best = Some((false, j));
                        best_val = Some(x.clone());
                    }
                }
                match best {
                    Some((true, i)) => self.swap_rows(t, i),
                    Some((false, j)) => self.swap_cols(t, j),
                    None => break,
                }
            }
            t += 1;
        }
        let r = t;
        for j in 0..r {
            if self.a[j][j].is_neg() {
                self.negate_row(j)?;
            }
        }
        for j in 0..r {
            for k in j + 1..r {
                let a = self.a[j][j].clone();
                let b = self.a[k][k].clone();
                if a.divides(&b) {
                    continue;
                }
                let (g, s, tt) = a.ext_gcd(&b)?;
                let bg = b.quot(&g)?;
                let ag = a.quot(&g)?;
                let one = T::from_i64(1);
                let nbg = bg.neg()?;
                self.mix_rows(j, k, [&s, &tt, &nbg, &ag])?;
                let v01 = tt.mul(&bg)?.neg()?;
                let v11 = s.mul(&ag)?;
                self.mix_cols(j, k, [&one, &v01, &one, &v11])?;
            }
        }
        Some(SmithForm {
            rows: self.m,
            cols: self.n,
            diag: (0..r).map(|j| self.a[j][j].to_bigint()).collect(),
            u: self.u.map(T::into_dense),
            v: self.v.map(T::into_dense),
        })
    }
}

fn snf_with<T: Scalar>(a: &SparseIntMatrix, track: bool) -> Option<SmithForm> {
    let (m, n) = (a.rows(), a.cols());
    let mut dense: Vec<Vec<T>> = vec![vec![T::from_i64(0); n]; m];
    for (i, j, v) in a.iter() {
        dense[i][j] = T::from_i64(v);
    }
    Work {
        a: dense,
        u: track.then(|| identity(m)),
        v: track.then(|| identity(n)),
        m,
        n,
    }
    .run()
}

/// Exact Smith normal form. Runs in machine integers and restarts with
/// arbitrary precision if any entry overflows. `track` records U and V.
pub fn smith_normal_form(a: &SparseIntMatrix, track: bool) -> SmithForm {
    snf_with::<i64>(a, track).unwrap_or_else(|| snf_with::<BigInt>(a, track).expect("bigint never overflows"))
}

fn gcd_u(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

/// Inverse of `a` modulo `m` (gcd(a, m) = 1).
pub(crate) fn inv_mod(a: i64, m: i64) -> i64 {
    if m == 1 {
        return 0;
    }
    let e = a.rem_euclid(m).extended_gcd(&m);
    debug_assert_eq!(e.gcd.abs(), 1);
    (e.x * e.gcd).rem_euclid(m)
}

impl SmithForm {
    pub fn rank(&self) -> usize {
        self.diag.len()
    }

    /// gcd(d_j, q) for each nonzero invariant factor.
    pub fn gcds_mod(&self, q: u64) -> Vec<u64> {
        self.diag.iter().map(|d| gcd_u(big_mod(d, q) as u64, q)).collect()
    }

    /// |im(A) ⊗ Z_q| = ∏ q / gcd(d_j, q).
    pub fn image_order_mod(&self, q: u64) -> BigUint {
        self.gcds_mod(q).into_iter().map(|g| BigUint::from(q / g)).product()
    }

    pub fn log_image_order_mod(&self, q: u64) -> f64 {
        self.gcds_mod(q).into_iter().map(|g| ((q / g) as f64).ln()).sum()
    }

    /// The invariant factors larger than one.
    pub fn torsion(&self) -> Vec<BigInt> {
        self.diag.iter().filter(|d| !d.is_one()).cloned().collect()
    }

    fn transforms(&self) -> Result<(&Dense, &Dense)> {
        match (&self.u, &self.v) {
            (Some(u), Some(v)) => Ok((u, v)),
            _ => Err(Error::Precondition("Smith form computed without transforms".into())),
        }
    }

    /// A solution of A·x = b over Z, if any.
    pub fn solve_integer(&self, b: &[i64]) -> Result<Option<Vec<BigInt>>> {
        let (u, v) = self.transforms()?;
        if b.len() != self.rows {
            return Err(Error::DimensionMismatch("right-hand side length".into()));
        }
        let c: Vec<BigInt> = (0..self.rows)
            .map(|i| (0..self.rows).filter(|&k| b[k] != 0).map(|k| u.get(i, k) * b[k]).sum())
            .collect();
        let mut y = vec![BigInt::zero(); self.cols];
        for (j, cj) in c.iter().enumerate() {
            if j < self.rank() {
                let (quo, rem) = cj.div_rem(&self.diag[j]);
                if !rem.is_zero() {
                    return Ok(None);
                }
                y[j] = quo;
            } else if !cj.is_zero() {
                return Ok(None);
            }
        }
        Ok(Some(
            (0..self.cols)
                .map(|i| (0..self.rank()).filter(|&j| !y[j].is_zero()).map(|j| v.get(i, j) * &y[j]).sum())
                .collect(),
        ))
    }

    /// A solution of A·x ≡ b (mod q), if any.
    pub fn solve_mod(&self, b: &[i64], q: u64) -> Result<Option<Vec<i64>>> {
        if q == 0 {
            return Err(invalid("solve_mod needs q ≥ 1"));
        }
        let (u, v) = self.transforms()?;
        if b.len() != self.rows {
            return Err(Error::DimensionMismatch("right-hand side length".into()));
        }
        let qi = q as i128;
        let b: Vec<i64> = b.iter().map(|x| x.rem_euclid(q as i64)).collect();
        let um = u.to_mod(q);
        let c: Vec<i64> = um
            .iter()
            .map(|row| (row.iter().zip(&b).map(|(&x, &y)| x as i128 * y as i128).sum::<i128>().rem_euclid(qi)) as i64)
            .collect();
        let gs = self.gcds_mod(q);
        let mut y = vec![0i64; self.cols];
        for (j, &cj) in c.iter().enumerate() {
            if j < self.rank() {
                let g = gs[j] as i64;
                if cj % g != 0 {
                    return Ok(None);
                }
                let m = q as i64 / g;
                let dj = big_mod(&self.diag[j], q) / g;
                y[j] = ((cj / g) as i128 * inv_mod(dj, m) as i128).rem_euclid(m as i128) as i64;
            } else if cj != 0 {
                return Ok(None);
            }
        }
        let vm = v.to_mod(q);
        Ok(Some(
            vm.iter()
                .map(|row| (row.iter().zip(&y).map(|(&a, &b)| a as i128 * b as i128).sum::<i128>().rem_euclid(qi)) as i64)
                .collect(),
        ))
    }
}

/// A subgroup of Z_q^n given as an internal direct sum of cyclic subgroups,
/// so every element has exactly one coordinate vector c with 0 ≤ c_j < o_j.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZqSubgroup {
    q: u64,
    len: usize,
    gens: Vec<Vec<i64>>,
    orders: Vec<u64>,
}

impl ZqSubgroup {
    fn push(&mut self, g: Vec<i64>, order: u64) {
        if order > 1 {
            self.gens.push(g);
            self.orders.push(order);
        }
    }

    /// ker(A) ⊂ Z_q^cols.
    pub fn kernel(a: &SparseIntMatrix, q: u64) -> Result<Self> {
        Self::kernel_from(&smith_normal_form(a, true), q)
    }

    pub fn kernel_from(snf: &SmithForm, q: u64) -> Result<Self> {
        if q < 1 {
            return Err(invalid("kernel over Z_q needs q ≥ 1"));
        }
        let (_, v) = snf.transforms()?;
        let gs = snf.gcds_mod(q);
        let mut out = ZqSubgroup { q, len: snf.cols, gens: Vec::new(), orders: Vec::new() };
        for j in 0..snf.cols {
            let (scale, order) = if j < snf.rank() { (q / gs[j], gs[j]) } else { (1, q) };
            let g = (0..snf.cols).map(|i| reduce_mod(v.get_mod(i, j, q) * scale as i64, q)).collect();
            out.push(g, order);
        }
        Ok(out)
    }

    /// im(A) ⊂ Z_q^rows.
    pub fn image(a: &SparseIntMatrix, q: u64) -> Result<Self> {
        if q < 1 {
            return Err(invalid("image over Z_q needs q ≥ 1"));
        }
        let snf = smith_normal_form(a, true);
        let (_, v) = snf.transforms()?;
        let gs = snf.gcds_mod(q);
        let mut out = ZqSubgroup { q, len: a.rows(), gens: Vec::new(), orders: Vec::new() };
        let mut cols: Vec<Vec<(usize, i64)>> = vec![Vec::new(); a.cols()];
        for (i, j, x) in a.iter() {
            cols[j].push((i, x));
        }
        for (j, &g) in gs.iter().enumerate() {
            let mut col = vec![0i64; a.rows()];
            for (k, entries) in cols.iter().enumerate() {
                let vk = v.get_mod(k, j, q);
                if vk == 0 {
                    continue;
                }
                for &(i, x) in entries {
                    col[i] = reduce_mod(col[i] + x * vk, q);
                }
            }
            out.push(col, q / g);
        }
        Ok(out)
    }

    /// Subgroup generated by arbitrary vectors.
    pub fn generated_by(vectors: &[Vec<i64>], len: usize, q: u64) -> Result<Self> {
        let mut a = SparseIntMatrix::new(len, vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            if v.len() != len {
                return Err(Error::DimensionMismatch("generator length".into()));
            }
            for (i, &x) in v.iter().enumerate() {
                a.add(i, j, reduce_mod(x, q));
            }
        }
        Self::image(&a, q)
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn ambient_len(&self) -> usize {
        self.len
    }

    pub fn generators(&self) -> impl Iterator<Item = (&[i64], u64)> {
        self.gens.iter().map(|g| g.as_slice()).zip(self.orders.iter().copied())
    }

    pub fn orders(&self) -> &[u64] {
        &self.orders
    }

    pub fn order(&self) -> BigUint {
        self.orders.iter().map(|&o| BigUint::from(o)).product()
    }

    pub fn log_order(&self) -> f64 {
        self.orders.iter().map(|&o| (o as f64).ln()).sum()
    }

    pub fn order_u64(&self) -> Option<u64> {
        self.orders.iter().try_fold(1u64, |acc, &o| acc.checked_mul(o))
    }

    pub fn combination(&self, coeffs: &[u64]) -> Vec<i64> {
        let mut out = vec![0i64; self.len];
        for (g, &c) in self.gens.iter().zip(coeffs) {
            for (o, x) in out.iter_mut().zip(g) {
                *o = reduce_mod(*o + x * c as i64, self.q);
            }
        }
        out
    }

    /// Visits every element once.
    pub fn for_each_element(&self, mut f: impl FnMut(&[i64])) {
        let mut digits = vec![0u64; self.gens.len()];
        let mut cur = vec![0i64; self.len];
        loop {
            f(&cur);
            let mut j = 0;
            loop {
                if j == digits.len() {
                    return;
                }
                for (o, x) in cur.iter_mut().zip(&self.gens[j]) {
                    *o = reduce_mod(*o + x, self.q);
                }
                digits[j] += 1;
                if digits[j] < self.orders[j] {
                    break;
                }
                digits[j] = 0;
                j += 1;
            }
        }
    }

    pub fn elements(&self, cap: u64) -> Result<Vec<Vec<i64>>> {
        match self.order_u64() {
            Some(n) if n <= cap => {
                let mut out = Vec::with_capacity(n as usize);
                self.for_each_element(|v| out.push(v.to_vec()));
                Ok(out)
            }
            _ => Err(Error::TooLarge(format!("subgroup of order {} exceeds {cap}", self.order()))),
        }
    }

    /// Uniformly distributed element.
    pub fn sample(&self, rng: &mut Rng) -> Vec<i64> {
        let coeffs: Vec<u64> = self.orders.iter().map(|&o| rng.random_range(0..o)).collect();
        self.combination(&coeffs)
    }
}

fn effective_top(cx: &Complex, p: &PercolationConfig) -> Result<Vec<usize>> {
    p.validate(cx)?;
    Ok(p.effective_cells(cx))
}

/// ∂_k of the full k-skeleton of the complex (augmentation row for k = 0).
pub fn full_boundary_matrix(cx: &Complex, k: usize) -> Result<SparseIntMatrix> {
    if k > cx.top() {
        return Err(invalid(format!("degree {k} above complex dimension {}", cx.top())));
    }
    if k == 0 {
        let mut m = SparseIntMatrix::new(1, cx.count(0));
        for j in 0..cx.count(0) {
            m.add(0, j, 1);
        }
        return Ok(m);
    }
    let mut m = SparseIntMatrix::new(cx.count(k - 1), cx.count(k));
    for c in 0..cx.count(k) {
        for &(f, s) in cx.faces(k, c) {
            m.add(f, c, s);
        }
    }
    Ok(m)
}

/// ∂_k of the percolation subcomplex P: one column per k-cell of P, with
/// the boundary cells adjoined under wired boundary conditions.
pub fn boundary_matrix(cx: &Complex, p: &PercolationConfig, k: usize) -> Result<SparseIntMatrix> {
    let full = full_boundary_matrix(cx, k)?;
    if k == cx.top() {
        Ok(full.select_columns(&effective_top(cx, p)?))
    } else {
        Ok(full)
    }
}

/// Order and rank data of one homology group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomologySummary {
    pub k: usize,
    pub q: u64,
    /// |H_k(P; Z_q)|; for q = 0 the order of H_k(P; Z) when finite.
    pub order_mod_q: Option<BigUint>,
    pub betti_rational: usize,
    pub torsion_elementary_divisors: Vec<BigInt>,
}

/// Reduced homology of percolation subcomplexes of one box, caching the
/// Smith forms of the fixed lower boundary maps.
pub struct HomologyEngine<'a> {
    cx: &'a Complex,
    fixed: Vec<OnceLock<SmithForm>>,
}

impl<'a> HomologyEngine<'a> {
    pub fn new(cx: &'a Complex) -> Self {
        HomologyEngine { cx, fixed: (0..cx.top()).map(|_| OnceLock::new()).collect() }
    }

    pub fn complex(&self) -> &'a Complex {
        self.cx
    }

    fn fixed_snf(&self, k: usize) -> &SmithForm {
        self.fixed[k].get_or_init(|| smith_normal_form(&full_boundary_matrix(self.cx, k).expect("degree in range"), false))
    }

    /// Smith forms of ∂_k and ∂_{k+1} for P, as (n_k, snf_k, snf_{k+1}).
    fn pair(&self, p: &PercolationConfig, k: usize) -> Result<(usize, SmithForm, Option<SmithForm>)> {
        let top = self.cx.top();
        if k > top {
            return Err(invalid(format!("degree {k} above complex dimension {top}")));
        }
        let cells = effective_top(self.cx, p)?;
        let n_k = if k == top { cells.len() } else { self.cx.count(k) };
        let lower = if k == top {
            smith_normal_form(&boundary_matrix(self.cx, p, k)?, false)
        } else {
            self.fixed_snf(k).clone()
        };
        let upper = if k + 1 == top {
            Some(smith_normal_form(&boundary_matrix(self.cx, p, top)?, false))
        } else if k + 1 < top {
            Some(self.fixed_snf(k + 1).clone())
        } else {
            None
        };
        Ok((n_k, lower, upper))
    }

    pub fn summary(&self, p: &PercolationConfig, k: usize, q: u64) -> Result<HomologySummary> {
        if q == 1 {
            return Err(invalid("coefficients Z_1 are trivial; use q = 0 or q ≥ 2"));
        }
        let (n_k, lower, upper) = self.pair(p, k)?;
        let r_up = upper.as_ref().map_or(0, |s| s.rank());
        let betti = n_k - lower.rank() - r_up;
        let torsion = upper.as_ref().map_or_else(Vec::new, |s| s.torsion());
        let order = if q == 0 {
            (betti == 0).then(|| torsion.iter().map(|t| t.magnitude().clone()).product())
        } else {
            let im = lower.image_order_mod(q) * upper.as_ref().map_or_else(BigUint::one, |s| s.image_order_mod(q));
            Some(BigUint::from(q).pow(n_k as u32) / im)
        };
        Ok(HomologySummary { k, q, order_mod_q: order, betti_rational: betti, torsion_elementary_divisors: torsion })
    }

    pub fn homology_order(&self, p: &PercolationConfig, k: usize, q: u64) -> Result<BigUint> {
        if q < 2 {
            return Err(invalid("homology order needs q ≥ 2"));
        }
        Ok(self.summary(p, k, q)?.order_mod_q.expect("finite for q ≥ 2"))
    }

    pub fn log_homology_order(&self, p: &PercolationConfig, k: usize, q: u64) -> Result<f64> {
        if q < 2 {
            return Err(invalid("homology order needs q ≥ 2"));
        }
        let (n_k, lower, upper) = self.pair(p, k)?;
        let up = upper.as_ref().map_or(0.0, |s| s.log_image_order_mod(q));
        Ok(n_k as f64 * (q as f64).ln() - lower.log_image_order_mod(q) - up)
    }

    pub fn betti_rational(&self, p: &PercolationConfig, k: usize) -> Result<usize> {
        Ok(self.summary(p, k, 0)?.betti_rational)
    }
}

pub fn homology_summary(cx: &Complex, p: &PercolationConfig, k: usize, q: u64) -> Result<HomologySummary> {
    HomologyEngine::new(cx).summary(p, k, q)
}

pub fn homology_order(cx: &Complex, p: &PercolationConfig, k: usize, q: u64) -> Result<BigUint> {
    HomologyEngine::new(cx).homology_order(p, k, q)
}

pub fn betti_rational(cx: &Complex, p: &PercolationConfig, k: usize) -> Result<usize> {
    HomologyEngine::new(cx).betti_rational(p, k)
}

/// Coboundary δ^k: C^k(P) → C^{k+1}(P), assembled from cofaces; k = -1 is
/// the coaugmentation Z → C^0 by constants.
pub fn coboundary_matrix(cx: &Complex, p: &PercolationConfig, k: isize) -> Result<SparseIntMatrix> {
    let top = cx.top() as isize;
    if k < -1 || k >= top {
        return Err(invalid(format!("coboundary degree {k} out of range")));
    }
    if k == -1 {
        let mut m = SparseIntMatrix::new(cx.count(0), 1);
        for i in 0..cx.count(0) {
            m.add(i, 0, 1);
        }
        return Ok(m);
    }
    let k = k as usize;
    let rows: Vec<usize> = if k + 1 == cx.top() { effective_top(cx, p)? } else { (0..cx.count(k + 1)).collect() };
    let mut pos = vec![usize::MAX; cx.count(k + 1)];
    for (n, &r) in rows.iter().enumerate() {
        pos[r] = n;
    }
    let mut m = SparseIntMatrix::new(rows.len(), cx.count(k));
    for c in 0..cx.count(k) {
        for &(up, s) in cx.cofaces(k, c) {
            if pos[up] != usize::MAX {
                m.add(pos[up], c, s);
            }
        }
    }
    Ok(m)
}

/// |H^k(P; Z_q)| from the coboundary maps, reduced.
pub fn cohomology_order(cx: &Complex, p: &PercolationConfig, k: usize, q: u64) -> Result<BigUint> {
    if q < 2 {
        return Err(invalid("cohomology order needs q ≥ 2"));
    }
    let top = cx.top();
    if k > top {
        return Err(invalid(format!("degree {k} above complex dimension {top}")));
    }
    let n_k = if k == top { effective_top(cx, p)?.len() } else { cx.count(k) };
    let out_im = if k < top {
        smith_normal_form(&coboundary_matrix(cx, p, k as isize)?, false).image_order_mod(q)
    } else {
        BigUint::one()
    };
    let in_im = smith_normal_form(&coboundary_matrix(cx, p, k as isize - 1)?, false).image_order_mod(q);
    Ok(BigUint::from(q).pow(n_k as u32) / (out_im * in_im))
}

fn cycle_vector(cx: &Complex, gamma: &Chain) -> Result<Vec<i64>> {
    if gamma.dim() + 1 != cx.top() {
        return Err(Error::DimensionMismatch(format!(
            "cycle of dimension {} in a {}-dimensional complex",
            gamma.dim(),
            cx.top()
        )));
    }
    if gamma.dim() == 0 {
        if gamma.augmentation()? != 0 {
            return Err(Error::NotACycle);
        }
    } else if !gamma.boundary()?.is_empty() {
        return Err(Error::NotACycle);
    }
    cx.chain_vector(gamma)
}

/// A chain τ on the i-cells of P with ∂τ = γ over Z_q (Z for q = 0), if any.
pub fn null_homology_witness(cx: &Complex, p: &PercolationConfig, gamma: &Chain, q: u64) -> Result<Option<Chain>> {
    let b = cycle_vector(cx, gamma)?;
    let cells = effective_top(cx, p)?;
    let a = full_boundary_matrix(cx, cx.top())?.select_columns(&cells);
    let snf = smith_normal_form(&a, true);
    let x: Option<Vec<i64>> = if q == 0 {
        match snf.solve_integer(&b)? {
            None => None,
            Some(x) => Some(
                x.iter()
                    .map(|v| v.to_i64().ok_or_else(|| Error::TooLarge("witness coefficient".into())))
                    .collect::<Result<_>>()?,
            ),
        }
    } else {
        snf.solve_mod(&b, q)?
    };
    Ok(x.map(|x| {
        let mut full = vec![0i64; cx.count(cx.top())];
        for (n, &c) in cells.iter().enumerate() {
            full[c] = x[n];
        }
        cx.chain_from_vector(cx.top(), q, &full)
    }))
}

/// V_γ^fin(q): γ ∈ B_{i-1}(P; Z_q), with q = 0 for Z.
pub fn null_homology_test(cx: &Complex, p: &PercolationConfig, gamma: &Chain, q: u64) -> Result<bool> {
    Ok(null_homology_witness(cx, p, gamma, q)?.is_some())
}

/// The same event decided without transforms: γ lies in the image iff
/// adjoining it as a column leaves the image unchanged.
pub fn null_homology_by_orders(cx: &Complex, p: &PercolationConfig, gamma: &Chain, q: u64) -> Result<bool> {
    let b = cycle_vector(cx, gamma)?;
    let a = boundary_matrix(cx, p, cx.top())?;
    let s0 = smith_normal_form(&a, false);
    let s1 = smith_normal_form(&a.with_column(&b), false);
    if q == 0 {
        let prod = |s: &SmithForm| s.diag.iter().fold(BigInt::one(), |acc, d| acc * d);
        Ok(s0.rank() == s1.rank() && prod(&s0) == prod(&s1))
    } else {
        Ok(s0.image_order_mod(q) == s1.image_order_mod(q))
    }
}

/// C_t: some τ on the occupied i-cells inside `t` has ∂τ − γ supported on ∂t.
pub fn relative_null_homology(cx: &Complex, p: &PercolationConfig, gamma: &Chain, t: &LatticeBox, q: u64) -> Result<bool> {
    if !cx.bx().contains_box(t) || !t.is_full_dimensional() {
        return Err(Error::Geometry("tube must be a full-dimensional sub-box".into()));
    }
    if gamma.dim() + 1 != cx.top() {
        return Err(Error::DimensionMismatch("chain dimension".into()));
    }
    if gamma.support().any(|c| !t.contains_cell(c)) {
        return Err(Error::Geometry("chain not supported in the tube".into()));
    }
    let k = cx.top() - 1;
    let b_full = cx.chain_vector(gamma)?;
    let rows: Vec<usize> = (0..cx.count(k))
        .filter(|&r| {
            let c = cx.cells(k).cell(r);
            t.contains_cell(c) && !t.cell_on_boundary(c)
        })
        .collect();
    let cols: Vec<usize> =
        effective_top(cx, p)?.into_iter().filter(|&c| t.contains_cell(cx.cells(cx.top()).cell(c))).collect();
    let a = full_boundary_matrix(cx, cx.top())?.select_columns(&cols).select_rows(&rows);
    let b: Vec<i64> = rows.iter().map(|&r| b_full[r]).collect();
    let snf = smith_normal_form(&a, true);
    if q == 0 {
        Ok(snf.solve_integer(&b)?.is_some())
    } else {
        Ok(snf.solve_mod(&b, q)?.is_some())
    }
}

/// Z^{i-1}(P; Z_q) as a direct sum of cyclic groups.
pub fn cocycle_group(cx: &Complex, p: &PercolationConfig, q: u64) -> Result<ZqSubgroup> {
    if q < 2 {
        return Err(invalid("cocycles need q ≥ 2"));
    }
    let top = cx.top();
    if top == 0 {
        return Err(invalid("complex has no (i-1)-cells"));
    }
    let delta = coboundary_matrix(cx, p, top as isize - 1)?;
    ZqSubgroup::kernel(&delta, q)
}

/// Uniform element of Z^{i-1}(P; Z_q).
pub fn uniform_cocycle(cx: &Complex, p: &PercolationConfig, q: u64, rng: &mut Rng) -> Result<Cochain> {
    let g = cocycle_group(cx, p, q)?;
    Cochain::from_values(cx.bx(), cx.top() - 1, q, g.sample(rng))
}
