//! Sensing plans: which noiselet rows each column of a block keeps, how the
//! full binary pattern pool is laid out on the SLM, and the matrix-free block
//! operator used during reconstruction.
//!
//! Row indices are zero-based throughout. Assignment `k` applies to the
//! `k`-th column of every block, counted left to right in scene space.

use std::f64::consts::SQRT_2;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noiselet::{exponent_of, pair_patterns, pair_recovery, Direction, NoiseletBasis, RecoveryTerm};
use crate::rng::PortableRng;

/// Placement of the binarized rows on the SLM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    /// Pair representative `j` (one-based) occupies pattern columns `2j − 1` and `2j`.
    Pastuszczak,
    /// Pair representative `j` (one-based) occupies pattern columns `j` and `n + 1 − j`.
    Mirrored,
}

impl std::str::FromStr for Ordering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pastuszczak" => Ok(Ordering::Pastuszczak),
            "mirrored" => Ok(Ordering::Mirrored),
            other => Err(Error::Config(format!("unknown ordering {other:?}"))),
        }
    }
}

impl std::fmt::Display for Ordering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ordering::Pastuszczak => "pastuszczak",
            Ordering::Mirrored => "mirrored",
        })
    }
}

/// Number of complex rows kept for a sampling rate, rounded to whole pairs.
pub fn rows_for_rate(n: usize, rate: f64) -> usize {
    let pairs = (rate.clamp(0.0, 1.0) * n as f64 / 2.0).round() as usize;
    (2 * pairs).min(n)
}

/// Draws `b` pair-closed assignments of `m` rows each from the order-`n` pool.
///
/// The first assignment is a uniform draw. Later ones take pairs in order of
/// least recent use: never-used pairs first, then pairs last used by the
/// earliest assignment, and so on. Ties are broken by a seeded shuffle of each
/// tie group (see [`crate::rng`] for the generator).
pub fn draw_rows(n: usize, m: usize, b: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    exponent_of(n)?;
    if m % 2 != 0 {
        return Err(Error::Pairing(format!("m = {m} is odd; rows are drawn in conjugate pairs")));
    }
    if m > n {
        return Err(Error::Rate(format!("m = {m} exceeds n = {n}")));
    }
    if b == 0 {
        return Err(Error::Config("block width must be at least 1".into()));
    }
    let pairs = n / 2;
    let need = m / 2;
    let mut rng = PortableRng::new(seed);
    // `None` sorts before `Some`, so never-used pairs come first.
    let mut last_used: Vec<Option<usize>> = vec![None; pairs];
    let mut out = Vec::with_capacity(b);
    for k in 0..b {
        let mut order: Vec<usize> = (0..pairs).collect();
        order.sort_by_key(|&r| last_used[r]);
        let mut start = 0;
        while start < order.len() {
            let stamp = last_used[order[start]];
            let end = start + order[start..].iter().take_while(|&&r| last_used[r] == stamp).count();
            rng.shuffle(&mut order[start..end]);
            start = end;
        }
        let mut rows = Vec::with_capacity(m);
        for &rep in &order[..need] {
            last_used[rep] = Some(k);
            rows.push(rep);
            rows.push(n - 1 - rep);
        }
        rows.sort_unstable();
        out.push(rows);
    }
    Ok(out)
}

/// A binary SLM mask: `height` pixel rows by `K` pattern columns.
///
/// Pattern values: 1 transmits, 0 blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlmMask {
    cells: Array2<u8>,
}

impl SlmMask {
    pub fn from_columns(cells: Array2<u8>) -> Result<Self> {
        if cells.iter().any(|&v| v > 1) {
            return Err(Error::Format("SLM cells must be 0 or 1".into()));
        }
        Ok(Self { cells })
    }

    pub fn height(&self) -> usize {
        self.cells.nrows()
    }

    pub fn pattern_count(&self) -> usize {
        self.cells.ncols()
    }

    pub fn cells(&self) -> &Array2<u8> {
        &self.cells
    }

    pub fn pattern(&self, c: usize) -> ndarray::ArrayView1<'_, u8> {
        self.cells.column(c)
    }

    /// Number of transmitting cells in pattern `c`.
    pub fn open_count(&self, c: usize) -> usize {
        self.cells.column(c).iter().filter(|&&v| v == 1).count()
    }

    /// Index of the unique all-ones pattern column, if there is exactly one.
    pub fn ones_column(&self) -> Option<usize> {
        let mut found = None;
        for c in 0..self.pattern_count() {
            if self.cells.column(c).iter().all(|&v| v == 1) {
                if found.is_some() {
                    return None;
                }
                found = Some(c);
            }
        }
        found
    }

    /// SHA-256 of the row-major cell bytes, as lowercase hex.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.height() as u64).to_le_bytes());
        h.update((self.pattern_count() as u64).to_le_bytes());
        for &v in self.cells.iter() {
            h.update([v]);
        }
        hex::encode(h.finalize())
    }

    /// Single-band image, 1 where the mask transmits; saves as a 0/255 PGM.
    pub fn to_image(&self) -> crate::raster::Image {
        crate::raster::Image::mono(self.cells.mapv(f64::from))
    }
}

/// The full `n × (n+1)` SLM array and the recovery term of every complex row.
pub fn build_slm(n: usize, ordering: Ordering) -> Result<(SlmMask, Vec<RecoveryTerm>)> {
    let basis = NoiseletBasis::with_order(n)?;
    Ok(build_slm_with(&basis, ordering))
}

fn build_slm_with(basis: &NoiseletBasis, ordering: Ordering) -> (SlmMask, Vec<RecoveryTerm>) {
    let n = basis.order();
    let mut cells = Array2::<u8>::zeros((n, n + 1));
    let mut recovery = vec![None; n];
    for rep in 0..n / 2 {
        let (col_re, col_im) = match ordering {
            Ordering::Pastuszczak => (2 * rep, 2 * rep + 1),
            Ordering::Mirrored => (rep, n - 1 - rep),
        };
        let (re, im) = pair_patterns(basis, rep);
        for i in 0..n {
            cells[[i, col_re]] = re[i];
            cells[[i, col_im]] = im[i];
        }
        for term in pair_recovery(basis, rep, col_re, col_im) {
            recovery[term.row] = Some(term);
        }
    }
    cells.column_mut(n).fill(1);
    let recovery = recovery.into_iter().map(|t| t.expect("every row belongs to a pair")).collect();
    (SlmMask { cells }, recovery)
}

/// Complete description of how a scene is sampled and later reconstructed.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingPlan {
    basis: NoiseletBasis,
    b: usize,
    m: usize,
    ordering: Ordering,
    seed: u64,
    naive: bool,
    assignments: Vec<Vec<usize>>,
    slm: SlmMask,
    recovery: Vec<RecoveryTerm>,
}

impl SensingPlan {
    /// Pooled plan: each block column draws its own rows from the shared pool.
    pub fn pooled(n: usize, m: usize, b: usize, seed: u64, ordering: Ordering) -> Result<Self> {
        Self::new(n, m, b, seed, ordering, false)
    }

    /// Naive plan: every block column reuses the first assignment.
    pub fn naive(n: usize, m: usize, b: usize, seed: u64, ordering: Ordering) -> Result<Self> {
        Self::new(n, m, b, seed, ordering, true)
    }

    pub fn new(n: usize, m: usize, b: usize, seed: u64, ordering: Ordering, naive: bool) -> Result<Self> {
        let basis = NoiseletBasis::with_order(n)?;
        let assignments = if naive {
            let first = draw_rows(n, m, 1, seed)?.remove(0);
            vec![first; b.max(1)]
        } else {
            draw_rows(n, m, b, seed)?
        };
        if b == 0 {
            return Err(Error::Config("block width must be at least 1".into()));
        }
        Self::from_parts(basis, b, m, ordering, seed, naive, assignments)
    }

    fn from_parts(
        basis: NoiseletBasis,
        b: usize,
        m: usize,
        ordering: Ordering,
        seed: u64,
        naive: bool,
        assignments: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = basis.order();
        if assignments.len() != b {
            return Err(Error::Config(format!("{} assignments for block width {b}", assignments.len())));
        }
        for (k, rows) in assignments.iter().enumerate() {
            if rows.len() != m {
                return Err(Error::Config(format!("assignment {k} has {} rows, expected {m}", rows.len())));
            }
            if rows.windows(2).any(|w| w[0] >= w[1]) || rows.iter().any(|&r| r >= n) {
                return Err(Error::Config(format!("assignment {k} is not strictly increasing within 0..{n}")));
            }
            if let Some(&r) = rows.iter().find(|&&r| rows.binary_search(&basis.pair(r)).is_err()) {
                return Err(Error::Constraint(format!("assignment {k} holds row {r} without its partner")));
            }
        }
        let (slm, recovery) = build_slm_with(&basis, ordering);
        Ok(Self { basis, b, m, ordering, seed, naive, assignments, slm, recovery })
    }

    /// Same pool, ordering, seed and mode, with a different row count and
    /// block width.
    pub fn with_rows(&self, m: usize, b: usize) -> Result<Self> {
        Self::new(self.n(), m, b, self.seed, self.ordering, self.naive)
    }

    pub fn n(&self) -> usize {
        self.basis.order()
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `m / n`.
    pub fn rate(&self) -> f64 {
        self.m as f64 / self.n() as f64
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_naive(&self) -> bool {
        self.naive
    }

    pub fn basis(&self) -> &NoiseletBasis {
        &self.basis
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    /// Rows kept for a column at offset `k` inside its block.
    pub fn assignment(&self, k: usize) -> &[usize] {
        &self.assignments[k % self.b]
    }

    pub fn slm(&self) -> &SlmMask {
        &self.slm
    }

    /// Pattern column of the all-ones pattern (always the last).
    pub fn ones_pattern(&self) -> usize {
        self.n()
    }

    /// Recovery term for complex row `row`.
    pub fn recovery(&self, row: usize) -> &RecoveryTerm {
        &self.recovery[row]
    }

    pub fn recovery_terms(&self) -> &[RecoveryTerm] {
        &self.recovery
    }

    /// Pattern columns (ascending, including the all-ones column) that must
    /// be kept for block column `k`.
    pub fn retained_patterns(&self, k: usize) -> Vec<usize> {
        let mut cols: Vec<usize> = self
            .assignment(k)
            .iter()
            .flat_map(|&r| {
                let t = &self.recovery[r];
                [t.pattern_a, t.pattern_b]
            })
            .chain(std::iter::once(self.ones_pattern()))
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    /// Operator for a block of `width` columns (`width ≤ b`; narrower for the
    /// final partial block).
    pub fn block_operator(&self, width: usize) -> BlockOperator<'_> {
        assert!(width >= 1 && width <= self.b);
        BlockOperator::new(&self.basis, &self.assignments[..width])
    }

    pub fn to_document(&self) -> PlanDocument {
        PlanDocument {
            n: self.n(),
            b: self.b,
            m: self.m,
            ordering: self.ordering,
            seed: self.seed,
            naive: self.naive,
            assignments: self.assignments.clone(),
            recovery: self.recovery.clone(),
            slm_hash: self.slm.digest(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    /// Rebuilds a plan from its document, checking the stored SLM hash and
    /// recovery terms against the regenerated pool.
    pub fn from_document(doc: PlanDocument) -> Result<Self> {
        let basis = NoiseletBasis::with_order(doc.n)?;
        let plan = Self::from_parts(basis, doc.b, doc.m, doc.ordering, doc.seed, doc.naive, doc.assignments)?;
        if plan.slm.digest() != doc.slm_hash {
            return Err(Error::Format("slm_hash does not match the regenerated SLM".into()));
        }
        if plan.recovery != doc.recovery {
            return Err(Error::Format("recovery terms do not match the regenerated SLM".into()));
        }
        Ok(plan)
    }
}

/// Serialized form of a [`SensingPlan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub n: usize,
    pub b: usize,
    pub m: usize,
    pub ordering: Ordering,
    pub seed: u64,
    pub naive: bool,
    pub assignments: Vec<Vec<usize>>,
    pub recovery: Vec<RecoveryTerm>,
    pub slm_hash: String,
}

/// Matrix-free block-diagonal sensing operator `Φ = diag(Φ_1, …, Φ_b)` acting
/// on a column-major vectorized `n × b` block.
///
/// Besides the complex form, it exposes an equivalent real operator `A` used
/// by the solver: for each kept pair with representative `j`, the rows
/// `√2·Re N_j` and `√2·Im N_j`. These rows are orthonormal, so `A·Aᵀ = I`,
/// and `‖A x − a‖ = ‖Φ x − y‖` whenever `a` is the real form of a
/// conjugate-consistent `y`.
#[derive(Debug, Clone)]
pub struct BlockOperator<'a> {
    basis: &'a NoiseletBasis,
    assignments: &'a [Vec<usize>],
    reps: Vec<Vec<usize>>,
    offsets: Vec<usize>,
}

impl<'a> BlockOperator<'a> {
    pub fn new(basis: &'a NoiseletBasis, assignments: &'a [Vec<usize>]) -> Self {
        let reps: Vec<Vec<usize>> = assignments
            .iter()
            .map(|rows| rows.iter().copied().filter(|&r| basis.representative(r) == r).collect())
            .collect();
        let mut offsets = Vec::with_capacity(assignments.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for rows in assignments {
            acc += rows.len();
            offsets.push(acc);
        }
        Self { basis, assignments, reps, offsets }
    }

    pub fn height(&self) -> usize {
        self.basis.order()
    }

    pub fn width(&self) -> usize {
        self.assignments.len()
    }

    /// Length of the vectorized block, `n·width`.
    pub fn domain_len(&self) -> usize {
        self.height() * self.width()
    }

    /// Length of the stacked measurement vector (complex or real form).
    pub fn measurement_len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// `Φ·x` for a real column-major block.
    pub fn apply(&self, x: &[f64]) -> Vec<Complex64> {
        let n = self.height();
        assert_eq!(x.len(), self.domain_len());
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = buf.clone();
        let mut out = Vec::with_capacity(self.measurement_len());
        for (k, rows) in self.assignments.iter().enumerate() {
            for (dst, &v) in buf.iter_mut().zip(&x[k * n..(k + 1) * n]) {
                *dst = Complex64::new(v, 0.0);
            }
            self.basis.transform_in_place(&mut buf, &mut scratch, Direction::Forward);
            out.extend(rows.iter().map(|&r| buf[r]));
        }
        out
    }

    /// `Φᴴ·y`, complex-valued.
    pub fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.height();
        assert_eq!(y.len(), self.measurement_len());
        let mut out = vec![Complex64::new(0.0, 0.0); self.domain_len()];
        let mut scratch = vec![Complex64::new(0.0, 0.0); n];
        for (k, rows) in self.assignments.iter().enumerate() {
            let col = &mut out[k * n..(k + 1) * n];
            for (&r, &v) in rows.iter().zip(&y[self.offsets[k]..self.offsets[k + 1]]) {
                col[r] = v;
            }
            self.basis.transform_in_place(col, &mut scratch, Direction::Adjoint);
        }
        out
    }

    /// Real form of a complex measurement vector. Each pair contributes
    /// `√2·(Re, Im)` of `(y_j + conj(y_p(j)))/2`, which equals `y_j` for noise-free data.
    pub fn to_real(&self, y: &[Complex64]) -> Vec<f64> {
        assert_eq!(y.len(), self.measurement_len());
        let mut out = Vec::with_capacity(self.measurement_len());
        for (k, rows) in self.assignments.iter().enumerate() {
            let seg = &y[self.offsets[k]..self.offsets[k + 1]];
            for &rep in &self.reps[k] {
                let i = rows.binary_search(&rep).unwrap();
                let p = rows.binary_search(&self.basis.pair(rep)).unwrap();
                let z = (seg[i] + seg[p].conj()) * 0.5;
                out.push(SQRT_2 * z.re);
                out.push(SQRT_2 * z.im);
            }
        }
        out
    }

    /// Real operator `A·x`. Two real columns share one complex transform.
    pub fn apply_real(&self, x: &[f64], out: &mut [f64], work: &mut Workspace) {
        let n = self.height();
        assert_eq!(x.len(), self.domain_len());
        assert_eq!(out.len(), self.measurement_len());
        work.ensure(n);
        let Workspace { buf, scratch } = work;
        let width = self.width();
        let mut k = 0;
        while k < width {
            let second = k + 1 < width;
            let x1 = &x[k * n..(k + 1) * n];
            if second {
                let x2 = &x[(k + 1) * n..(k + 2) * n];
                for i in 0..n {
                    buf[i] = Complex64::new(x1[i], x2[i]);
                }
            } else {
                for i in 0..n {
                    buf[i] = Complex64::new(x1[i], 0.0);
                }
            }
            self.basis.transform_in_place(buf, scratch, Direction::Forward);
            // With z = N(x1 + i·x2): (N x1)_j = (z_j + conj z_p)/2, (N x2)_j = (z_j − conj z_p)/(2i).
            for (col, which) in [(k, 0), (k + 1, 1)] {
                if which == 1 && !second {
                    break;
                }
                let dst = &mut out[self.offsets[col]..self.offsets[col + 1]];
                for (slot, &rep) in self.reps[col].iter().enumerate() {
                    let zj = buf[rep];
                    let zp = buf[self.basis.pair(rep)].conj();
                    let v = if !second {
                        zj
                    } else if which == 0 {
                        (zj + zp) * 0.5
                    } else {
                        let d = (zj - zp) * 0.5;
                        Complex64::new(d.im, -d.re)
                    };
                    dst[2 * slot] = SQRT_2 * v.re;
                    dst[2 * slot + 1] = SQRT_2 * v.im;
                }
            }
            k += 2;
        }
    }

    /// Real adjoint `Aᵀ·a`.
    pub fn adjoint_real(&self, a: &[f64], out: &mut [f64], work: &mut Workspace) {
        let n = self.height();
        assert_eq!(a.len(), self.measurement_len());
        assert_eq!(out.len(), self.domain_len());
        work.ensure(n);
        let Workspace { buf, scratch } = work;
        let width = self.width();
        let mut k = 0;
        while k < width {
            let second = k + 1 < width;
            buf.fill(Complex64::new(0.0, 0.0));
            // Conjugate-symmetric spectra give real outputs; pack the second
            // column as the imaginary part.
            for (col, factor) in [(k, Complex64::new(1.0, 0.0)), (k + 1, Complex64::new(0.0, 1.0))] {
                if col == k + 1 && !second {
                    break;
                }
                let seg = &a[self.offsets[col]..self.offsets[col + 1]];
                for (slot, &rep) in self.reps[col].iter().enumerate() {
                    let u = Complex64::new(seg[2 * slot], seg[2 * slot + 1]) / SQRT_2;
                    buf[rep] += factor * u;
                    buf[self.basis.pair(rep)] += factor * u.conj();
                }
            }
            self.basis.transform_in_place(buf, scratch, Direction::Adjoint);
            for i in 0..n {
                out[k * n + i] = buf[i].re;
            }
            if second {
                for i in 0..n {
                    out[(k + 1) * n + i] = buf[i].im;
                }
            }
            k += 2;
        }
    }
}

/// Reusable transform buffers for [`BlockOperator`].
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Workspace {
    fn ensure(&mut self, n: usize) {
        if self.buf.len() != n {
            self.buf = vec![Complex64::new(0.0, 0.0); n];
            self.scratch = vec![Complex64::new(0.0, 0.0); n];
        }
    }
}
