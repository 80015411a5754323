//! Discrete noiselet bases and their binary {0,1} representation.
//!
//! The order-`2L` matrix is built from the order-`L` one by the two-term
//! noiselet recursion
//!
//! ```text
//! N_2L[2k + a, c·L + l] = A[a, c] · N_L[k, l],   A = ½·[[1−i, 1+i], [1+i, 1−i]]
//! ```
//!
//! starting from `N_1 = [1]`. Every entry is an eighth root of unity scaled by
//! `1/√n`, so the matrix is exactly unitary and its phases can be computed with
//! integer arithmetic (see [`NoiseletBasis::phase`]).
//!
//! Rows `j` and `n − 1 − j` (zero-based) are elementwise conjugates. For real
//! (nonnegative) scenes this means one binary pattern per complex row, plus a
//! single all-ones pattern, is enough to recover every complex coefficient.

use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER_EXPONENT: u32 = 16;

/// Largest order for which [`conjugate_pair_map`] runs the exhaustive search.
pub const MAX_SEARCH_EXPONENT: u32 = 12;

/// Direction of a noiselet transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `y = N·x`
    Forward,
    /// `y = Nᴴ·x`
    Adjoint,
}

/// An order-`2^q` noiselet basis with its conjugate-pair map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseletBasis {
    q: u32,
    n: usize,
    pair_map: Vec<usize>,
}

impl NoiseletBasis {
    pub fn new(q: u32) -> Result<Self> {
        check_exponent(q)?;
        let n = 1usize << q;
        let pair_map = if q <= MAX_SEARCH_EXPONENT {
            conjugate_pair_map(q)?
        } else {
            (0..n).map(|j| n - 1 - j).collect()
        };
        Ok(Self { q, n, pair_map })
    }

    /// Basis whose order equals `n`, which must be a power of two.
    pub fn with_order(n: usize) -> Result<Self> {
        Self::new(exponent_of(n)?)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn order_exponent(&self) -> u32 {
        self.q
    }

    /// Zero-based conjugate partner of row `j`.
    pub fn pair(&self, j: usize) -> usize {
        self.pair_map[j]
    }

    pub fn pair_map(&self) -> &[usize] {
        &self.pair_map
    }

    /// Pair representative: the smaller index of `{j, pair(j)}`.
    pub fn representative(&self, j: usize) -> usize {
        j.min(self.pair_map[j])
    }

    /// Phase of entry `(row, col)` in eighth turns: the entry equals
    /// `exp(iπ·phase/4) / √n`.
    ///
    /// Each recursion level contributes `−1` when the row bit chosen at that
    /// level equals the column bit it splits on, `+1` otherwise; row bit `t`
    /// pairs with column bit `q − 1 − t`.
    pub fn phase(&self, row: usize, col: usize) -> u8 {
        let q = self.q;
        let rev = col.reverse_bits() >> (usize::BITS - q);
        let mask = self.n - 1;
        let agree = (!(row ^ rev) & mask).count_ones() as i64;
        (q as i64 - 2 * agree).rem_euclid(8) as u8
    }

    /// Entry `(row, col)` computed from [`phase`](Self::phase).
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        let theta = std::f64::consts::FRAC_PI_4 * self.phase(row, col) as f64;
        Complex64::from_polar(1.0 / (self.n as f64).sqrt(), theta)
    }

    /// In-place transform. `scratch` must have the same length as `data`.
    pub fn transform_in_place(
        &self,
        data: &mut [Complex64],
        scratch: &mut [Complex64],
        direction: Direction,
    ) {
        assert_eq!(data.len(), self.n, "transform length must equal basis order");
        assert_eq!(scratch.len(), self.n);
        match direction {
            Direction::Forward => forward_butterflies(data, scratch),
            Direction::Adjoint => adjoint_butterflies(data, scratch),
        }
    }

    pub fn transform(&self, x: &[Complex64], direction: Direction) -> Result<Vec<Complex64>> {
        if x.len() != self.n {
            return Err(Error::Size(format!(
                "vector of length {} for basis of order {}",
                x.len(),
                self.n
            )));
        }
        let mut data = x.to_vec();
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.n];
        self.transform_in_place(&mut data, &mut scratch, direction);
        Ok(data)
    }
}

fn check_exponent(q: u32) -> Result<()> {
    if !(1..=MAX_ORDER_EXPONENT).contains(&q) {
        return Err(Error::Size(format!(
            "noiselet order exponent {q} outside 1..={MAX_ORDER_EXPONENT}"
        )));
    }
    Ok(())
}

/// `q` such that `n = 2^q`, or a size error.
pub fn exponent_of(n: usize) -> Result<u32> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Size(format!("{n} is not a power of two ≥ 2")));
    }
    let q = n.trailing_zeros();
    check_exponent(q)?;
    Ok(q)
}

// Butterfly for one recursion level:
//   out[2k]   = ((1−i)·z0 + (1+i)·z1)/2 = s − i·d
//   out[2k+1] = ((1+i)·z0 + (1−i)·z1)/2 = s + i·d
// with s = (z0+z1)/2, d = (z0−z1)/2.
fn forward_butterflies(data: &mut [Complex64], scratch: &mut [Complex64]) {
    let n = data.len();
    let mut half = 1;
    let mut in_data = true;
    while half < n {
        let (src, dst): (&[Complex64], &mut [Complex64]) = if in_data {
            (&*data, &mut *scratch)
        } else {
            (&*scratch, &mut *data)
        };
        let span = 2 * half;
        for g in (0..n).step_by(span) {
            let (z0, z1) = src[g..g + span].split_at(half);
            let out = &mut dst[g..g + span];
            for k in 0..half {
                let s = (z0[k] + z1[k]) * 0.5;
                let d = (z0[k] - z1[k]) * 0.5;
                let id = Complex64::new(-d.im, d.re);
                out[2 * k] = s - id;
                out[2 * k + 1] = s + id;
            }
        }
        in_data = !in_data;
        half = span;
    }
    if !in_data {
        data.copy_from_slice(scratch);
    }
}

// Inverse of one level, using conj(A):
//   u0[k] = ((1+i)·y0 + (1−i)·y1)/2 = s + i·d
//   u1[k] = ((1−i)·y0 + (1+i)·y1)/2 = s − i·d
// with y0 = in[2k], y1 = in[2k+1].
fn adjoint_butterflies(data: &mut [Complex64], scratch: &mut [Complex64]) {
    let n = data.len();
    let mut half = n / 2;
    let mut in_data = true;
    while half >= 1 {
        let (src, dst): (&[Complex64], &mut [Complex64]) = if in_data {
            (&*data, &mut *scratch)
        } else {
            (&*scratch, &mut *data)
        };
        let span = 2 * half;
        for g in (0..n).step_by(span) {
            let input = &src[g..g + span];
            let (u0, u1) = dst[g..g + span].split_at_mut(half);
            for k in 0..half {
                let y0 = input[2 * k];
                let y1 = input[2 * k + 1];
                let s = (y0 + y1) * 0.5;
                let d = (y0 - y1) * 0.5;
                let id = Complex64::new(-d.im, d.re);
                u0[k] = s + id;
                u1[k] = s - id;
            }
        }
        in_data = !in_data;
        half /= 2;
    }
    if !in_data {
        data.copy_from_slice(scratch);
    }
}

/// Dense noiselet matrix of order `2^q`, built directly from the recursion.
pub fn noiselet_matrix(q: u32) -> Result<Array2<Complex64>> {
    check_exponent(q)?;
    let half = Complex64::new(0.5, 0.0);
    let a = [
        [Complex64::new(1.0, -1.0) * half, Complex64::new(1.0, 1.0) * half],
        [Complex64::new(1.0, 1.0) * half, Complex64::new(1.0, -1.0) * half],
    ];
    let mut m = Array2::from_elem((1, 1), Complex64::new(1.0, 0.0));
    for _ in 0..q {
        let l = m.nrows();
        let mut next = Array2::zeros((2 * l, 2 * l));
        for k in 0..l {
            for (ai, arow) in a.iter().enumerate() {
                for (ci, coef) in arow.iter().enumerate() {
                    for col in 0..l {
                        next[[2 * k + ai, ci * l + col]] = coef * m[[k, col]];
                    }
                }
            }
        }
        m = next;
    }
    Ok(m)
}

/// Applies `N` or `Nᴴ` to `x` in `O(n log n)`.
pub fn fast_noiselet(x: &[Complex64], direction: Direction) -> Result<Vec<Complex64>> {
    let basis = NoiseletBasis::with_order(x.len()).or_else(|e| {
        if x.len() == 1 {
            Err(Error::Size("length-1 transform is the identity; use q ≥ 1".into()))
        } else {
            Err(e)
        }
    })?;
    basis.transform(x, direction)
}

/// Finds each row's conjugate partner by exhaustive search over the rows of
/// [`noiselet_matrix`].
///
/// Entries are exact dyadic values, so rows are matched on the bit patterns
/// of their entries. Fails if some row has no conjugate partner, or if the
/// matching is not a fixed-point-free involution.
pub fn conjugate_pair_map(q: u32) -> Result<Vec<usize>> {
    check_exponent(q)?;
    if q > MAX_SEARCH_EXPONENT {
        return Err(Error::Size(format!(
            "exhaustive pair search limited to q ≤ {MAX_SEARCH_EXPONENT}"
        )));
    }
    let m = noiselet_matrix(q)?;
    let n = m.nrows();
    let key = |conjugate: bool, j: usize| -> Vec<u64> {
        m.row(j)
            .iter()
            .flat_map(|z| {
                let im = if conjugate { -z.im } else { z.im };
                // Normalise −0.0 so it matches +0.0.
                [(z.re + 0.0).to_bits(), (im + 0.0).to_bits()]
            })
            .collect()
    };
    let index: HashMap<Vec<u64>, usize> = (0..n).map(|j| (key(false, j), j)).collect();
    let mut map = Vec::with_capacity(n);
    for j in 0..n {
        let partner = index.get(&key(true, j)).copied().ok_or_else(|| {
            Error::Convention(format!("row {j} of order-{n} noiselet has no conjugate row"))
        })?;
        map.push(partner);
    }
    for (j, &p) in map.iter().enumerate() {
        if p == j || map[p] != j {
            return Err(Error::Convention(format!(
                "pairing is not a fixed-point-free involution at row {j}"
            )));
        }
    }
    Ok(map)
}

/// Affine recovery of one complex coefficient from binary measurements:
/// `y[row] = coef_a·b[pattern_a] + coef_b·b[pattern_b] + coef_ones·b[ones]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTerm {
    pub row: usize,
    pub pattern_a: usize,
    pub pattern_b: usize,
    #[serde(with = "complex_pair")]
    pub coef_a: Complex64,
    #[serde(with = "complex_pair")]
    pub coef_b: Complex64,
    #[serde(with = "complex_pair")]
    pub coef_ones: Complex64,
}

impl RecoveryTerm {
    pub fn apply(&self, a: f64, b: f64, ones: f64) -> Complex64 {
        self.coef_a * a + self.coef_b * b + self.coef_ones * ones
    }
}

mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

/// Binary patterns for a pair-closed set of noiselet rows.
///
/// For a pair `{j, p(j)}` with representative `j`, let `ω = 1` when `q` is odd
/// and `ω = e^{iπ/4}` when `q` is even. Every component of `ω·N_j` is then
/// `±1/√(2n)`, so the sign patterns of its real and imaginary parts are
/// binary masks `B_re`, `B_im`, and
///
/// ```text
/// ω·⟨N_j, x⟩ = (2⟨B_re, x⟩ − S + i·(2⟨B_im, x⟩ − S)) / √(2n),   S = ⟨1, x⟩
/// ```
///
/// while `⟨N_{p(j)}, x⟩` is its conjugate for real `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryPatternSet {
    pub n: usize,
    /// `k × n` matrix over {0,1}; the last row is all ones when
    /// `includes_ones_row` is set.
    pub patterns: Array2<u8>,
    pub includes_ones_row: bool,
    /// Complex row each non-ones pattern derives from.
    pub source_rows: Vec<usize>,
    /// One term per complex row in the set, in ascending row order.
    pub recovery: Vec<RecoveryTerm>,
}

impl BinaryPatternSet {
    /// Index of the all-ones pattern.
    pub fn ones_index(&self) -> Option<usize> {
        self.includes_ones_row.then(|| self.patterns.nrows() - 1)
    }

    /// Binary measurements `P·x` for a scene column `x`.
    pub fn measure(&self, x: &[f64]) -> Vec<f64> {
        self.patterns
            .rows()
            .into_iter()
            .map(|p| p.iter().zip(x).map(|(&b, &v)| b as f64 * v).sum())
            .collect()
    }

    /// Recovers `(row, ⟨N_row, x⟩)` for every row in the set.
    pub fn recover(&self, measurements: &[f64]) -> Result<Vec<(usize, Complex64)>> {
        let ones = self
            .ones_index()
            .ok_or_else(|| Error::Conversion("pattern set lacks the all-ones row".into()))?;
        if measurements.len() != self.patterns.nrows() {
            return Err(Error::Shape(format!(
                "{} measurements for {} patterns",
                measurements.len(),
                self.patterns.nrows()
            )));
        }
        Ok(self
            .recovery
            .iter()
            .map(|t| {
                let y = t.apply(
                    measurements[t.pattern_a],
                    measurements[t.pattern_b],
                    measurements[ones],
                );
                (t.row, y)
            })
            .collect())
    }
}

/// Real-part and imaginary-part sign patterns of `ω·N_rep`.
pub fn pair_patterns(basis: &NoiseletBasis, rep: usize) -> (Vec<u8>, Vec<u8>) {
    let offset = rotation_offset(basis);
    let n = basis.order();
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    for col in 0..n {
        let ph = (basis.phase(rep, col) + offset) % 8;
        // Odd eighth-turn phases: cos > 0 for {1, 7}, sin > 0 for {1, 3}.
        re.push(u8::from(ph == 1 || ph == 7));
        im.push(u8::from(ph == 1 || ph == 3));
    }
    (re, im)
}

/// Recovery terms for pair `{rep, pair(rep)}` given where its real-part
/// pattern, imaginary-part pattern and the all-ones pattern live.
pub fn pair_recovery(
    basis: &NoiseletBasis,
    rep: usize,
    pattern_re: usize,
    pattern_im: usize,
) -> [RecoveryTerm; 2] {
    let n = basis.order() as f64;
    let c = 1.0 / (2.0 * n).sqrt();
    let omega_conj = if rotation_offset(basis) == 1 {
        Complex64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2)
    } else {
        Complex64::new(1.0, 0.0)
    };
    let coef_a = omega_conj * (2.0 * c);
    let coef_b = omega_conj * Complex64::new(0.0, 2.0 * c);
    let coef_ones = omega_conj * Complex64::new(-c, -c);
    let main = RecoveryTerm {
        row: rep,
        pattern_a: pattern_re,
        pattern_b: pattern_im,
        coef_a,
        coef_b,
        coef_ones,
    };
    let partner = RecoveryTerm {
        row: basis.pair(rep),
        coef_a: coef_a.conj(),
        coef_b: coef_b.conj(),
        coef_ones: coef_ones.conj(),
        ..main
    };
    [main, partner]
}

fn rotation_offset(basis: &NoiseletBasis) -> u8 {
    u8::from(basis.order_exponent() % 2 == 0)
}

/// Binary patterns (plus the all-ones row) for a pair-closed row set.
///
/// Patterns are emitted pair by pair in ascending representative order:
/// real-part pattern, then imaginary-part pattern, then the all-ones row last.
pub fn binarize(rows: &[usize], q: u32) -> Result<BinaryPatternSet> {
    let basis = NoiseletBasis::new(q)?;
    binarize_with(&basis, rows)
}

pub fn binarize_with(basis: &NoiseletBasis, rows: &[usize]) -> Result<BinaryPatternSet> {
    let n = basis.order();
    let mut set: Vec<usize> = rows.to_vec();
    set.sort_unstable();
    set.dedup();
    if set.len() != rows.len() {
        return Err(Error::Constraint("duplicate rows".into()));
    }
    if let Some(&bad) = set.iter().find(|&&r| r >= n) {
        return Err(Error::Size(format!("row {bad} out of range for order {n}")));
    }
    if let Some(&bad) = set.iter().find(|&&r| set.binary_search(&basis.pair(r)).is_err()) {
        return Err(Error::Constraint(format!(
            "row {bad} present without its partner {}",
            basis.pair(bad)
        )));
    }
    let reps: Vec<usize> = set
        .iter()
        .copied()
        .filter(|&r| basis.representative(r) == r)
        .collect();

    let k = 2 * reps.len() + 1;
    let mut patterns = Array2::<u8>::zeros((k, n));
    let mut source_rows = Vec::with_capacity(k - 1);
    let mut recovery = Vec::with_capacity(set.len());
    for (i, &rep) in reps.iter().enumerate() {
        let (re, im) = pair_patterns(basis, rep);
        for col in 0..n {
            patterns[[2 * i, col]] = re[col];
            patterns[[2 * i + 1, col]] = im[col];
        }
        source_rows.push(rep);
        source_rows.push(basis.pair(rep));
        recovery.extend(pair_recovery(basis, rep, 2 * i, 2 * i + 1));
    }
    patterns.row_mut(k - 1).fill(1);
    recovery.sort_by_key(|t| t.row);
    Ok(BinaryPatternSet {
        n,
        patterns,
        includes_ones_row: true,
        source_rows,
        recovery,
    })
}
