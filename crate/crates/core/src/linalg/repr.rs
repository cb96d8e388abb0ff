use super::{OpCounter, TernaryOperator};
use crate::weightgen::{Ternary, WeightSpec};
use crate::{Error, Result};

/// Row-major `{-1, 0, +1}` matrix, one byte per entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DenseTernary {
    rows: usize,
    cols: usize,
    entries: Vec<Ternary>,
}

impl DenseTernary {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseTernary { rows, cols, entries: vec![Ternary::Zero; rows * cols] }
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<Ternary>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(DenseTernary { rows, cols, entries })
    }

    pub fn from_i8(rows: usize, cols: usize, values: &[i8]) -> Result<Self> {
        let entries = values
            .iter()
            .map(|&v| Ternary::from_i8(v).ok_or_else(|| Error::config(format!("{v} is not ternary"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(rows, cols, entries)
    }

    /// `+1` on the diagonal of a square matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = Ternary::Pos;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Ternary {
        self.entries[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Ternary) {
        self.entries[row * self.cols + col] = v;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[Ternary] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    pub fn entries(&self) -> &[Ternary] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().filter(|&&v| v != Ternary::Zero).count()
    }

    pub fn transpose(&self) -> DenseTernary {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.entries[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    /// Entries as `f32`, row-major.
    pub fn to_f32(&self) -> Vec<f32> {
        self.entries.iter().map(|v| v.as_f32()).collect()
    }
}

/// Dense-row panel kernel shared by [`DenseTernary`] and [`OnTheFly`].
#[inline]
fn dense_row_panel(
    row: &[Ternary],
    x: &[f32],
    width: usize,
    plus: &mut [f32],
    minus: &mut [f32],
    y: &mut [f32],
    counter: &mut OpCounter,
) {
    plus.fill(0.0);
    minus.fill(0.0);
    let mut nnz = 0u64;
    for (c, &v) in row.iter().enumerate() {
        let src = &x[c * width..(c + 1) * width];
        match v {
            Ternary::Pos => accumulate(plus, src),
            Ternary::Neg => accumulate(minus, src),
            Ternary::Zero => continue,
        }
        nnz += 1;
    }
    finish_row(plus, minus, y);
    counter.additions += (nnz + 1) * width as u64;
}

/// Transposed dense-row scatter: `g_row` is added to the accumulator of
/// every column holding a nonzero.
#[inline]
fn dense_row_scatter(row: &[Ternary], g_row: &[f32], plus: &mut [f32], minus: &mut [f32]) -> u64 {
    let width = g_row.len();
    let mut nnz = 0u64;
    for (c, &v) in row.iter().enumerate() {
        let dst = match v {
            Ternary::Pos => &mut plus[c * width..(c + 1) * width],
            Ternary::Neg => &mut minus[c * width..(c + 1) * width],
            Ternary::Zero => continue,
        };
        accumulate(dst, g_row);
        nnz += 1;
    }
    nnz
}

#[inline]
pub(crate) fn accumulate(acc: &mut [f32], src: &[f32]) {
    for (a, s) in acc.iter_mut().zip(src) {
        *a += s;
    }
}

#[inline]
fn finish_row(plus: &[f32], minus: &[f32], y: &mut [f32]) {
    for ((o, p), m) in y.iter_mut().zip(plus).zip(minus) {
        *o = p - m;
    }
}

impl TernaryOperator for DenseTernary {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply_panel(&self, x: &[f32], width: usize, y: &mut [f32], counter: &mut OpCounter) {
        let mut plus = vec![0.0; width];
        let mut minus = vec![0.0; width];
        for r in 0..self.rows {
            let out = &mut y[r * width..(r + 1) * width];
            dense_row_panel(self.row(r), x, width, &mut plus, &mut minus, out, counter);
        }
        counter.weight_bytes_read += (self.rows * self.cols) as u64;
    }

    fn apply_transpose_panel(&self, g: &[f32], width: usize, out: &mut [f32], counter: &mut OpCounter) {
        let mut plus = vec![0.0; self.cols * width];
        let mut minus = vec![0.0; self.cols * width];
        let mut nnz = 0;
        for r in 0..self.rows {
            nnz += dense_row_scatter(self.row(r), &g[r * width..(r + 1) * width], &mut plus, &mut minus);
        }
        finish_row(&plus, &minus, out);
        counter.additions += (nnz + self.cols as u64) * width as u64;
        counter.weight_bytes_read += (self.rows * self.cols) as u64;
    }

    fn nnz(&self) -> usize {
        DenseTernary::nnz(self)
    }
}

/// Per-row index lists of the `+1` columns (`I+`) and `-1` columns (`I-`),
/// stored CSR-style.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPairMatrix {
    rows: usize,
    cols: usize,
    plus_ptr: Vec<usize>,
    plus_idx: Vec<u32>,
    minus_ptr: Vec<usize>,
    minus_idx: Vec<u32>,
}

impl IndexPairMatrix {
    /// Builds from `(plus, minus)` column lists per row, checking that each
    /// list is strictly ascending, in range, and disjoint from its partner.
    pub fn from_rows(rows: usize, cols: usize, lists: &[(Vec<u32>, Vec<u32>)]) -> Result<Self> {
        if rows == 0 || cols == 0 || lists.len() != rows {
            return Err(Error::shape(format!("{} row lists for a {rows}x{cols} matrix", lists.len())));
        }
        let mut m = IndexPairMatrix {
            rows,
            cols,
            plus_ptr: vec![0],
            plus_idx: Vec::new(),
            minus_ptr: vec![0],
            minus_idx: Vec::new(),
        };
        for (r, (plus, minus)) in lists.iter().enumerate() {
            for list in [plus, minus] {
                if list.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::config(format!("row {r}: index list not strictly ascending")));
                }
                if list.last().is_some_and(|&c| c as usize >= cols) {
                    return Err(Error::config(format!("row {r}: column index out of range")));
                }
            }
            if plus.iter().any(|c| minus.binary_search(c).is_ok()) {
                return Err(Error::config(format!("row {r}: a column is both +1 and -1")));
            }
            m.plus_idx.extend_from_slice(plus);
            m.minus_idx.extend_from_slice(minus);
            m.plus_ptr.push(m.plus_idx.len());
            m.minus_ptr.push(m.minus_idx.len());
        }
        Ok(m)
    }

    pub fn plus(&self, row: usize) -> &[u32] {
        &self.plus_idx[self.plus_ptr[row]..self.plus_ptr[row + 1]]
    }

    pub fn minus(&self, row: usize) -> &[u32] {
        &self.minus_idx[self.minus_ptr[row]..self.minus_ptr[row + 1]]
    }

    pub fn to_dense(&self) -> DenseTernary {
        let mut d = DenseTernary::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for &c in self.plus(r) {
                d.set(r, c as usize, Ternary::Pos);
            }
            for &c in self.minus(r) {
                d.set(r, c as usize, Ternary::Neg);
            }
        }
        d
    }

    /// Bytes of index storage, 4 per stored column index.
    pub fn index_bytes(&self) -> usize {
        4 * (self.plus_idx.len() + self.minus_idx.len())
    }
}

impl From<&DenseTernary> for IndexPairMatrix {
    fn from(d: &DenseTernary) -> Self {
        let mut m = IndexPairMatrix {
            rows: d.rows,
            cols: d.cols,
            plus_ptr: Vec::with_capacity(d.rows + 1),
            plus_idx: Vec::new(),
            minus_ptr: Vec::with_capacity(d.rows + 1),
            minus_idx: Vec::new(),
        };
        m.plus_ptr.push(0);
        m.minus_ptr.push(0);
        for r in 0..d.rows {
            for (c, &v) in d.row(r).iter().enumerate() {
                match v {
                    Ternary::Pos => m.plus_idx.push(c as u32),
                    Ternary::Neg => m.minus_idx.push(c as u32),
                    Ternary::Zero => {}
                }
            }
            m.plus_ptr.push(m.plus_idx.len());
            m.minus_ptr.push(m.minus_idx.len());
        }
        m
    }
}

impl TernaryOperator for IndexPairMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply_panel(&self, x: &[f32], width: usize, y: &mut [f32], counter: &mut OpCounter) {
        let mut plus = vec![0.0; width];
        let mut minus = vec![0.0; width];
        for r in 0..self.rows {
            plus.fill(0.0);
            minus.fill(0.0);
            for &c in self.plus(r) {
                let c = c as usize;
                accumulate(&mut plus, &x[c * width..(c + 1) * width]);
            }
            for &c in self.minus(r) {
                let c = c as usize;
                accumulate(&mut minus, &x[c * width..(c + 1) * width]);
            }
            finish_row(&plus, &minus, &mut y[r * width..(r + 1) * width]);
        }
        let nnz = (self.plus_idx.len() + self.minus_idx.len()) as u64;
        counter.additions += (nnz + self.rows as u64) * width as u64;
        counter.weight_bytes_read += self.index_bytes() as u64;
    }

    fn apply_transpose_panel(&self, g: &[f32], width: usize, out: &mut [f32], counter: &mut OpCounter) {
        let mut plus = vec![0.0; self.cols * width];
        let mut minus = vec![0.0; self.cols * width];
        for r in 0..self.rows {
            let g_row = &g[r * width..(r + 1) * width];
            for &c in self.plus(r) {
                let c = c as usize;
                accumulate(&mut plus[c * width..(c + 1) * width], g_row);
            }
            for &c in self.minus(r) {
                let c = c as usize;
                accumulate(&mut minus[c * width..(c + 1) * width], g_row);
            }
        }
        finish_row(&plus, &minus, out);
        let nnz = (self.plus_idx.len() + self.minus_idx.len()) as u64;
        counter.additions += (nnz + self.cols as u64) * width as u64;
        counter.weight_bytes_read += self.index_bytes() as u64;
    }

    fn nnz(&self) -> usize {
        self.plus_idx.len() + self.minus_idx.len()
    }
}

/// Two bitmasks per row: bit `c` of `plus` is set iff entry `c` is `+1`,
/// likewise `minus` for `-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBitplanes {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    plus: Vec<u64>,
    minus: Vec<u64>,
}

impl PackedBitplanes {
    pub fn from_masks(rows: usize, cols: usize, plus: Vec<u64>, minus: Vec<u64>) -> Result<Self> {
        let words_per_row = cols.div_ceil(64);
        if rows == 0 || cols == 0 || plus.len() != rows * words_per_row || minus.len() != plus.len() {
            return Err(Error::shape(format!("mask lengths do not fit a {rows}x{cols} matrix")));
        }
        let tail = if cols.is_multiple_of(64) { u64::MAX } else { (1u64 << (cols % 64)) - 1 };
        for r in 0..rows {
            for w in 0..words_per_row {
                let (p, m) = (plus[r * words_per_row + w], minus[r * words_per_row + w]);
                if p & m != 0 {
                    return Err(Error::config(format!("row {r}: overlapping +1 and -1 bits")));
                }
                if w == words_per_row - 1 && (p | m) & !tail != 0 {
                    return Err(Error::config(format!("row {r}: bits set beyond column {cols}")));
                }
            }
        }
        Ok(PackedBitplanes { rows, cols, words_per_row, plus, minus })
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn plus_mask(&self, row: usize) -> &[u64] {
        &self.plus[row * self.words_per_row..(row + 1) * self.words_per_row]
    }

    pub fn minus_mask(&self, row: usize) -> &[u64] {
        &self.minus[row * self.words_per_row..(row + 1) * self.words_per_row]
    }

    pub fn to_dense(&self) -> DenseTernary {
        let mut d = DenseTernary::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for_each_bit(self.plus_mask(r), |c| d.set(r, c, Ternary::Pos));
            for_each_bit(self.minus_mask(r), |c| d.set(r, c, Ternary::Neg));
        }
        d
    }

    fn mask_bytes(&self) -> usize {
        16 * self.plus.len()
    }
}

/// Calls `f` on every set bit position, ascending.
#[inline]
fn for_each_bit(mask: &[u64], mut f: impl FnMut(usize)) {
    for (w, &word) in mask.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            f(w * 64 + bits.trailing_zeros() as usize);
            bits &= bits - 1;
        }
    }
}

impl From<&DenseTernary> for PackedBitplanes {
    fn from(d: &DenseTernary) -> Self {
        let words_per_row = d.cols.div_ceil(64);
        let mut plus = vec![0u64; d.rows * words_per_row];
        let mut minus = vec![0u64; d.rows * words_per_row];
        for r in 0..d.rows {
            for (c, &v) in d.row(r).iter().enumerate() {
                let bit = 1u64 << (c % 64);
                let at = r * words_per_row + c / 64;
                match v {
                    Ternary::Pos => plus[at] |= bit,
                    Ternary::Neg => minus[at] |= bit,
                    Ternary::Zero => {}
                }
            }
        }
        PackedBitplanes { rows: d.rows, cols: d.cols, words_per_row, plus, minus }
    }
}

impl From<&IndexPairMatrix> for PackedBitplanes {
    fn from(m: &IndexPairMatrix) -> Self {
        let words_per_row = m.cols.div_ceil(64);
        let mut plus = vec![0u64; m.rows * words_per_row];
        let mut minus = vec![0u64; m.rows * words_per_row];
        for r in 0..m.rows {
            for &c in m.plus(r) {
                plus[r * words_per_row + c as usize / 64] |= 1 << (c % 64);
            }
            for &c in m.minus(r) {
                minus[r * words_per_row + c as usize / 64] |= 1 << (c % 64);
            }
        }
        PackedBitplanes { rows: m.rows, cols: m.cols, words_per_row, plus, minus }
    }
}

impl From<&PackedBitplanes> for IndexPairMatrix {
    fn from(b: &PackedBitplanes) -> Self {
        IndexPairMatrix::from(&b.to_dense())
    }
}

impl From<&IndexPairMatrix> for DenseTernary {
    fn from(m: &IndexPairMatrix) -> Self {
        m.to_dense()
    }
}

impl From<&PackedBitplanes> for DenseTernary {
    fn from(b: &PackedBitplanes) -> Self {
        b.to_dense()
    }
}

impl TernaryOperator for PackedBitplanes {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply_panel(&self, x: &[f32], width: usize, y: &mut [f32], counter: &mut OpCounter) {
        let mut plus = vec![0.0; width];
        let mut minus = vec![0.0; width];
        let mut nnz = 0u64;
        for r in 0..self.rows {
            plus.fill(0.0);
            minus.fill(0.0);
            for_each_bit(self.plus_mask(r), |c| {
                accumulate(&mut plus, &x[c * width..(c + 1) * width]);
                nnz += 1;
            });
            for_each_bit(self.minus_mask(r), |c| {
                accumulate(&mut minus, &x[c * width..(c + 1) * width]);
                nnz += 1;
            });
            finish_row(&plus, &minus, &mut y[r * width..(r + 1) * width]);
        }
        counter.additions += (nnz + self.rows as u64) * width as u64;
        counter.weight_bytes_read += self.mask_bytes() as u64;
    }

    fn apply_transpose_panel(&self, g: &[f32], width: usize, out: &mut [f32], counter: &mut OpCounter) {
        let mut plus = vec![0.0; self.cols * width];
        let mut minus = vec![0.0; self.cols * width];
        let mut nnz = 0u64;
        for r in 0..self.rows {
            let g_row = &g[r * width..(r + 1) * width];
            for_each_bit(self.plus_mask(r), |c| {
                accumulate(&mut plus[c * width..(c + 1) * width], g_row);
                nnz += 1;
            });
            for_each_bit(self.minus_mask(r), |c| {
                accumulate(&mut minus[c * width..(c + 1) * width], g_row);
                nnz += 1;
            });
        }
        finish_row(&plus, &minus, out);
        counter.additions += (nnz + self.cols as u64) * width as u64;
        counter.weight_bytes_read += self.mask_bytes() as u64;
    }

    fn nnz(&self) -> usize {
        self.plus.iter().chain(&self.minus).map(|w| w.count_ones() as usize).sum()
    }
}

/// A matrix that is never materialized: each row is regenerated from its
/// [`WeightSpec`] right before it is consumed. Reads no weight memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnTheFly {
    spec: WeightSpec,
}

impl OnTheFly {
    pub fn new(spec: WeightSpec) -> Result<Self> {
        spec.validate()?;
        Ok(OnTheFly { spec })
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }
}

impl TernaryOperator for OnTheFly {
    fn rows(&self) -> usize {
        self.spec.rows
    }

    fn cols(&self) -> usize {
        self.spec.cols
    }

    fn apply_panel(&self, x: &[f32], width: usize, y: &mut [f32], counter: &mut OpCounter) {
        let mut row = vec![Ternary::Zero; self.spec.cols];
        let mut plus = vec![0.0; width];
        let mut minus = vec![0.0; width];
        for r in 0..self.spec.rows {
            self.spec.fill_row(r, &mut row);
            let out = &mut y[r * width..(r + 1) * width];
            dense_row_panel(&row, x, width, &mut plus, &mut minus, out, counter);
        }
    }

    fn apply_transpose_panel(&self, g: &[f32], width: usize, out: &mut [f32], counter: &mut OpCounter) {
        let cols = self.spec.cols;
        let mut row = vec![Ternary::Zero; cols];
        let mut plus = vec![0.0; cols * width];
        let mut minus = vec![0.0; cols * width];
        let mut nnz = 0;
        for r in 0..self.spec.rows {
            self.spec.fill_row(r, &mut row);
            nnz += dense_row_scatter(&row, &g[r * width..(r + 1) * width], &mut plus, &mut minus);
        }
        finish_row(&plus, &minus, out);
        counter.additions += (nnz + cols as u64) * width as u64;
    }

    fn nnz(&self) -> usize {
        let mut row = vec![Ternary::Zero; self.spec.cols];
        (0..self.spec.rows)
            .map(|r| {
                self.spec.fill_row(r, &mut row);
                row.iter().filter(|&&v| v != Ternary::Zero).count()
            })
            .sum()
    }
}
