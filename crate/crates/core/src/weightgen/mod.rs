//! Deterministic synthesis of sparse random ternary matrices.
//!
//! A matrix is never stored: a [`WeightSpec`] (seed, layer tag, shape,
//! threshold and generator kind) fully determines it, and every entry can be
//! recomputed on demand. Uniform samples in `[-1, 1)` are drawn from a
//! SplitMix64-style mixer and thresholded, so the threshold `t` is also the
//! expected fraction of zeros.
//!
//! Three generators are provided:
//!
//! - [`Generator::SequentialStream`]: a counter-addressed stream, entry
//!   `(r, c)` is word `r * cols + c`.
//! - [`Generator::CoordinateHash`]: a hash of the entry coordinates.
//! - [`Generator::StructuredNofM`]: exactly `n` nonzeros in every group of `m`
//!   consecutive columns, the layout sparse accelerators expect.

mod format;

pub use format::{read_tern1, write_tern1, write_text, TERN1_HEADER_LEN, TERN1_MAGIC};

use serde::{Deserialize, Serialize};

use crate::linalg::DenseTernary;
use crate::{Error, Result};

/// Golden-ratio increment of the SplitMix64 counter.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
/// Column multiplier for coordinate hashing.
pub const COL_MULTIPLIER: u64 = 0xC2B2_AE3D_27D4_EB4F;

/// SplitMix64 output finalizer. Bijective on `u64`, maps 0 to 0.
#[inline]
pub fn mix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Word `index` of the SplitMix64 stream started at `seed`, without iterating.
#[inline]
pub fn stream_word(seed: u64, index: u64) -> u64 {
    mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Maps the top 53 bits of `word` onto `[-1, 1)`. Exact in `f64`.
#[inline]
pub fn word_to_uniform(word: u64) -> f64 {
    let u = (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * u - 1.0
}

/// Threshold rule: zero when `|w| <= t`, otherwise the sign of `w`.
#[inline]
pub fn ternarize(w: f64, t: f64) -> Ternary {
    if w.abs() <= t {
        Ternary::Zero
    } else if w > 0.0 {
        Ternary::Pos
    } else {
        Ternary::Neg
    }
}

/// Expected zero fraction of a matrix thresholded at `t`.
///
/// Uniform samples on `[-1, 1]` fall inside `[-t, t]` with probability `t`,
/// so this is the identity; it exists to name the contract that the
/// statistical tests check.
pub fn expected_sparsity(t: f64) -> f64 {
    t
}

/// A weight in `{-1, 0, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(i8)]
pub enum Ternary {
    Neg = -1,
    #[default]
    Zero = 0,
    Pos = 1,
}

impl Ternary {
    #[inline]
    pub fn as_i8(self) -> i8 {
        self as i8
    }

    #[inline]
    pub fn as_f32(self) -> f32 {
        self as i8 as f32
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            -1 => Some(Ternary::Neg),
            0 => Some(Ternary::Zero),
            1 => Some(Ternary::Pos),
            _ => None,
        }
    }

    /// Text-format character: `-`, `0` or `+`.
    pub fn symbol(self) -> char {
        match self {
            Ternary::Neg => '-',
            Ternary::Zero => '0',
            Ternary::Pos => '+',
        }
    }
}

/// How the raw 64-bit word behind each entry is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    #[serde(alias = "stream")]
    SequentialStream,
    #[serde(alias = "hash")]
    CoordinateHash,
    #[serde(rename = "structured_n_of_m", alias = "structured")]
    StructuredNofM { n: usize, m: usize },
}

impl Generator {
    /// Identifier used in the binary file header.
    pub fn id(self) -> u64 {
        match self {
            Generator::SequentialStream => 0,
            Generator::CoordinateHash => 1,
            Generator::StructuredNofM { .. } => 2,
        }
    }

    /// `(n, m)` for the structured generator, `(0, 0)` otherwise.
    pub fn n_of_m(self) -> (usize, usize) {
        match self {
            Generator::StructuredNofM { n, m } => (n, m),
            _ => (0, 0),
        }
    }
}

/// Everything needed to regenerate one ternary matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub seed: u64,
    /// Distinguishes layers that share a run-level seed.
    pub layer_tag: u64,
    /// Output channels.
    pub rows: usize,
    /// Input channels.
    pub cols: usize,
    /// Threshold `t`, the expected zero fraction. Ignored by the N:M generator.
    pub threshold: f64,
    pub generator: Generator,
}

impl WeightSpec {
    pub fn new(
        seed: u64,
        layer_tag: u64,
        rows: usize,
        cols: usize,
        threshold: f64,
        generator: Generator,
    ) -> Result<Self> {
        let spec = WeightSpec { seed, layer_tag, rows, cols, threshold, generator };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config(format!(
                "matrix shape must be positive, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if let Generator::StructuredNofM { n, m } = self.generator {
            if m == 0 || n > m {
                return Err(Error::config(format!("invalid N:M pattern {n}:{m}")));
            }
            if !self.cols.is_multiple_of(m) {
                return Err(Error::config(format!(
                    "N:M pattern {n}:{m} needs cols divisible by {m}, got {}",
                    self.cols
                )));
            }
        }
        Ok(())
    }

    /// Number of entries of the matrix.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn stream_seed(&self) -> u64 {
        self.seed ^ mix64(self.layer_tag)
    }

    /// Raw word of a sequential-stream entry. Also the ranking key of the
    /// structured generator.
    #[inline]
    fn sequential_word(&self, row: usize, col: usize) -> u64 {
        stream_word(self.stream_seed(), (row * self.cols + col) as u64)
    }

    /// Coordinate hash of entry `(row, col)`.
    pub fn coord_word(&self, row: usize, col: usize) -> Result<u64> {
        self.check_index(row, col)?;
        Ok(coord_hash(mix64(self.seed ^ self.layer_tag), row, col))
    }

    fn check_index(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::shape(format!(
                "entry ({row}, {col}) outside a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    /// Computes one entry in isolation.
    pub fn entry(&self, row: usize, col: usize) -> Result<Ternary> {
        self.check_index(row, col)?;
        Ok(match self.generator {
            Generator::SequentialStream => {
                ternarize(word_to_uniform(self.sequential_word(row, col)), self.threshold)
            }
            Generator::CoordinateHash => {
                let key = mix64(self.seed ^ self.layer_tag);
                ternarize(word_to_uniform(coord_hash(key, row, col)), self.threshold)
            }
            Generator::StructuredNofM { n, m } => {
                let start = col - col % m;
                let mut group = vec![Ternary::Zero; m];
                self.structured_group(row, start, n, &mut group, &mut Vec::new());
                group[col - start]
            }
        })
    }

    /// Writes row `row` into `out` (length `cols`), entries ascending.
    ///
    /// Used by the on-the-fly kernels; only the row buffer is touched.
    pub fn fill_row(&self, row: usize, out: &mut [Ternary]) {
        debug_assert_eq!(out.len(), self.cols);
        match self.generator {
            Generator::SequentialStream => {
                let seed = self.stream_seed();
                let base = (row * self.cols) as u64;
                for (c, slot) in out.iter_mut().enumerate() {
                    let w = stream_word(seed, base + c as u64);
                    *slot = ternarize(word_to_uniform(w), self.threshold);
                }
            }
            Generator::CoordinateHash => {
                let key = mix64(self.seed ^ self.layer_tag);
                for (c, slot) in out.iter_mut().enumerate() {
                    *slot = ternarize(word_to_uniform(coord_hash(key, row, c)), self.threshold);
                }
            }
            Generator::StructuredNofM { n, m } => {
                let mut scratch = Vec::with_capacity(m);
                for start in (0..self.cols).step_by(m) {
                    self.structured_group(row, start, n, &mut out[start..start + m], &mut scratch);
                }
            }
        }
    }

    /// Picks the `n` smallest raw words of one `m`-column group; the low bit
    /// of each chosen word gives its sign.
    fn structured_group(
        &self,
        row: usize,
        start: usize,
        n: usize,
        out: &mut [Ternary],
        scratch: &mut Vec<(u64, usize)>,
    ) {
        scratch.clear();
        scratch.extend((0..out.len()).map(|j| (self.sequential_word(row, start + j), j)));
        // tuple order breaks ties on the lower column
        scratch.sort_unstable();
        out.fill(Ternary::Zero);
        for &(word, j) in scratch.iter().take(n) {
            out[j] = if word & 1 == 1 { Ternary::Pos } else { Ternary::Neg };
        }
    }
}

#[inline]
fn coord_hash(key: u64, row: usize, col: usize) -> u64 {
    mix64(
        key ^ (row as u64).wrapping_mul(GOLDEN_GAMMA) ^ (col as u64).wrapping_mul(COL_MULTIPLIER),
    )
}

/// Materializes the matrix described by `spec`.
pub fn generate(spec: &WeightSpec) -> Result<DenseTernary> {
    spec.validate()?;
    let mut entries = vec![Ternary::Zero; spec.len()];
    for (r, row) in entries.chunks_mut(spec.cols).enumerate() {
        spec.fill_row(r, row);
    }
    DenseTernary::from_entries(spec.rows, spec.cols, entries)
}

/// Zero fraction and fraction of `+1` among the nonzeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatrixStats {
    pub entries: usize,
    pub zeros: usize,
    pub plus: usize,
    pub minus: usize,
    pub sparsity: f64,
    pub plus_fraction: f64,
}

impl MatrixStats {
    pub fn of(matrix: &DenseTernary) -> Self {
        let (mut zeros, mut plus, mut minus) = (0, 0, 0);
        for &v in matrix.entries() {
            match v {
                Ternary::Zero => zeros += 1,
                Ternary::Pos => plus += 1,
                Ternary::Neg => minus += 1,
            }
        }
        let entries = zeros + plus + minus;
        let nnz = plus + minus;
        MatrixStats {
            entries,
            zeros,
            plus,
            minus,
            sparsity: zeros as f64 / entries as f64,
            plus_fraction: if nnz == 0 { 0.0 } else { plus as f64 / nnz as f64 },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(rows: usize, cols: usize, t: f64, generator: Generator) -> WeightSpec {
        WeightSpec::new(7, 3, rows, cols, t, generator).unwrap()
    }

    #[test]
    fn mix64_fixed_points() {
        assert_eq!(mix64(0), 0);
        // values from an arbitrary-precision evaluation of the finalizer
        assert_eq!(mix64(1), 0x5692_161D_100B_05E5);
        assert_eq!(mix64(GOLDEN_GAMMA), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn mix64_bit_balance() {
        let mut counts = [0u32; 64];
        for x in 0..1_000_000u64 {
            let z = mix64(x);
            for (b, c) in counts.iter_mut().enumerate() {
                *c += ((z >> b) & 1) as u32;
            }
        }
        for (b, &c) in counts.iter().enumerate() {
            let frac = c as f64 / 1e6;
            assert!((0.49..=0.51).contains(&frac), "bit {b}: {frac}");
        }
    }

    #[test]
    fn stream_words_for_seed_zero() {
        assert_eq!(stream_word(0, 0), mix64(GOLDEN_GAMMA));
        let expected = [
            0xE220_A839_7B1D_CDAF,
            0x6E78_9E6A_A1B9_65F4,
            0x06C4_5D18_8009_454F,
            0xF88B_B8A8_724C_81EC,
        ];
        for (i, &e) in expected.iter().enumerate() {
            assert_eq!(stream_word(0, i as u64), e, "index {i}");
        }
    }

    #[test]
    fn stream_shift_identity() {
        for &s in &[0u64, 1, 0xDEAD_BEEF, u64::MAX] {
            for i in 1..50u64 {
                assert_eq!(stream_word(s, i), stream_word(s.wrapping_add(GOLDEN_GAMMA), i - 1));
            }
        }
    }

    #[test]
    fn coord_word_oracle_value() {
        let s = WeightSpec::new(42, 7, 8, 8, 0.5, Generator::CoordinateHash).unwrap();
        assert_eq!(s.coord_word(3, 5).unwrap(), 0x1E13_23C9_8B55_C959);
        assert!(s.coord_word(8, 0).is_err());
        assert!(s.coord_word(0, 8).is_err());
    }

    #[test]
    fn coord_word_has_no_collisions_on_64x64() {
        let s = WeightSpec::new(1, 0, 64, 64, 0.5, Generator::CoordinateHash).unwrap();
        let mut words: Vec<u64> = (0..64)
            .flat_map(|r| (0..64).map(move |c| (r, c)))
            .map(|(r, c)| s.coord_word(r, c).unwrap())
            .collect();
        words.sort_unstable();
        words.dedup();
        assert!(words.len() >= 4095);
    }

    #[test]
    fn layer_tag_decorrelates() {
        for generator in [Generator::SequentialStream, Generator::CoordinateHash] {
            let a = generate(&WeightSpec::new(9, 4, 128, 128, 0.5, generator).unwrap()).unwrap();
            let b = generate(&WeightSpec::new(9, 5, 128, 128, 0.5, generator).unwrap()).unwrap();
            let differ = a.entries().iter().zip(b.entries()).filter(|(x, y)| x != y).count();
            assert!(differ as f64 >= 0.25 * 128.0 * 128.0, "{generator:?}: {differ}");
        }
    }

    #[test]
    fn uniform_mapping_endpoints() {
        assert_eq!(word_to_uniform(0), -1.0);
        assert_eq!(word_to_uniform(1 << 63), 0.0);
        assert_eq!(word_to_uniform(u64::MAX), 1.0 - 2f64.powi(-52));
    }

    #[test]
    fn ternarize_examples() {
        assert_eq!(ternarize(0.5, 0.9), Ternary::Zero);
        assert_eq!(ternarize(-0.95, 0.9), Ternary::Neg);
        assert_eq!(ternarize(0.9, 0.9), Ternary::Zero);
        assert_eq!(ternarize(-1.0, 1.0), Ternary::Zero);
        assert_eq!(ternarize(0.999, 1.0), Ternary::Zero);
        assert_eq!(ternarize(1e-300, 0.0), Ternary::Pos);
        assert_eq!(ternarize(-1e-300, 0.0), Ternary::Neg);
        assert_eq!(ternarize(0.0, 0.0), Ternary::Zero);
    }

    #[test]
    fn expected_sparsity_is_identity() {
        assert_eq!(expected_sparsity(0.0), 0.0);
        assert_eq!(expected_sparsity(1.0), 1.0);
        assert_eq!(expected_sparsity(0.9), 0.9);
    }

    #[test]
    fn threshold_one_gives_zero_matrix() {
        for g in [
            Generator::SequentialStream,
            Generator::CoordinateHash,
        ] {
            let m = generate(&spec(17, 33, 1.0, g)).unwrap();
            assert_eq!((m.rows(), m.cols()), (17, 33));
            assert!(m.entries().iter().all(|&v| v == Ternary::Zero));
        }
    }

    #[test]
    fn sparsity_matches_threshold() {
        for g in [Generator::SequentialStream, Generator::CoordinateHash] {
            for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let stats = MatrixStats::of(&generate(&spec(512, 512, t, g)).unwrap());
                let sigma = (t * (1.0 - t)).sqrt() / 512.0;
                assert!((stats.sparsity - t).abs() <= 3.0 * sigma, "{g:?} t={t}: {}", stats.sparsity);
            }
        }
    }

    #[test]
    fn sign_balance() {
        let stats = MatrixStats::of(&generate(&spec(512, 512, 0.5, Generator::SequentialStream)).unwrap());
        let nnz = (stats.plus + stats.minus) as f64;
        assert!((stats.plus_fraction - 0.5).abs() <= 3.0 * (0.25 / nnz).sqrt());
    }

    #[test]
    fn random_access_equals_streaming() {
        for g in [
            Generator::SequentialStream,
            Generator::CoordinateHash,
            Generator::StructuredNofM { n: 2, m: 4 },
        ] {
            let s = spec(13, 20, 0.4, g);
            let m = generate(&s).unwrap();
            for r in 0..13 {
                for c in 0..20 {
                    assert_eq!(s.entry(r, c).unwrap(), m.get(r, c));
                }
            }
            // streamed entry (r, c) is stream word r * cols + c
            if g == Generator::SequentialStream {
                let seed = s.seed ^ mix64(s.layer_tag);
                let w = stream_word(seed, (5 * 20 + 7) as u64);
                assert_eq!(m.get(5, 7), ternarize(word_to_uniform(w), 0.4));
            }
        }
    }

    #[test]
    fn coordinate_hash_ignores_other_dimensions() {
        let small = spec(4, 4, 0.3, Generator::CoordinateHash);
        let large = spec(40, 90, 0.3, Generator::CoordinateHash);
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(small.entry(r, c).unwrap(), large.entry(r, c).unwrap());
            }
        }
    }

    #[test]
    fn structured_two_of_four() {
        let s = spec(31, 64, 0.0, Generator::StructuredNofM { n: 2, m: 4 });
        let m = generate(&s).unwrap();
        for r in 0..31 {
            for g in 0..16 {
                let nnz = (0..4).filter(|j| m.get(r, 4 * g + j) != Ternary::Zero).count();
                assert_eq!(nnz, 2);
            }
        }
    }

    #[test]
    fn structured_rejects_ragged_columns() {
        let err = WeightSpec::new(0, 0, 4, 10, 0.0, Generator::StructuredNofM { n: 2, m: 4 });
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(WeightSpec::new(0, 0, 4, 8, 0.0, Generator::StructuredNofM { n: 5, m: 4 }).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(WeightSpec::new(0, 0, 0, 4, 0.5, Generator::SequentialStream).is_err());
        assert!(WeightSpec::new(0, 0, 4, 4, 1.5, Generator::SequentialStream).is_err());
        assert!(WeightSpec::new(0, 0, 4, 4, f64::NAN, Generator::SequentialStream).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        for g in [
            Generator::SequentialStream,
            Generator::CoordinateHash,
            Generator::StructuredNofM { n: 1, m: 8 },
        ] {
            let s = spec(64, 64, 0.6, g);
            assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        }
    }
}
