//! Keyed permutor: key-controlled remapping of input signals to memristor
//! rows via triplet swaps.
//!
//! Rows are grouped into fixed consecutive triplets. Each triplet carries an
//! independent sub-key in {0..5} selecting one of the six arrangements of
//! its three rows; rows left over when the row count is not a multiple of
//! three pass through unchanged (with one series pass transistor each so
//! every row stays electrically symmetric). A 128-row array therefore has a
//! key space of 6^42 = 2^108.57 at a hardware cost of 9 pass transistors per
//! triplet plus one per leftover row.

use crate::error::{Error, Result};
use crate::grid::Matrix;
use crate::rng::SplitMix64;

/// Fixed enumeration of the six permutations of three elements, as images:
/// `S3_PERMS[k][i]` is where element `i` goes under sub-key `k`.
///
/// Order: identity, the three transpositions (01), (02), (12), then the two
/// 3-cycles (012), (021). Tests and serialized keys depend on this order.
const S3_PERMS: [[usize; 3]; 6] = [
    [0, 1, 2], // identity
    [1, 0, 2], // (01)
    [2, 1, 0], // (02)
    [0, 2, 1], // (12)
    [1, 2, 0], // (012)
    [2, 0, 1], // (021)
];

/// Secret key of the permutor: one sub-key in {0..5} per complete row
/// triplet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermKey {
    rows: usize,
    triplet_keys: Vec<u8>,
}

impl PermKey {
    pub fn new(rows: usize, triplet_keys: Vec<u8>) -> Result<Self> {
        if triplet_keys.len() != rows / 3 {
            return Err(Error::ShapeMismatch {
                expected: format!("{} triplet keys for {rows} rows", rows / 3),
                actual: format!("{}", triplet_keys.len()),
            });
        }
        if let Some(bad) = triplet_keys.iter().find(|&&k| k > 5) {
            return Err(Error::OutOfRange(format!("triplet key {bad} outside 0..=5")));
        }
        Ok(Self { rows, triplet_keys })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn triplet_keys(&self) -> &[u8] {
        &self.triplet_keys
    }

    /// Serializes as `<rows>:<digits>`, one hex digit (4 bits) per triplet
    /// key, in triplet order. `PermKey::parse` round-trips this exactly.
    pub fn to_hex(&self) -> String {
        let digits: String = self
            .triplet_keys
            .iter()
            .map(|k| char::from_digit(u32::from(*k), 16).unwrap())
            .collect();
        format!("{}:{digits}", self.rows)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (rows, digits) = text
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::Format("key must look like `<rows>:<hex digits>`".into()))?;
        let rows: usize = rows
            .parse()
            .map_err(|_| Error::Format(format!("bad row count `{rows}` in key")))?;
        let mut keys = Vec::with_capacity(digits.len());
        for c in digits.chars() {
            let d = c
                .to_digit(16)
                .ok_or_else(|| Error::Format(format!("bad hex digit `{c}` in key")))?;
            keys.push(d as u8);
        }
        Self::new(rows, keys)
    }
}

/// Bijection on row indices produced by a key. `mapping[i]` is the physical
/// row driven when logical input `i` is selected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowPermutation {
    mapping: Vec<usize>,
}

impl RowPermutation {
    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &m)| i == m)
    }

    /// Inverse bijection: `inverse().mapping()[p]` is the logical input that
    /// drives physical row `p`.
    pub fn inverse(&self) -> RowPermutation {
        let mut inv = vec![0; self.mapping.len()];
        for (i, &m) in self.mapping.iter().enumerate() {
            inv[m] = i;
        }
        RowPermutation { mapping: inv }
    }
}

/// Draws a key for `rows` rows, each triplet sub-key uniform in {0..5}.
/// Deterministic in `(rows, seed)`.
pub fn generate_key(rows: usize, seed: u64) -> PermKey {
    let mut rng = SplitMix64::new(seed);
    let triplet_keys = (0..rows / 3).map(|_| rng.next_below(6) as u8).collect();
    PermKey {
        rows,
        triplet_keys,
    }
}

/// Expands a key into the row permutation it selects.
pub fn key_to_permutation(key: &PermKey) -> RowPermutation {
    let mut mapping: Vec<usize> = (0..key.rows).collect();
    for (t, &k) in key.triplet_keys.iter().enumerate() {
        let base = 3 * t;
        let perm = &S3_PERMS[k as usize];
        for i in 0..3 {
            mapping[base + i] = base + perm[i];
        }
    }
    RowPermutation { mapping }
}

/// Routes a logical input vector onto physical rows:
/// `out[mapping[i]] = v[i]`.
pub fn apply_permutor(v: &[f64], key: &PermKey) -> Result<Vec<f64>> {
    if v.len() != key.rows {
        return Err(Error::ShapeMismatch {
            expected: format!("{} inputs", key.rows),
            actual: format!("{}", v.len()),
        });
    }
    let perm = key_to_permutation(key);
    let mut out = vec![0.0; v.len()];
    for (i, &x) in v.iter().enumerate() {
        out[perm.mapping[i]] = x;
    }
    Ok(out)
}

/// Undoes [`apply_permutor`]: recovers the logical vector from the
/// physically-routed one.
pub fn apply_permutor_inverse(v: &[f64], key: &PermKey) -> Result<Vec<f64>> {
    if v.len() != key.rows {
        return Err(Error::ShapeMismatch {
            expected: format!("{} inputs", key.rows),
            actual: format!("{}", v.len()),
        });
    }
    let perm = key_to_permutation(key);
    let mut out = vec![0.0; v.len()];
    for (i, &m) in perm.mapping.iter().enumerate() {
        out[i] = v[m];
    }
    Ok(out)
}

/// Reorders matrix rows into their keyed physical storage positions:
/// output row `mapping[i]` is input row `i`. Composed with
/// [`apply_permutor`] on the inputs, the ideal MVM output is unchanged.
pub fn store_permuted(weights: &Matrix, key: &PermKey) -> Result<Matrix> {
    if weights.rows() != key.rows {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", key.rows),
            actual: format!("{}", weights.rows()),
        });
    }
    let perm = key_to_permutation(key);
    let mut out = Matrix::zeros(weights.rows(), weights.cols());
    for i in 0..weights.rows() {
        let p = perm.mapping()[i];
        for j in 0..weights.cols() {
            out[(p, j)] = weights[(i, j)];
        }
    }
    Ok(out)
}

/// Key space in bits: `floor(rows/3) * log2(6)`.
pub fn key_space_bits(rows: usize) -> f64 {
    (rows / 3) as f64 * 6.0f64.log2()
}

/// Pass transistors added by the permutor: a 9-transistor 3x3 switch
/// crossbar per triplet plus one path-matching pass transistor per
/// leftover row.
pub fn pass_transistor_count(rows: usize) -> usize {
    9 * (rows / 3) + rows % 3
}

/// Transistor overhead of the permutor relative to the M*N baseline 1T1R
/// transistor count, as a fraction.
pub fn transistor_overhead(rows: usize, cols: usize) -> f64 {
    pass_transistor_count(rows) as f64 / (rows * cols) as f64
}
