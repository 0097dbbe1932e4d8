//! White-box attacker model: raw extraction of the stored conductances,
//! clone construction without the key, extraction-fidelity metrics, and
//! brute-force key-search cost.
//!
//! The adversary reads the physical cell state perfectly but holds neither
//! the key nor runtime visibility into the permutor's input-to-row
//! routing, so a clone built from the raw grid computes with the permuted
//! row order as if it were logical. Clone evaluation uses the ideal MVM so
//! the metrics isolate the permutation's effect from parasitic modeling.

use serde::Serialize;

use crate::crossbar::{ideal_mvm, read_raw_conductances, CrossbarArray, InputVector};
use crate::error::{Error, Result};
use crate::grid::Matrix;
use crate::permutor::key_to_permutation;

/// Outcome metrics of an extraction attack.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractionReport {
    /// Fraction of physical rows whose content sits at its true logical
    /// position.
    pub row_placement_accuracy: f64,
    /// `||G_extracted - G_true||_F / ||G_true||_F` over conductance grids.
    pub frobenius_error: f64,
    /// Mean squared error of clone column currents against the original
    /// over the probe workload (A^2).
    pub clone_output_mse: f64,
}

/// Builds the adversary's clone: the raw physical grid re-used as a plain
/// unsecured array. Watermark columns are copied along as ordinary data
/// columns — the attacker cannot tell them apart.
pub fn extract_and_clone(array: &CrossbarArray) -> CrossbarArray {
    CrossbarArray {
        rows: array.rows(),
        data_cols: array.total_cols(),
        wm_cols: 0,
        conductances: read_raw_conductances(array).clone(),
        key: None,
        watermark: None,
        node: array.node().clone(),
        device: array.device().clone(),
    }
}

/// Logical-order conductance grid of an array: the inverse permutation
/// applied to the physical storage when a key is attached.
pub fn logical_conductances(array: &CrossbarArray) -> Matrix {
    let raw = read_raw_conductances(array);
    match array.key() {
        None => raw.clone(),
        Some(key) => {
            let mapping = key_to_permutation(key);
            let mut out = Matrix::zeros(raw.rows(), raw.cols());
            for i in 0..raw.rows() {
                let p = mapping.mapping()[i];
                for j in 0..raw.cols() {
                    out[(i, j)] = raw[(p, j)];
                }
            }
            out
        }
    }
}

/// Decodes an extracted grid with the true key: reconstructs the logical
/// row order exactly (the defense is a permutation, not noise).
pub fn decode_with_key(extracted: &Matrix, key: &crate::permutor::PermKey) -> Result<Matrix> {
    if extracted.rows() != key.rows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", key.rows()),
            actual: format!("{}", extracted.rows()),
        });
    }
    let mapping = key_to_permutation(key);
    let mut out = Matrix::zeros(extracted.rows(), extracted.cols());
    for i in 0..extracted.rows() {
        let p = mapping.mapping()[i];
        for j in 0..extracted.cols() {
            out[(i, j)] = extracted[(p, j)];
        }
    }
    Ok(out)
}

/// Quantifies how well a clone reproduces the original: row placement,
/// conductance-grid distance, and output MSE over a probe workload.
pub fn extraction_fidelity(
    original: &CrossbarArray,
    clone: &CrossbarArray,
    probes: &[InputVector],
) -> Result<ExtractionReport> {
    let truth = logical_conductances(original);
    let grid = read_raw_conductances(clone);
    if grid.rows() != truth.rows() || grid.cols() != truth.cols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} clone grid", truth.rows(), truth.cols()),
            actual: format!("{}x{}", grid.rows(), grid.cols()),
        });
    }

    let placed = (0..truth.rows())
        .filter(|&i| grid.row(i) == truth.row(i))
        .count();
    let row_placement_accuracy = if truth.rows() == 0 {
        1.0
    } else {
        placed as f64 / truth.rows() as f64
    };

    let frobenius_error = truth.frobenius_distance(grid) / truth.frobenius_norm().max(f64::MIN_POSITIVE);

    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for v in probes {
        let want = ideal_mvm(original, v)?;
        let got = ideal_mvm(clone, v)?;
        for (w, g) in want.iter().zip(&got) {
            sq_sum += (w - g) * (w - g);
            count += 1;
        }
    }
    let clone_output_mse = if count == 0 { 0.0 } else { sq_sum / count as f64 };

    Ok(ExtractionReport {
        row_placement_accuracy,
        frobenius_error,
        clone_output_mse,
    })
}

/// Expected brute-force time in seconds: half the key space over the
/// attacker's rate. Computed in log space so huge key spaces degrade to
/// `inf` rather than panicking.
pub fn brute_force_cost(rows: usize, keys_per_second: f64) -> Result<f64> {
    if !keys_per_second.is_finite() || keys_per_second <= 0.0 {
        return Err(Error::OutOfRange(format!(
            "keys_per_second must be > 0, got {keys_per_second}"
        )));
    }
    let triplets = (rows / 3) as f64;
    let log_seconds = triplets * 6.0f64.ln() - 2.0f64.ln() - keys_per_second.ln();
    Ok(log_seconds.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::program_weights;
    use crate::device::{tech_node_params, MemristorParams};
    use crate::permutor::{generate_key, PermKey};
    use crate::rng::SplitMix64;

    fn generic_array(rows: usize, cols: usize, seed: u64) -> CrossbarArray {
        let mut rng = SplitMix64::new(seed);
        let w = Matrix::generate(rows, cols, |_, _| rng.next_f64());
        program_weights(
            rows,
            cols,
            &w,
            tech_node_params("45nm").unwrap(),
            MemristorParams::default(),
        )
        .unwrap()
    }

    fn probes(rows: usize, seed: u64) -> Vec<InputVector> {
        let mut rng = SplitMix64::new(seed);
        (0..8)
            .map(|_| {
                InputVector::new((0..rows).map(|_| rng.next_range(0.0, 0.2)).collect(), 0.2)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn clone_of_unsecured_array_succeeds() {
        let arr = generic_array(6, 4, 1);
        let clone = extract_and_clone(&arr);
        let report = extraction_fidelity(&arr, &clone, &probes(6, 2)).unwrap();
        assert_eq!(report.row_placement_accuracy, 1.0);
        assert_eq!(report.frobenius_error, 0.0);
        assert_eq!(report.clone_output_mse, 0.0);
    }

    #[test]
    fn identity_key_gives_the_attacker_a_free_win() {
        let arr = generic_array(6, 4, 3);
        let key = PermKey::new(6, vec![0, 0]).unwrap();
        let secured = arr.with_permutor(key).unwrap();
        let clone = extract_and_clone(&secured);
        let report = extraction_fidelity(&secured, &clone, &probes(6, 4)).unwrap();
        assert_eq!(report.row_placement_accuracy, 1.0);
        assert_eq!(report.clone_output_mse, 0.0);
    }

    #[test]
    fn non_identity_key_breaks_the_clone() {
        let arr = generic_array(6, 4, 5);
        let key = PermKey::new(6, vec![4, 0]).unwrap();
        let secured = arr.with_permutor(key).unwrap();
        let clone = extract_and_clone(&secured);
        let report = extraction_fidelity(&secured, &clone, &probes(6, 6)).unwrap();
        assert!(report.clone_output_mse > 0.0);
        assert!(report.frobenius_error > 0.0);
        // One permuted triplet displaces 3 of 6 rows.
        assert!((report.row_placement_accuracy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn three_cycle_displaces_every_row() {
        let arr = generic_array(3, 3, 7);
        let secured = arr.with_permutor(PermKey::new(3, vec![4]).unwrap()).unwrap();
        let clone = extract_and_clone(&secured);
        let report = extraction_fidelity(&secured, &clone, &probes(3, 8)).unwrap();
        assert_eq!(report.row_placement_accuracy, 0.0);
    }

    #[test]
    fn correct_key_decodes_exactly() {
        let arr = generic_array(9, 5, 9);
        let truth = logical_conductances(&arr);
        let key = generate_key(9, 77);
        let secured = arr.with_permutor(key.clone()).unwrap();
        let extracted = read_raw_conductances(&secured).clone();
        let decoded = decode_with_key(&extracted, &key).unwrap();
        assert_eq!(decoded, truth);
    }

    #[test]
    fn attack_succeeds_iff_identity_for_exhaustive_small_keys() {
        for rows in [3usize, 6] {
            let triplets = rows / 3;
            let total = 6usize.pow(triplets as u32);
            for idx in 0..total {
                let mut k = idx;
                let mut keys = Vec::new();
                for _ in 0..triplets {
                    keys.push((k % 6) as u8);
                    k /= 6;
                }
                let key = PermKey::new(rows, keys).unwrap();
                let identity = key_to_permutation(&key).is_identity();
                let arr = generic_array(rows, 3, 1000 + idx as u64);
                let secured = arr.with_permutor(key).unwrap();
                let clone = extract_and_clone(&secured);
                let report = extraction_fidelity(&secured, &clone, &probes(rows, idx as u64)).unwrap();
                assert_eq!(report.clone_output_mse == 0.0, identity, "keys {idx}");
            }
        }
    }

    #[test]
    fn brute_force_cost_values() {
        assert!((brute_force_cost(10, 1.0).unwrap() - 108.0).abs() < 1e-9);
        assert!((brute_force_cost(3, 6.0).unwrap() - 0.5).abs() < 1e-12);
        // Independent route: direct exponentiation instead of log space.
        let big = brute_force_cost(128, 1e9).unwrap();
        let direct = 6.0f64.powi(42) / 2.0 / 1e9;
        assert!((big / direct - 1.0).abs() < 1e-9);
        assert!((direct / 2.4e23 - 1.0).abs() < 0.01); // ~7.6e15 years
        assert!(brute_force_cost(5, 0.0).is_err());
    }

    #[test]
    fn brute_force_cost_monotone_and_rate_inverse() {
        let mut prev = 0.0;
        for rows in [3, 6, 30, 90, 300] {
            let c = brute_force_cost(rows, 100.0).unwrap();
            assert!(c >= prev);
            prev = c;
        }
        let slow = brute_force_cost(30, 1.0).unwrap();
        let fast = brute_force_cost(30, 1000.0).unwrap();
        assert!((slow / fast - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn mean_placement_accuracy_matches_s3_expectation() {
        // Per complete triplet: identity fixes 3 rows (p = 1/6), each of the
        // three transpositions fixes 1 (p = 1/2 combined), 3-cycles fix 0.
        // Expected fixed fraction = 1/3 per triplet, leftovers always fixed.
        let rows = 128;
        let samples = 10_000;
        let expected = (42.0 + 2.0) / 128.0;
        let mut total = 0.0;
        for s in 0..samples {
            let key = generate_key(rows, 0xACCE55 + s);
            let perm = key_to_permutation(&key);
            let fixed = perm
                .mapping()
                .iter()
                .enumerate()
                .filter(|&(i, &m)| i == m)
                .count();
            total += fixed as f64 / rows as f64;
        }
        let mean = total / samples as f64;
        assert!(
            (mean - expected).abs() / expected < 0.02,
            "mean {mean} vs expected {expected}"
        );
    }
}
