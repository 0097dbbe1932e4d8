//! Acceptance suite: one test per criterion, each printing a `[PASS]` /
//! `[FAIL]` line (run with `cargo test --test acceptance -- --nocapture`
//! to see the lines for passing criteria too).
//!
//! Criteria 3 and 4 are implemented exactly as stated and are expected to
//! fail with the current physical model: the pinned Elmore delay estimator
//! is dominated by the cell-to-bitline charging term, which no security
//! parameter touches, so no assignment of (r_switch, p_switch, p_wm_col)
//! can reproduce the +5.5% delay target while also matching the 8.8%
//! current drop; and the peripheral power that matches the 256x128 power
//! target is disproportionate on 10x10 arrays. The failure messages below
//! carry the measured numbers.

use std::time::Instant;

use xbar_core::adversary::{extract_and_clone, extraction_fidelity};
use xbar_core::crossbar::{ideal_mvm, program_weights, read_raw_conductances, CrossbarArray, InputVector};
use xbar_core::device::{tech_node_params, MemristorParams, NodeRegistry, TechNodeParams};
use xbar_core::error::Error;
use xbar_core::experiment::{
    apply_calibration, calibrate, mean_data_current, overhead_report, run_config, sweep,
    CalibrationTargets, ExperimentGrid, InputSource, SecurityConfig,
};
use xbar_core::grid::Matrix;
use xbar_core::ingest::{
    gen_lora_chirps, load_idx, lora_batch, mnist_batch, parse_csv_vectors, ChirpSpec, IdxTensor,
    SampleBatch,
};
use xbar_core::permutor::{
    generate_key, key_space_bits, key_to_permutation, transistor_overhead, PermKey,
};
use xbar_core::rng::SplitMix64;
use xbar_core::solver::{build_network, column_currents, solve_network};
use xbar_core::watermark::{
    embed_watermark, flip_to_far_extreme, make_watermark, measure_probe_currents,
    verify_watermark, EvalBackend, Placement,
};

fn defaults() -> (TechNodeParams, MemristorParams) {
    (tech_node_params("45nm").unwrap(), MemristorParams::default())
}

fn random_array(rows: usize, cols: usize, seed: u64) -> CrossbarArray {
    let mut rng = SplitMix64::new(seed);
    let w = Matrix::generate(rows, cols, |_, _| rng.next_f64());
    let (node, device) = defaults();
    program_weights(rows, cols, &w, node, device).unwrap()
}

fn all_keys(rows: usize) -> Vec<PermKey> {
    let triplets = rows / 3;
    (0..6usize.pow(triplets as u32))
        .map(|mut idx| {
            let mut keys = Vec::with_capacity(triplets);
            for _ in 0..triplets {
                keys.push((idx % 6) as u8);
                idx /= 6;
            }
            PermKey::new(rows, keys).unwrap()
        })
        .collect()
}

/// Criterion 1 — key space: 108.57 +- 0.01 bits at 128 rows, and the
/// brute-force enumeration for M <= 6 yields exactly 6^(M/3) distinct
/// permutations. Runtime < 1 s.
#[test]
fn criterion_1_key_space() {
    let t0 = Instant::now();
    let bits = key_space_bits(128);
    assert!(
        (bits - 108.57).abs() <= 0.01,
        "[FAIL] criterion 1: key_space_bits(128) = {bits}"
    );
    for rows in 1..=6usize {
        let mut perms: Vec<Vec<usize>> = all_keys(rows)
            .iter()
            .map(|k| key_to_permutation(k).mapping().to_vec())
            .collect();
        perms.sort();
        perms.dedup();
        let expected = 6usize.pow((rows / 3) as u32);
        assert_eq!(
            perms.len(),
            expected,
            "[FAIL] criterion 1: {rows} rows gave {} distinct permutations",
            perms.len()
        );
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "[FAIL] criterion 1: took {dt:?}");
    println!("[PASS] criterion 1: key space 2^{bits:.2}, enumeration exact for M <= 6 ({dt:?})");
}

/// Criterion 2 — transistor overhead: 2.19%..2.49% at 128x128 against the
/// reported 2.34%, and 2.34% +- 0.01pp at 256x128. Runtime < 1 s.
#[test]
fn criterion_2_transistor_overhead() {
    let t0 = Instant::now();
    let oh128 = transistor_overhead(128, 128) * 100.0;
    assert!(
        (2.19..=2.49).contains(&oh128),
        "[FAIL] criterion 2: 128x128 overhead {oh128:.4}% outside [2.19, 2.49]"
    );
    let oh256 = transistor_overhead(256, 128) * 100.0;
    assert!(
        (oh256 - 2.34).abs() <= 0.01,
        "[FAIL] criterion 2: 256x128 overhead {oh256:.4}% not 2.34 +- 0.01"
    );
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "[FAIL] criterion 2: took {dt:?}");
    println!("[PASS] criterion 2: overhead {oh128:.3}% at 128x128, {oh256:.3}% at 256x128 ({dt:?})");
}

/// Shared by criteria 3 and 4: calibrate at (45nm, 256x128) and return the
/// fitted (or best-found) parameters plus residual and wall time.
fn calibrated_45nm(seed: u64) -> (TechNodeParams, f64, std::time::Duration) {
    let (node, device) = defaults();
    let t0 = Instant::now();
    let outcome = calibrate(&node, &device, &CalibrationTargets::default(), 256, 128, seed, 2);
    let dt = t0.elapsed();
    match outcome {
        Ok(cal) => (cal.params, cal.residual, dt),
        Err(Error::CalibrationFailed { best, residual, .. }) => (*best, residual, dt),
        Err(e) => panic!("[FAIL] calibration errored unexpectedly: {e}"),
    }
}

/// Criterion 3 — calibration at (45nm, 256x128, both): the simulated
/// overheads must land within +-1.5 percentage points of (current drop
/// 8.8%, delay +5.5%, power +9.8%); one 66,560-unknown solve under 10 s
/// per configuration; calibration under 5 min.
#[test]
fn criterion_3_calibration_targets() {
    let (node, device) = defaults();

    // Solve-time bound on the full-size configuration.
    let inputs = InputSource::UniformRandom.build(256, node.v_read, 42, 2).unwrap();
    let t0 = Instant::now();
    let _ = run_config(&node, &device, 256, 128, SecurityConfig::Both, &inputs, 42).unwrap();
    let per_config = t0.elapsed();
    assert!(
        per_config.as_secs_f64() < 10.0,
        "[FAIL] criterion 3: full-size configuration took {per_config:?} (>= 10 s)"
    );

    let (fitted, residual, cal_time) = calibrated_45nm(42);
    assert!(
        cal_time.as_secs_f64() < 300.0,
        "[FAIL] criterion 3: calibration took {cal_time:?} (>= 5 min)"
    );

    // Re-measure at the fitted point.
    let base = run_config(&fitted, &device, 256, 128, SecurityConfig::Baseline, &inputs, 42).unwrap();
    let both = run_config(&fitted, &device, 256, 128, SecurityConfig::Both, &inputs, 42).unwrap();
    let drop =
        (mean_data_current(&base) - mean_data_current(&both)) / mean_data_current(&base) * 100.0;
    let delay = (both.delay_s - base.delay_s) / base.delay_s * 100.0;
    let power = (both.power_w - base.power_w) / base.power_w * 100.0;

    let checks = [
        ("current drop", drop, 8.8),
        ("delay increase", delay, 5.5),
        ("power increase", power, 9.8),
    ];
    let misses: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1.5)
        .map(|(name, got, want)| format!("{name} {got:.2}% vs {want}% +- 1.5pp"))
        .collect();
    if misses.is_empty() {
        println!(
            "[PASS] criterion 3: calibrated to ({drop:.2}%, +{delay:.2}%, +{power:.2}%), residual {residual:.3}, {cal_time:?}"
        );
    } else {
        println!(
            "[FAIL] criterion 3: {} (residual {residual:.3}, r_switch {:.1} Ohm, solve {per_config:?}, calibration {cal_time:?})",
            misses.join("; "),
            fitted.r_switch
        );
        panic!(
            "criterion 3 unmet: {} — the Elmore estimator's dominant cell-to-bitline term \
             carries no security parameter, so the delay target conflicts with the current \
             target for every r_switch",
            misses.join("; ")
        );
    }
}

/// Criterion 4 — trend property across the full 3-node x 3-size x 4-config
/// grid with calibrated parameters: current drop >= 0, delay increase >= 0,
/// power increase >= 0, and all three overheads < 20%. Runtime < 5 min.
#[test]
fn criterion_4_grid_trends() {
    let t0 = Instant::now();
    let (fitted, _residual, _cal_time) = calibrated_45nm(42);
    let registry = apply_calibration(&NodeRegistry::default(), &fitted).unwrap();
    let device = MemristorParams::default();
    let grid = ExperimentGrid {
        nodes: vec!["45nm".into(), "22nm".into(), "7nm".into()],
        sizes: vec![(10, 10), (128, 10), (256, 128)],
        configs: SecurityConfig::ALL.to_vec(),
        seed: 42,
        batch: 4,
    };
    let results = sweep(&grid, &registry, &device, &InputSource::UniformRandom).unwrap();
    assert_eq!(results.len(), 36);
    let rows = overhead_report(&results).unwrap();

    let mut sign_violations = Vec::new();
    let mut bound_violations = Vec::new();
    for row in rows.iter().filter(|r| r.config != "baseline") {
        let place = format!("{} {}x{} {}", row.node, row.rows, row.cols, row.config);
        if row.current_drop_pct < -1e-9 {
            sign_violations.push(format!("{place}: current rose ({:.3}%)", -row.current_drop_pct));
        }
        if row.delay_inc_pct < -1e-9 {
            sign_violations.push(format!("{place}: delay fell ({:.3}%)", row.delay_inc_pct));
        }
        if row.power_inc_pct < -1e-9 {
            sign_violations.push(format!("{place}: power fell ({:.3}%)", row.power_inc_pct));
        }
        for (name, v) in [
            ("current drop", row.current_drop_pct),
            ("delay increase", row.delay_inc_pct),
            ("power increase", row.power_inc_pct),
        ] {
            if v >= 20.0 {
                bound_violations.push(format!("{place}: {name} {v:.2}% >= 20%"));
            }
        }
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 300.0, "[FAIL] criterion 4: took {dt:?}");
    if sign_violations.is_empty() && bound_violations.is_empty() {
        println!("[PASS] criterion 4: all 27 secured grid cells within trend bounds ({dt:?})");
    } else {
        println!(
            "[FAIL] criterion 4: {} sign / {} bound violation(s) ({dt:?}):",
            sign_violations.len(),
            bound_violations.len()
        );
        for v in sign_violations.iter().chain(&bound_violations) {
            println!("        {v}");
        }
        panic!(
            "criterion 4 unmet: {} sign violation(s), {} of 27 secured cells break an \
             overhead < 20% bound — peripheral power calibrated to the 256x128 target is \
             disproportionate on smaller and lower-power grid points",
            sign_violations.len(),
            bound_violations.len()
        );
    }
}

/// Criterion 5 — oracle equivalence: with all parasitic and series
/// resistances zeroed, solver currents equal the ideal Kirchhoff/Ohm MVM
/// (access resistance folded into the cells) within 1e-9 relative, on 50
/// random arrays up to 16x16. Runtime < 30 s.
#[test]
fn criterion_5_oracle_equivalence() {
    let t0 = Instant::now();
    let mut rng = SplitMix64::new(0x02AC1E);
    for trial in 0..50u64 {
        let rows = 1 + (rng.next_below(16) as usize);
        let cols = 1 + (rng.next_below(16) as usize);
        let mut wrng = SplitMix64::new(1000 + trial);
        let w = Matrix::generate(rows, cols, |_, _| wrng.next_f64());
        let (mut node, device) = defaults();
        node.r_wire = 0.0;
        node.r_driver = 0.0;
        node.r_switch = 0.0;
        node.r_sense = 0.0;
        let arr = program_weights(rows, cols, &w, node, device).unwrap();
        let net = build_network(&arr);
        let mut vrng = SplitMix64::new(2000 + trial);
        let v: Vec<f64> = (0..rows).map(|_| vrng.next_range(0.0, 0.2)).collect();
        let sol = solve_network(&net, &InputVector::new(v.clone(), 0.2).unwrap()).unwrap();
        let got = column_currents(&net, &sol);
        let raw = read_raw_conductances(&arr);
        for (j, &i_got) in got.iter().enumerate() {
            // Ideal oracle with r_access folded into each cell conductance.
            let want: f64 = (0..rows)
                .map(|i| v[i] / (1.0 / raw[(i, j)] + arr.node().r_access))
                .sum();
            let rel = (i_got - want).abs() / want.abs().max(1e-30);
            assert!(
                rel <= 1e-9,
                "[FAIL] criterion 5: trial {trial} col {j}: relative error {rel:.3e}"
            );
        }
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 30.0, "[FAIL] criterion 5: took {dt:?}");
    println!("[PASS] criterion 5: solver equals ideal MVM within 1e-9 on 50 degenerate arrays ({dt:?})");
}

/// Criterion 6 — permutor transparency and attack asymmetry: correct-key
/// outputs equal baseline to 1e-12; keyed clones have MSE > 0 exactly for
/// non-identity permutations; mean row-placement accuracy over 10,000
/// random 128-row keys equals (42 + 2)/128 within 2% relative.
/// Runtime < 1 min.
#[test]
fn criterion_6_permutor_transparency_and_attack() {
    let t0 = Instant::now();

    for trial in 0..50u64 {
        let mut rng = SplitMix64::new(3000 + trial);
        let rows = 1 + (rng.next_below(24) as usize);
        let cols = 1 + (rng.next_below(12) as usize);
        let plain = random_array(rows, cols, 4000 + trial);
        let secured = plain.clone().with_permutor(generate_key(rows, 5000 + trial)).unwrap();
        let v: Vec<f64> = (0..rows).map(|_| rng.next_range(0.0, 0.2)).collect();
        let iv = InputVector::new(v, 0.2).unwrap();
        let base = ideal_mvm(&plain, &iv).unwrap();
        let sec = ideal_mvm(&secured, &iv).unwrap();
        for (b, s) in base.iter().zip(&sec) {
            let rel = (b - s).abs() / b.abs().max(1e-30);
            assert!(rel <= 1e-12, "[FAIL] criterion 6: transparency violated ({rel:.2e})");
        }
    }

    for rows in [3usize, 6] {
        for (i, key) in all_keys(rows).into_iter().enumerate() {
            let identity = key_to_permutation(&key).is_identity();
            let plain = random_array(rows, 4, 6000 + i as u64);
            let secured = plain.with_permutor(key).unwrap();
            let clone = extract_and_clone(&secured);
            let mut rng = SplitMix64::new(7000 + i as u64);
            let probes: Vec<InputVector> = (0..6)
                .map(|_| {
                    InputVector::new(
                        (0..rows).map(|_| rng.next_range(0.0, 0.2)).collect(),
                        0.2,
                    )
                    .unwrap()
                })
                .collect();
            let report = extraction_fidelity(&secured, &clone, &probes).unwrap();
            assert_eq!(
                report.clone_output_mse == 0.0,
                identity,
                "[FAIL] criterion 6: clone MSE {} for key {i} of {rows} rows (identity: {identity})",
                report.clone_output_mse
            );
        }
    }

    let expected = (42.0 + 2.0) / 128.0;
    let mut total = 0.0;
    for s in 0..10_000u64 {
        let perm = key_to_permutation(&generate_key(128, 0xACC0 + s));
        let fixed = perm.mapping().iter().enumerate().filter(|&(i, &m)| i == m).count();
        total += fixed as f64 / 128.0;
    }
    let mean = total / 10_000.0;
    assert!(
        (mean - expected).abs() / expected <= 0.02,
        "[FAIL] criterion 6: mean accuracy {mean:.5} vs expected {expected:.5}"
    );
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 60.0, "[FAIL] criterion 6: took {dt:?}");
    println!(
        "[PASS] criterion 6: transparency 1e-12, clone MSE > 0 iff non-identity, mean accuracy {mean:.4} ~ {expected:.4} ({dt:?})"
    );
}

/// Criterion 7 — watermark soundness: 100 seeded embed/verify round trips
/// with zero false positives; single-cell full-window tampering detected at
/// 2% tolerance in 100% of cases (exhaustive at 10x10, sampled at 256x128).
/// Runtime < 1 min.
#[test]
fn criterion_7_watermark_soundness() {
    let t0 = Instant::now();
    let (node, device) = defaults();

    let mut rng = SplitMix64::new(0xA11CE);
    for trial in 0..100u64 {
        let rows = 2 + (rng.next_below(62) as usize);
        let cols = 1 + (rng.next_below(32) as usize);
        let placement = match trial % 3 {
            0 => Placement::End,
            1 => Placement::Begin,
            _ => Placement::Interleaved,
        };
        let arr = random_array(rows, cols, 8000 + trial);
        let spec = make_watermark(rows, cols, 9000 + trial, placement, &node, &device);
        let wm = embed_watermark(arr, spec).unwrap();
        let measured = measure_probe_currents(&wm, EvalBackend::Ideal).unwrap();
        let report = verify_watermark(&measured, wm.watermark().unwrap()).unwrap();
        assert!(
            report.pass,
            "[FAIL] criterion 7: false positive at trial {trial} ({rows}x{cols}, worst {:.3e})",
            report.worst_deviation
        );
    }

    // Exhaustive tamper detection at 10x10 over 20 seeds.
    for seed in 0..20u64 {
        let arr = random_array(10, 10, 10_000 + seed);
        let spec = make_watermark(10, 10, 11_000 + seed, Placement::End, &node, &device);
        let wm = embed_watermark(arr, spec).unwrap();
        for row in 0..10 {
            for (c, col) in wm.watermark().unwrap().column_indices().into_iter().enumerate() {
                let old = read_raw_conductances(&wm)[(row, col)];
                let tampered = wm
                    .with_cell_conductance(row, col, flip_to_far_extreme(old, &device))
                    .unwrap();
                let measured = measure_probe_currents(&tampered, EvalBackend::Ideal).unwrap();
                let report = verify_watermark(&measured, wm.watermark().unwrap()).unwrap();
                assert!(
                    !report.pass,
                    "[FAIL] criterion 7: missed tamper at seed {seed} cell ({row}, wm{c})"
                );
            }
        }
    }

    // Sampled tamper detection at 256x128.
    let arr = random_array(256, 128, 0xB16);
    let spec = make_watermark(256, 128, 0xB17, Placement::End, &node, &device);
    let wm = embed_watermark(arr, spec).unwrap();
    let mut srng = SplitMix64::new(0xB18);
    for _ in 0..40 {
        let row = srng.next_below(256) as usize;
        let c = srng.next_below(2) as usize;
        let col = wm.watermark().unwrap().column_indices()[c];
        let old = read_raw_conductances(&wm)[(row, col)];
        let tampered = wm
            .with_cell_conductance(row, col, flip_to_far_extreme(old, &device))
            .unwrap();
        let measured = measure_probe_currents(&tampered, EvalBackend::Ideal).unwrap();
        let report = verify_watermark(&measured, wm.watermark().unwrap()).unwrap();
        assert!(
            !report.pass,
            "[FAIL] criterion 7: missed tamper at 256x128 cell ({row}, wm{c})"
        );
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 60.0, "[FAIL] criterion 7: took {dt:?}");
    println!("[PASS] criterion 7: 100 clean round trips, 400 + 40 tampers all detected ({dt:?})");
}

/// Criterion 8 — data path: IDX parse/serialize round-trips byte-exactly;
/// prepared vectors for M in {10, 128, 256} lie in [0, 1]; synthetic
/// chirps are unit-modulus at infinite SNR. Runtime < 30 s.
#[test]
fn criterion_8_data_path() {
    let t0 = Instant::now();

    let pixels: Vec<u8> = (0..6 * 28 * 28).map(|i| (i * 7 % 256) as u8).collect();
    let images = IdxTensor::Images {
        count: 6,
        height: 28,
        width: 28,
        pixels,
    };
    let bytes = images.to_idx_bytes();
    let parsed = load_idx(&bytes).unwrap();
    assert_eq!(
        parsed.to_idx_bytes(),
        bytes,
        "[FAIL] criterion 8: IDX round trip not byte-exact"
    );
    let labels = IdxTensor::Labels(vec![3, 1, 4, 1, 5, 9]);
    assert_eq!(load_idx(&labels.to_idx_bytes()).unwrap(), labels);

    let csv_batch = SampleBatch::new(
        parse_csv_vectors("0.0,0.5,1.0,0.25\n0.9,0.1,0.3,0.7\n").unwrap(),
        None,
        "csv",
    )
    .unwrap();
    for m in [10usize, 128, 256] {
        let mnist = mnist_batch(&parsed, Some(&labels), m, 6).unwrap();
        let lora = lora_batch(7, 4, 4, m, 0xC0FFEE, Some(15.0)).unwrap();
        for batch in [&mnist, &lora, &csv_batch] {
            for v in &batch.vectors {
                assert!(
                    v.iter().all(|&x| (0.0..=1.0).contains(&x)),
                    "[FAIL] criterion 8: {} vector out of [0,1] at M={m}",
                    batch.source
                );
            }
            assert!(batch.to_input_vectors(0.2).is_ok());
        }
    }

    let spec = ChirpSpec::new(9, vec![0, 100, 511]).unwrap();
    for x in gen_lora_chirps(&spec, 1, None) {
        assert!(
            (x.norm() - 1.0).abs() < 1e-12,
            "[FAIL] criterion 8: chirp modulus {:.3e}",
            x.norm()
        );
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 30.0, "[FAIL] criterion 8: took {dt:?}");
    println!(
        "[PASS] criterion 8: IDX byte-exact, vectors in [0,1] for M in {{10,128,256}}, chirps unit-modulus ({dt:?})"
    );
}
