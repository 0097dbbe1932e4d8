//! Desk-scale simulator for secured memristive crossbar arrays.
//!
//! Models analog matrix-vector multiplication on a parasitic-aware 1T1R
//! crossbar protected by two security mechanisms — a keyed triplet-swap
//! input permutor and watermark protection columns — together with a
//! white-box adversary model and an overhead-measurement pipeline (column
//! current, delay, power) across technology nodes and array sizes.
//!
//! # Layout
//!
//! - [`device`]: memristor window and per-node electrical parameters
//! - [`crossbar`]: the array data model and ideal (parasitic-free) MVM
//! - [`solver`]: wordline/bitline resistive network build and DC solve,
//!   Elmore delay, power
//! - [`permutor`]: keyed triplet-swap input permutation
//! - [`watermark`]: watermark columns, signatures, verification, camouflage
//! - [`adversary`]: white-box extraction, cloning and fidelity metrics
//! - [`ingest`]: MNIST IDX, synthetic LoRa chirps, CSV samples
//! - [`experiment`]: measurement protocol, sweeps and calibration
//! - [`report`]: overhead report emission (CSV/JSON)
//!
//! # Determinism
//!
//! Every run is a pure function of its seed and parameters: identical
//! invocations produce bitwise-identical results, with or without the
//! `parallel` feature (parallel loops are order-preserving index maps with
//! no cross-thread float reductions).
//!
//! # Example
//!
//! Program an array, secure it with a permutor key, and measure its
//! column currents through the parasitic network:
//!
//! ```
//! use xbar_core::crossbar::{ideal_mvm, program_weights, InputVector};
//! use xbar_core::device::{tech_node_params, MemristorParams};
//! use xbar_core::grid::Matrix;
//! use xbar_core::permutor::generate_key;
//! use xbar_core::solver::{build_network, column_currents, solve_network};
//!
//! let node = tech_node_params("45nm")?;
//! let device = MemristorParams::default();
//! let weights = Matrix::generate(6, 4, |i, j| ((i + j) % 5) as f64 / 4.0);
//! let array = program_weights(6, 4, &weights, node.clone(), device)?;
//! let inputs = InputVector::new(vec![0.15; 6], node.v_read)?;
//!
//! // The keyed permutor leaves the computation itself untouched...
//! let baseline = ideal_mvm(&array, &inputs)?;
//! let secured = array.with_permutor(generate_key(6, 42))?;
//! let routed = ideal_mvm(&secured, &inputs)?;
//! for (b, s) in baseline.iter().zip(&routed) {
//!     assert!((b - s).abs() < 1e-12 * b);
//! }
//!
//! // ...while the parasitic solve shows what the wires and switches cost.
//! let net = build_network(&secured);
//! let solution = solve_network(&net, &inputs)?;
//! let currents = column_currents(&net, &solution);
//! assert!(currents.iter().zip(&baseline).all(|(c, b)| c < b));
//! # Ok::<(), xbar_core::Error>(())
//! ```

pub mod adversary;
pub mod crossbar;
pub mod device;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod grid;
pub mod ingest;
pub mod permutor;
pub mod report;
pub mod rng;
pub mod solver;
pub mod sparse;
pub mod watermark;

pub use crate::error::{Error, Result};
