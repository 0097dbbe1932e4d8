//! Watermark protection columns: two dedicated columns carrying a fixed
//! seeded conductance pattern, verified through their current signatures
//! under known probe inputs, with configurable placement and a camouflage
//! metric.
//!
//! # Probe construction and the detection bound
//!
//! Probes are row-partition vectors: the rows are shuffled by the seed and
//! dealt round-robin into `k` groups; probe `p` drives the rows of group
//! `p` at `v_read` and leaves the rest at 0. With group size capped at 24,
//! a worst-case single-cell tamper (cell moved to its far conductance
//! extreme, a change of at least half the device window) shifts that
//! group's signature entry by at least
//! `(window/2 * v_read) / (24 * g_on * v_read) = 2.06%` of its maximum
//! possible value — above the 2% verification tolerance for every cell,
//! every seed. `k = max(4, ceil(rows/24))` keeps the default probe count
//! at 4 for small and mid arrays while preserving the bound for large
//! ones. Unstructured uniform probes cannot give this guarantee: at 256
//! rows a single-cell flip moves a uniform-probe signature by under 2% in
//! a sizeable fraction of cases.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crossbar::{ideal_mvm, CrossbarArray, InputVector};
use crate::device::{MemristorParams, TechNodeParams};
use crate::error::{Error, Result};
use crate::grid::Matrix;
use crate::permutor::store_permuted;
use crate::rng::{derive_seed, SplitMix64};
use crate::solver::{build_network, column_currents, solve_network};

/// Default relative deviation bound for signature verification.
pub const DEFAULT_TOLERANCE: f64 = 0.02;
/// Division guard when a signature entry is essentially zero (1 pA).
const SIGNATURE_FLOOR: f64 = 1e-12;
/// Number of watermark columns.
pub const WM_COLS: usize = 2;
/// Largest probe group size that keeps single-cell tampering detectable at
/// the default tolerance (see module docs).
const MAX_PROBE_GROUP: usize = 24;

/// Where the watermark columns sit among the data columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    /// Columns 0 and 1.
    Begin,
    /// Columns N and N+1, after all data columns.
    End,
    /// Two seeded distinct positions anywhere in the widened array.
    Interleaved,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Placement::Begin => "begin",
            Placement::End => "end",
            Placement::Interleaved => "interleaved",
        };
        f.write_str(s)
    }
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "begin" => Ok(Placement::Begin),
            "end" => Ok(Placement::End),
            "interleaved" => Ok(Placement::Interleaved),
            other => Err(Error::Format(format!(
                "unknown placement `{other}` (expected begin|end|interleaved)"
            ))),
        }
    }
}

/// Which evaluation path produces and checks current signatures.
///
/// Signature generation and later verification must share a backend (and
/// node parameters): on-chip the signature and the measurement travel the
/// same physical path, and mixing backends would conflate modeling error
/// with tampering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalBackend {
    /// Pure Kirchhoff/Ohm column sums.
    Ideal,
    /// Full parasitic network solve.
    Parasitic,
}

/// Watermark definition: placement, pattern, probe inputs and the expected
/// current signature.
#[derive(Debug, Clone, PartialEq)]
pub struct WatermarkSpec {
    rows: usize,
    data_cols: usize,
    seed: u64,
    placement: Placement,
    /// Physical positions of the two watermark columns, ascending.
    column_indices: [usize; 2],
    /// rows x 2 conductances, logical row order.
    pattern: Matrix,
    /// k probe vectors, each of length `rows`, values in {0, v_read}.
    probe_inputs: Vec<Vec<f64>>,
    /// k x 2 expected currents.
    signature: Matrix,
    tolerance: f64,
}

/// Outcome of a signature check.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub pass: bool,
    /// Relative deviation per probe (rows) and watermark column (2 cols).
    pub deviations: Vec<[f64; 2]>,
    pub worst_deviation: f64,
    pub columns_checked: [usize; 2],
    pub tolerance: f64,
}

/// Probe count for a given row count: 4 until the group-size cap forces
/// more.
pub fn probe_count(rows: usize) -> usize {
    4usize.max(rows.div_ceil(MAX_PROBE_GROUP))
}

/// Builds a watermark for an array of `rows` x `data_cols`: seeded pattern
/// uniform across the device window (so watermark cells match the
/// statistical range of data cells), seeded placement, row-partition
/// probes, and the ideal-MVM signature. Deterministic in
/// `(rows, data_cols, seed, placement)`.
pub fn make_watermark(
    rows: usize,
    data_cols: usize,
    seed: u64,
    placement: Placement,
    node: &TechNodeParams,
    device: &MemristorParams,
) -> WatermarkSpec {
    let mut pattern_rng = SplitMix64::new(derive_seed(seed, "wm-pattern"));
    let pattern = Matrix::generate(rows, WM_COLS, |_, _| {
        pattern_rng.next_range(device.g_off, device.g_on)
    });

    let column_indices = match placement {
        Placement::Begin => [0, 1],
        Placement::End => [data_cols, data_cols + 1],
        Placement::Interleaved => {
            let mut rng = SplitMix64::new(derive_seed(seed, "wm-placement"));
            let total = data_cols + WM_COLS;
            let first = rng.next_below(total as u64) as usize;
            let mut second = rng.next_below(total as u64 - 1) as usize;
            if second >= first {
                second += 1;
            }
            let (a, b) = if first < second { (first, second) } else { (second, first) };
            [a, b]
        }
    };

    let k = probe_count(rows);
    let mut order: Vec<usize> = (0..rows).collect();
    SplitMix64::new(derive_seed(seed, "wm-probes")).shuffle(&mut order);
    let mut probe_inputs = vec![vec![0.0; rows]; k];
    for (slot, &row) in order.iter().enumerate() {
        probe_inputs[slot % k][row] = node.v_read;
    }

    let mut signature = Matrix::zeros(k, WM_COLS);
    for (p, probe) in probe_inputs.iter().enumerate() {
        for c in 0..WM_COLS {
            let mut acc = 0.0;
            for (i, &v) in probe.iter().enumerate() {
                acc += pattern[(i, c)] * v;
            }
            signature[(p, c)] = acc;
        }
    }

    WatermarkSpec {
        rows,
        data_cols,
        seed,
        placement,
        column_indices,
        pattern,
        probe_inputs,
        signature,
        tolerance: DEFAULT_TOLERANCE,
    }
}

impl WatermarkSpec {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn data_cols(&self) -> usize {
        self.data_cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn column_indices(&self) -> [usize; 2] {
        self.column_indices
    }

    pub fn pattern(&self) -> &Matrix {
        &self.pattern
    }

    pub fn probe_inputs(&self) -> &[Vec<f64>] {
        &self.probe_inputs
    }

    pub fn signature(&self) -> &Matrix {
        &self.signature
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        if !tolerance.is_finite() || tolerance <= 0.0 {
            return Err(Error::OutOfRange(format!("tolerance {tolerance} must be > 0")));
        }
        self.tolerance = tolerance;
        Ok(self)
    }

    /// Serializes the regenerable part of the spec as structured text.
    /// Pattern, probes and signature are reproduced from the seed on load,
    /// so files stay small.
    pub fn to_config_string(&self) -> String {
        format!(
            "rows = {}\ndata_cols = {}\nseed = {}\nplacement = {}\ntolerance = {}\nprobes = {}\ncolumns = {},{}\n",
            self.rows,
            self.data_cols,
            self.seed,
            self.placement,
            self.tolerance,
            self.probe_inputs.len(),
            self.column_indices[0],
            self.column_indices[1],
        )
    }

    /// Rebuilds a spec from [`to_config_string`](Self::to_config_string)
    /// output, regenerating pattern/probes/signature from the seed and
    /// cross-checking the recorded placement columns and probe count.
    pub fn from_config_str(
        text: &str,
        node: &TechNodeParams,
        device: &MemristorParams,
    ) -> Result<Self> {
        let mut rows = None;
        let mut data_cols = None;
        let mut seed = None;
        let mut placement = None;
        let mut tolerance = None;
        let mut probes = None;
        let mut columns = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Format(format!("line {}: bad {what} `{value}`", lineno + 1));
            match key {
                "rows" => rows = Some(value.parse::<usize>().map_err(|_| bad("row count"))?),
                "data_cols" => {
                    data_cols = Some(value.parse::<usize>().map_err(|_| bad("column count"))?)
                }
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad("seed"))?),
                "placement" => placement = Some(value.parse::<Placement>()?),
                "tolerance" => tolerance = Some(value.parse::<f64>().map_err(|_| bad("tolerance"))?),
                "probes" => probes = Some(value.parse::<usize>().map_err(|_| bad("probe count"))?),
                "columns" => {
                    let (a, b) = value
                        .split_once(',')
                        .ok_or_else(|| bad("column pair"))?;
                    columns = Some([
                        a.trim().parse::<usize>().map_err(|_| bad("column index"))?,
                        b.trim().parse::<usize>().map_err(|_| bad("column index"))?,
                    ]);
                }
                other => return Err(Error::Format(format!("unknown key `{other}`"))),
            }
        }
        let missing = |what: &str| Error::Format(format!("missing `{what}`"));
        let rows = rows.ok_or_else(|| missing("rows"))?;
        let data_cols = data_cols.ok_or_else(|| missing("data_cols"))?;
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let placement = placement.ok_or_else(|| missing("placement"))?;
        let spec = make_watermark(rows, data_cols, seed, placement, node, device)
            .with_tolerance(tolerance.unwrap_or(DEFAULT_TOLERANCE))?;
        if let Some(cols) = columns {
            if cols != spec.column_indices {
                return Err(Error::Format(format!(
                    "recorded columns {cols:?} disagree with regenerated {:?}",
                    spec.column_indices
                )));
            }
        }
        if let Some(k) = probes {
            if k != spec.probe_inputs.len() {
                return Err(Error::Format(format!(
                    "recorded probe count {k} disagrees with regenerated {}",
                    spec.probe_inputs.len()
                )));
            }
        }
        Ok(spec)
    }
}

/// Installs the watermark columns into an array, shifting data columns as
/// needed. Data-column currents under the ideal MVM are unchanged by the
/// embedding (columns do not couple in the ideal model).
pub fn embed_watermark(array: CrossbarArray, spec: WatermarkSpec) -> Result<CrossbarArray> {
    if array.watermark.is_some() {
        return Err(Error::State("array already carries a watermark".into()));
    }
    if spec.rows != array.rows() || spec.data_cols != array.data_cols() {
        return Err(Error::ShapeMismatch {
            expected: format!("watermark for {}x{}", array.rows(), array.data_cols()),
            actual: format!("{}x{}", spec.rows, spec.data_cols),
        });
    }
    // The stored grid is physical: if a permutor key is already attached,
    // the pattern rows must land in the same permuted order.
    let pattern_physical = match array.key() {
        Some(key) => store_permuted(&spec.pattern, key)?,
        None => spec.pattern.clone(),
    };
    let rows = array.rows();
    let total = array.data_cols() + WM_COLS;
    let mut grid = Matrix::zeros(rows, total);
    let [wm0, wm1] = spec.column_indices;
    let mut data_positions = Vec::with_capacity(array.data_cols());
    for c in 0..total {
        if c != wm0 && c != wm1 {
            data_positions.push(c);
        }
    }
    for i in 0..rows {
        grid[(i, wm0)] = pattern_physical[(i, 0)];
        grid[(i, wm1)] = pattern_physical[(i, 1)];
        for (j, &c) in data_positions.iter().enumerate() {
            grid[(i, c)] = array.conductances[(i, j)];
        }
    }
    let mut out = array;
    out.wm_cols = WM_COLS;
    out.conductances = grid;
    out.watermark = Some(spec);
    Ok(out)
}

/// Measures the probe responses of an array through the chosen backend,
/// returning a k x (total columns) current matrix.
pub fn measure_probe_currents(array: &CrossbarArray, backend: EvalBackend) -> Result<Matrix> {
    let spec = array
        .watermark()
        .ok_or_else(|| Error::State("array has no watermark to measure".into()))?;
    let mut rows = Vec::with_capacity(spec.probe_inputs.len());
    match backend {
        EvalBackend::Ideal => {
            for probe in &spec.probe_inputs {
                rows.push(ideal_mvm(array, &InputVector::from_raw(probe.clone()))?);
            }
        }
        EvalBackend::Parasitic => {
            let net = build_network(array);
            for probe in &spec.probe_inputs {
                let sol = solve_network(&net, &InputVector::from_raw(probe.clone()))?;
                rows.push(column_currents(&net, &sol));
            }
        }
    }
    Matrix::from_rows(&rows)
}

/// Replaces the embedded watermark's signature with one measured through
/// `backend` on this very array. Required before parasitic-backend
/// verification: the ideal signature generated by [`make_watermark`] does
/// not account for wire drops.
pub fn resign_watermark(array: CrossbarArray, backend: EvalBackend) -> Result<CrossbarArray> {
    let measured = measure_probe_currents(&array, backend)?;
    let mut array = array;
    let spec = array
        .watermark
        .as_mut()
        .expect("measure_probe_currents verified presence");
    let mut signature = Matrix::zeros(spec.probe_inputs.len(), WM_COLS);
    for p in 0..spec.probe_inputs.len() {
        for (c, &col) in spec.column_indices.iter().enumerate() {
            signature[(p, c)] = measured[(p, col)];
        }
    }
    spec.signature = signature;
    Ok(array)
}

/// Checks measured probe currents against the spec's signature.
///
/// `measured` must hold one row per probe over all physical columns.
/// Deviation is `|measured - expected| / max(|expected|, 1 pA)`; the
/// check passes iff every deviation is within the spec tolerance.
pub fn verify_watermark(measured: &Matrix, spec: &WatermarkSpec) -> Result<VerificationReport> {
    let k = spec.probe_inputs.len();
    let total = spec.data_cols + WM_COLS;
    if measured.rows() != k || measured.cols() != total {
        return Err(Error::ShapeMismatch {
            expected: format!("{k}x{total} measured currents"),
            actual: format!("{}x{}", measured.rows(), measured.cols()),
        });
    }
    let mut deviations = Vec::with_capacity(k);
    let mut worst = 0.0f64;
    for p in 0..k {
        let mut row = [0.0; 2];
        for (c, &col) in spec.column_indices.iter().enumerate() {
            let expected = spec.signature[(p, c)];
            let dev = (measured[(p, col)] - expected).abs() / expected.abs().max(SIGNATURE_FLOOR);
            row[c] = dev;
            worst = worst.max(dev);
        }
        deviations.push(row);
    }
    Ok(VerificationReport {
        pass: worst <= spec.tolerance,
        deviations,
        worst_deviation: worst,
        columns_checked: spec.column_indices,
        tolerance: spec.tolerance,
    })
}

/// Models a worst-case tamper of one cell: reprogram it to whichever
/// device extreme is farther away (a change of at least half the window;
/// a cell already at an extreme moves the full window).
pub fn flip_to_far_extreme(g: f64, device: &MemristorParams) -> f64 {
    if g - device.g_off >= device.g_on - g {
        device.g_off
    } else {
        device.g_on
    }
}

/// Two-sample Kolmogorov-Smirnov statistic between the watermark columns'
/// currents and the data columns' currents over `k2` seeded uniform random
/// probes (ideal MVM). Lower means better camouflage; identical
/// distributions give values below the 5% critical line most of the time.
pub fn camouflage_stats(array: &CrossbarArray, probe_count: usize) -> Result<f64> {
    let spec = array
        .watermark()
        .ok_or_else(|| Error::State("array has no watermark".into()))?;
    let mut rng = SplitMix64::new(derive_seed(spec.seed, "camouflage"));
    let v_read = array.node().v_read;
    let wm_cols = spec.column_indices;
    let mut wm_sample = Vec::with_capacity(probe_count * WM_COLS);
    let mut data_sample = Vec::with_capacity(probe_count * spec.data_cols);
    for _ in 0..probe_count {
        let v: Vec<f64> = (0..array.rows()).map(|_| rng.next_range(0.0, v_read)).collect();
        let currents = ideal_mvm(array, &InputVector::from_raw(v))?;
        for (c, &i) in currents.iter().enumerate() {
            if wm_cols.contains(&c) {
                wm_sample.push(i);
            } else {
                data_sample.push(i);
            }
        }
    }
    Ok(ks_statistic(&mut wm_sample, &mut data_sample))
}

/// Two-sample KS statistic `sup_x |F_a(x) - F_b(x)|`. Ties are handled by
/// advancing both empirical CDFs past the tied value before comparing.
pub fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS needs nonempty samples");
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

/// Approximate 5% critical value of the two-sample KS statistic,
/// `c(0.05) * sqrt((n+m)/(n*m))` with `c(0.05) = 1.3581`.
pub fn ks_critical_5pct(n: usize, m: usize) -> f64 {
    1.3581 * (((n + m) as f64) / ((n * m) as f64)).sqrt()
}
