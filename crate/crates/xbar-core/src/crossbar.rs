//! Crossbar array data model: programming weights into cells, ideal
//! (parasitic-free) matrix-vector multiplication, raw state readout, and
//! composition with the two security mechanisms.
//!
//! The conductance grid is stored in *physical* order: when a permutor key
//! is attached the rows are already permuted, so [`read_raw_conductances`]
//! returns exactly what an adversary probing the cells would see. The
//! security semantics (input routing, watermark bookkeeping) are layered on
//! top of that physical grid.

use std::io::Write;

use crate::device::{conductance_from_weight, MemristorParams, TechNodeParams};
use crate::error::{Error, Result};
use crate::grid::Matrix;
use crate::permutor::{apply_permutor, store_permuted, PermKey};
use crate::watermark::WatermarkSpec;

/// Input voltages for one inference, one entry per logical row.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVector {
    volts: Vec<f64>,
}

impl InputVector {
    /// Validates `0 <= v_i <= v_read` for every entry. Out-of-range inputs
    /// are rejected rather than clipped; normalization is the data-ingest
    /// layer's job and silent clipping would hide bugs there.
    pub fn new(volts: Vec<f64>, v_read: f64) -> Result<Self> {
        for (i, &v) in volts.iter().enumerate() {
            if !(0.0 <= v && v <= v_read) {
                return Err(Error::OutOfRange(format!(
                    "input[{i}] = {v} V outside [0, {v_read}] V"
                )));
            }
        }
        Ok(Self { volts })
    }

    /// Skips the range check. Intended for analysis code that deliberately
    /// drives the linear model outside the electrical operating range
    /// (e.g. superposition checks).
    pub fn from_raw(volts: Vec<f64>) -> Self {
        Self { volts }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.volts
    }

    pub fn len(&self) -> usize {
        self.volts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volts.is_empty()
    }
}

/// A programmed 1T1R crossbar with optional security configuration.
#[derive(Debug, Clone)]
pub struct CrossbarArray {
    pub(crate) rows: usize,
    pub(crate) data_cols: usize,
    pub(crate) wm_cols: usize,
    /// rows x (data_cols + wm_cols), physical storage order.
    pub(crate) conductances: Matrix,
    pub(crate) key: Option<PermKey>,
    pub(crate) watermark: Option<WatermarkSpec>,
    pub(crate) node: TechNodeParams,
    pub(crate) device: MemristorParams,
}

impl CrossbarArray {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Data (weight-bearing) columns.
    pub fn data_cols(&self) -> usize {
        self.data_cols
    }

    pub fn wm_cols(&self) -> usize {
        self.wm_cols
    }

    /// Total physical columns, data plus watermark.
    pub fn total_cols(&self) -> usize {
        self.data_cols + self.wm_cols
    }

    pub fn node(&self) -> &TechNodeParams {
        &self.node
    }

    pub fn device(&self) -> &MemristorParams {
        &self.device
    }

    pub fn key(&self) -> Option<&PermKey> {
        self.key.as_ref()
    }

    pub fn watermark(&self) -> Option<&WatermarkSpec> {
        self.watermark.as_ref()
    }

    /// Physical column indices that carry data, in logical column order.
    pub fn data_column_indices(&self) -> Vec<usize> {
        match &self.watermark {
            None => (0..self.data_cols).collect(),
            Some(spec) => (0..self.total_cols())
                .filter(|c| !spec.column_indices().contains(c))
                .collect(),
        }
    }

    /// Attaches a permutor key: the storage grid is row-permuted in place
    /// and inputs are routed through the matching permutation from then on.
    pub fn with_permutor(mut self, key: PermKey) -> Result<Self> {
        if self.key.is_some() {
            return Err(Error::State("array already has a permutor key".into()));
        }
        if key.rows() != self.rows {
            return Err(Error::ShapeMismatch {
                expected: format!("key for {} rows", self.rows),
                actual: format!("key for {} rows", key.rows()),
            });
        }
        self.conductances = store_permuted(&self.conductances, &key)?;
        self.key = Some(key);
        Ok(self)
    }

    /// Returns a copy with one cell reprogrammed. Used to model tampering;
    /// the new value must stay inside the device window.
    pub fn with_cell_conductance(&self, row: usize, col: usize, g: f64) -> Result<Self> {
        if row >= self.rows || col >= self.total_cols() {
            return Err(Error::ShapeMismatch {
                expected: format!("cell within {}x{}", self.rows, self.total_cols()),
                actual: format!("({row}, {col})"),
            });
        }
        if !(self.device.g_off <= g && g <= self.device.g_on) {
            return Err(Error::OutOfRange(format!(
                "conductance {g} S outside device window [{}, {}]",
                self.device.g_off, self.device.g_on
            )));
        }
        let mut copy = self.clone();
        copy.conductances[(row, col)] = g;
        Ok(copy)
    }

    /// Writes the raw state as decimal CSV: a `rows,cols,wm_cols,node`
    /// header line followed by one line per row of conductances in siemens.
    /// Values use the shortest round-trip decimal form, so parsing the dump
    /// reproduces the grid bit-exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{},{},{},{}",
            self.rows, self.data_cols, self.wm_cols, self.node.node_id
        )?;
        for i in 0..self.rows {
            let line: Vec<String> = self.conductances.row(i).iter().map(|g| g.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Parses a [`write_csv`](Self::write_csv) dump back into an array.
    /// Security configuration is not part of the dump; the result is a
    /// plain physical-state snapshot.
    pub fn parse_csv(
        text: &str,
        node: TechNodeParams,
        device: MemristorParams,
    ) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
        let parts: Vec<&str> = header.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!(
                "header must be rows,cols,wm_cols,node — got `{header}`"
            )));
        }
        let rows: usize = parts[0]
            .parse()
            .map_err(|_| Error::Format("bad row count".into()))?;
        let data_cols: usize = parts[1]
            .parse()
            .map_err(|_| Error::Format("bad column count".into()))?;
        let wm_cols: usize = parts[2]
            .parse()
            .map_err(|_| Error::Format("bad watermark column count".into()))?;
        if parts[3] != node.node_id {
            return Err(Error::Format(format!(
                "dump was taken at node `{}`, asked to load as `{}`",
                parts[3], node.node_id
            )));
        }
        let total = data_cols + wm_cols;
        let mut data = Vec::with_capacity(rows * total);
        for (i, line) in lines.enumerate() {
            if i >= rows {
                return Err(Error::Format("more rows than the header declares".into()));
            }
            for field in line.split(',') {
                let g: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad conductance `{field}`")))?;
                data.push(g);
            }
        }
        let conductances = Matrix::from_vec(rows, total, data)?;
        for g in conductances.iter() {
            if !(device.g_off <= g && g <= device.g_on) {
                return Err(Error::OutOfRange(format!(
                    "conductance {g} S outside device window"
                )));
            }
        }
        Ok(Self {
            rows,
            data_cols,
            wm_cols,
            conductances,
            key: None,
            watermark: None,
            node,
            device,
        })
    }
}

/// Programs a weight matrix into a fresh, unsecured crossbar.
pub fn program_weights(
    rows: usize,
    cols: usize,
    weights: &Matrix,
    node: TechNodeParams,
    device: MemristorParams,
) -> Result<CrossbarArray> {
    // Node params are validated where they enter the system (registry and
    // config loading); degenerate values like zeroed series resistances are
    // legal here so the solver can be collapsed onto the ideal model.
    device.validate()?;
    if weights.rows() != rows || weights.cols() != cols {
        return Err(Error::ShapeMismatch {
            expected: format!("{rows}x{cols} weights"),
            actual: format!("{}x{}", weights.rows(), weights.cols()),
        });
    }
    let mut bad = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let w = weights[(i, j)];
            if !(0.0..=1.0).contains(&w) {
                bad.push((i, j));
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::OutOfRange(format!(
            "weights outside [0, 1] at indices {bad:?}"
        )));
    }
    let mut conductances = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            conductances[(i, j)] = conductance_from_weight(weights[(i, j)], &device)?;
        }
    }
    Ok(CrossbarArray {
        rows,
        data_cols: cols,
        wm_cols: 0,
        conductances,
        key: None,
        watermark: None,
        node,
        device,
    })
}

/// Ideal Kirchhoff/Ohm matrix-vector product: `I_j = sum_i G[i][j] * v_i`,
/// no parasitics, no series resistances. When a permutor key is attached
/// the inputs are first routed by [`apply_permutor`], so the outputs equal
/// the unpermuted model's outputs.
pub fn ideal_mvm(array: &CrossbarArray, v: &InputVector) -> Result<Vec<f64>> {
    if v.len() != array.rows {
        return Err(Error::ShapeMismatch {
            expected: format!("{} inputs", array.rows),
            actual: format!("{}", v.len()),
        });
    }
    let routed;
    let drive: &[f64] = match &array.key {
        Some(key) => {
            routed = apply_permutor(v.as_slice(), key)?;
            &routed
        }
        None => v.as_slice(),
    };
    let total = array.total_cols();
    let mut currents = vec![0.0; total];
    for (i, &vi) in drive.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let gi = array.conductances.row(i);
        for (j, current) in currents.iter_mut().enumerate() {
            *current += gi[j] * vi;
        }
    }
    Ok(currents)
}

/// Physical readout of the stored state: the permuted rows when a key is
/// attached, watermark columns in place. Never applies the inverse
/// permutation — this is the adversary's view.
pub fn read_raw_conductances(array: &CrossbarArray) -> &Matrix {
    &array.conductances
}
