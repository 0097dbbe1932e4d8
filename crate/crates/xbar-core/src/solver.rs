//! Parasitic-aware electrical evaluation of a crossbar: builds the
//! resistive wordline/bitline network with per-segment wire resistance and
//! all series elements, solves the DC operating point, and derives column
//! currents, Elmore delay, and power.
//!
//! Topology per cell (i, j): a conductance `1/(1/G[i][j] + r_access)`
//! bridges wordline node w(i,j) and bitline node b(i,j); `r_wire` segments
//! chain w(i,j)-w(i,j+1) along rows and b(i,j)-b(i+1,j) down columns; row
//! drivers attach through `r_driver` (plus `r_switch` when a permutor is in
//! the path) at w(i,0); every column is sensed at b(M-1,j) through
//! `r_sense` to ground. Watermark columns extend the wordlines exactly like
//! data columns.
//!
//! Zero-valued resistances are legal degenerate inputs (used to collapse
//! the network onto the ideal MVM): such branches are contracted by
//! union-find instead of being stamped as infinite conductances, so the
//! assembled matrix stays well-conditioned. Capacitance does not enter the
//! DC solve at all; it only feeds the Elmore delay estimate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarArray, InputVector};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::permutor::{key_to_permutation, pass_transistor_count, RowPermutation};
use crate::sparse::{solve_spd, CsrMatrix, Preconditioner, TriLine};

/// Relative-residual target the CG loop iterates toward.
const SOLVE_TOL: f64 = 1e-12;
/// Hard residual bound the solution must satisfy.
const SOLVE_REQUIRED: f64 = 1e-9;

/// Where a branch endpoint landed after zero-resistance contraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeRef {
    Unknown(usize),
    Source(usize),
    Ground,
}

#[derive(Debug, Clone)]
enum DriverTap {
    /// Intact driver branch into the network.
    Branch { node: NodeRef, g: f64 },
    /// Driver resistance was zero: the source rail merged into the network;
    /// its current is recovered from the incident branches.
    Merged,
}

#[derive(Debug, Clone)]
enum SenseTap {
    /// Intact sense branch: `I_j = V(b(M-1,j)) * g`.
    Branch { node: NodeRef, g: f64 },
    /// Sense resistance was zero: the column current is recovered as the
    /// sum of its cell currents (the bitline has no other path to ground).
    Shorted,
}

/// Assembled nodal system for one crossbar, reusable across input vectors.
#[derive(Debug, Clone)]
pub struct ResistiveNetwork {
    rows: usize,
    total_cols: usize,
    matrix: CsrMatrix,
    /// `(unknown index, source row, g)`: right-hand-side couplings whose
    /// contribution is `g * v_row` for the routed input `v`.
    source_couplings: Vec<(usize, usize, f64)>,
    /// Unknowns directly coupled to ground or a source (anchors).
    anchored: Vec<bool>,
    driver_taps: Vec<DriverTap>,
    /// Per source row, every resistive branch incident to its merged rail.
    source_links: Vec<Vec<(NodeRef, f64)>>,
    sense_taps: Vec<SenseTap>,
    /// Per column, the (wordline ref, bitline ref, cell conductance) of
    /// every cell feeding it.
    column_cells: Vec<Vec<(NodeRef, NodeRef, f64)>>,
    routing: Option<RowPermutation>,
    branch_count: usize,
    precond: Preconditioner,
}

/// DC operating point of a [`ResistiveNetwork`] for one input vector.
#[derive(Debug, Clone)]
pub struct NodeSolution {
    /// Voltages of the unknown (non-contracted, non-fixed) nodes.
    pub voltages: Vec<f64>,
    /// Final `||b - Ax|| / ||b||` of the nodal system.
    pub relative_residual: f64,
    pub iterations: usize,
    /// Physically-routed source voltages this solution was computed for.
    drive: Vec<f64>,
}

/// Measured quantities of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Column currents in amperes, physical column order (data plus
    /// watermark columns). For batched runs these are per-column means.
    pub column_currents: Vec<f64>,
    /// Worst-path Elmore delay estimate (s).
    pub delay_s: f64,
    /// Total power: array DC power plus security peripheral power (W).
    pub power_w: f64,
    pub provenance: Provenance,
}

/// Configuration that produced a [`SimResult`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub node: String,
    pub rows: usize,
    pub cols: usize,
    pub wm_cols: usize,
    pub permutor: bool,
    pub watermark: bool,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Builds the nodal conductance system for an array. The matrix depends
/// only on the array (not on the inputs), so one network serves any number
/// of [`solve_network`] calls.
pub fn build_network(array: &CrossbarArray) -> ResistiveNetwork {
    let m = array.rows();
    let t = array.total_cols();
    let tn = array.node();
    let g = &array.conductances;

    let w_id = |i: usize, j: usize| i * t + j;
    let b_id = |i: usize, j: usize| m * t + i * t + j;
    let source_id = |i: usize| 2 * m * t + i;
    let ground_id = 2 * m * t + m;
    let universe = 2 * m * t + m + 1;

    let r_driver_total = tn.r_driver + if array.key().is_some() { tn.r_switch } else { 0.0 };

    // (endpoint a, endpoint b, resistance)
    let mut branches: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * m * t + m + t);
    for i in 0..m {
        branches.push((source_id(i), w_id(i, 0), r_driver_total));
        for j in 0..t.saturating_sub(1) {
            branches.push((w_id(i, j), w_id(i, j + 1), tn.r_wire));
        }
    }
    for j in 0..t {
        for i in 0..m.saturating_sub(1) {
            branches.push((b_id(i, j), b_id(i + 1, j), tn.r_wire));
        }
        branches.push((b_id(m - 1, j), ground_id, tn.r_sense));
    }
    for i in 0..m {
        for j in 0..t {
            let r_cell = 1.0 / g[(i, j)] + tn.r_access;
            branches.push((w_id(i, j), b_id(i, j), r_cell));
        }
    }
    let branch_count = branches.len();

    // Contract zero-resistance branches.
    let mut uf = UnionFind::new(universe);
    for &(a, b, r) in &branches {
        if r == 0.0 {
            uf.union(a, b);
        }
    }

    // Classify representatives: ground, sources, then number the unknowns.
    let mut refs: Vec<Option<NodeRef>> = vec![None; universe];
    refs[uf.find(ground_id)] = Some(NodeRef::Ground);
    for i in 0..m {
        let rep = uf.find(source_id(i));
        debug_assert!(refs[rep].is_none(), "source rail merged with another fixed node");
        refs[rep] = Some(NodeRef::Source(i));
    }
    let mut unknown_count = 0;
    for id in 0..universe {
        let rep = uf.find(id);
        if refs[rep].is_none() {
            refs[rep] = Some(NodeRef::Unknown(unknown_count));
            unknown_count += 1;
        }
    }
    let mut node_ref = {
        let refs = &refs;
        let uf = &mut uf;
        move |id: usize| refs[uf.find(id)].unwrap()
    };

    // Stamp the surviving branches.
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * branch_count);
    let mut source_couplings = Vec::new();
    let mut anchored = vec![false; unknown_count];
    let mut source_links: Vec<Vec<(NodeRef, f64)>> = vec![Vec::new(); m];
    for &(a, b, r) in &branches {
        if r == 0.0 {
            continue;
        }
        let gbr = 1.0 / r;
        let (ra, rb) = (node_ref(a), node_ref(b));
        match (ra, rb) {
            (NodeRef::Unknown(x), NodeRef::Unknown(y)) => {
                if x != y {
                    triplets.push((x, x, gbr));
                    triplets.push((y, y, gbr));
                    triplets.push((x, y, -gbr));
                    triplets.push((y, x, -gbr));
                }
            }
            (NodeRef::Unknown(x), NodeRef::Ground) | (NodeRef::Ground, NodeRef::Unknown(x)) => {
                triplets.push((x, x, gbr));
                anchored[x] = true;
            }
            (NodeRef::Unknown(x), NodeRef::Source(s))
            | (NodeRef::Source(s), NodeRef::Unknown(x)) => {
                triplets.push((x, x, gbr));
                source_couplings.push((x, s, gbr));
                anchored[x] = true;
                source_links[s].push((NodeRef::Unknown(x), gbr));
            }
            (NodeRef::Source(s), other) | (other, NodeRef::Source(s)) => {
                // Branch between two fixed nodes: no equation, but it still
                // carries current out of the source rail.
                source_links[s].push((other, gbr));
            }
            (NodeRef::Ground, NodeRef::Ground) => {}
        }
    }
    let matrix = CsrMatrix::from_triplets(unknown_count, &triplets);

    let driver_taps = (0..m)
        .map(|i| {
            if r_driver_total == 0.0 {
                DriverTap::Merged
            } else {
                DriverTap::Branch {
                    node: node_ref(w_id(i, 0)),
                    g: 1.0 / r_driver_total,
                }
            }
        })
        .collect();
    let sense_taps = (0..t)
        .map(|j| {
            if tn.r_sense == 0.0 {
                SenseTap::Shorted
            } else {
                SenseTap::Branch {
                    node: node_ref(b_id(m - 1, j)),
                    g: 1.0 / tn.r_sense,
                }
            }
        })
        .collect();
    let column_cells = (0..t)
        .map(|j| {
            (0..m)
                .map(|i| {
                    let g_cell = 1.0 / (1.0 / g[(i, j)] + tn.r_access);
                    (node_ref(w_id(i, j)), node_ref(b_id(i, j)), g_cell)
                })
                .collect()
        })
        .collect();

    // Wire chains dominate the spectrum (wire conductance is orders of
    // magnitude above the cell couplings), so solve each wordline and
    // bitline exactly inside the preconditioner. Only available when no
    // contraction disturbed the regular layout; degenerate topologies fall
    // back to Jacobi.
    let no_contraction = r_driver_total > 0.0 && tn.r_wire > 0.0 && tn.r_sense > 0.0;
    let precond = if no_contraction && unknown_count == 2 * m * t {
        let diag = matrix.diagonal();
        let g_wire = 1.0 / tn.r_wire;
        let mut lines = Vec::with_capacity(m + t);
        for i in 0..m {
            let idx: Vec<usize> = (0..t).map(|j| w_id(i, j)).collect();
            let d: Vec<f64> = idx.iter().map(|&u| diag[u]).collect();
            lines.push(TriLine::factor(idx, d, vec![-g_wire; t - 1]));
        }
        for j in 0..t {
            let idx: Vec<usize> = (0..m).map(|i| b_id(i, j)).collect();
            let d: Vec<f64> = idx.iter().map(|&u| diag[u]).collect();
            lines.push(TriLine::factor(idx, d, vec![-g_wire; m - 1]));
        }
        match lines.into_iter().collect::<Option<Vec<_>>>() {
            Some(lines) => Preconditioner::Lines(lines),
            None => Preconditioner::jacobi_of(&matrix).unwrap_or(Preconditioner::Identity),
        }
    } else {
        Preconditioner::jacobi_of(&matrix).unwrap_or(Preconditioner::Identity)
    };

    ResistiveNetwork {
        rows: m,
        total_cols: t,
        matrix,
        source_couplings,
        anchored,
        driver_taps,
        source_links,
        sense_taps,
        column_cells,
        routing: array.key().map(key_to_permutation),
        branch_count,
        precond,
    }
}

impl ResistiveNetwork {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn total_cols(&self) -> usize {
        self.total_cols
    }

    /// Wordline plus bitline node count before contraction.
    pub fn internal_node_count(&self) -> usize {
        2 * self.rows * self.total_cols
    }

    /// Resistive branches in the uncontracted network.
    pub fn branch_count(&self) -> usize {
        self.branch_count
    }

    /// Unknowns actually solved for (after contraction).
    pub fn unknown_count(&self) -> usize {
        self.matrix.size()
    }

    /// Routes a logical input vector onto the physical source rails.
    fn route(&self, v: &[f64]) -> Vec<f64> {
        match &self.routing {
            None => v.to_vec(),
            Some(perm) => {
                let mut out = vec![0.0; v.len()];
                for (logical, &physical) in perm.mapping().iter().enumerate() {
                    out[physical] = v[logical];
                }
                out
            }
        }
    }

    fn potential(&self, r: NodeRef, sol: &NodeSolution) -> f64 {
        match r {
            NodeRef::Unknown(x) => sol.voltages[x],
            NodeRef::Source(s) => sol.drive[s],
            NodeRef::Ground => 0.0,
        }
    }

    /// Structural sanity: symmetric stamps, positive diagonal, and every
    /// unknown connected to an anchor (driven source or ground) through the
    /// stamped branches.
    pub fn is_well_formed(&self) -> bool {
        if self.matrix.asymmetry() != 0.0 {
            return false;
        }
        let n = self.matrix.size();
        if n == 0 {
            return true;
        }
        if self.matrix.diagonal().iter().any(|&d| d <= 0.0) {
            return false;
        }
        // BFS from anchored unknowns over off-diagonal structure.
        let mut seen = self.anchored.clone();
        let mut queue: Vec<usize> =
            (0..n).filter(|&i| self.anchored[i]).collect();
        while let Some(u) = queue.pop() {
            for (c, _) in self.matrix.row_entries(u) {
                if c != u && !seen[c] {
                    seen[c] = true;
                    queue.push(c);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Dumps the assembled system matrix in Matrix Market coordinate text
    /// format (1-based, general symmetric content) for cross-validation
    /// with external solvers.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(
            w,
            "% crossbar nodal system: {} unknowns of {} internal nodes",
            self.matrix.size(),
            self.internal_node_count()
        )?;
        writeln!(w, "{} {} {}", self.matrix.size(), self.matrix.size(), self.matrix.nnz())?;
        for r in 0..self.matrix.size() {
            for (c, v) in self.matrix.row_entries(r) {
                writeln!(w, "{} {} {}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Solves the network for one logical input vector.
///
/// Runs the inner mat-vec sequentially: at desk-scale networks the per-row
/// work is too small for row-level parallelism to pay off, so the parallel
/// grain lives one level up (input batches in `run_config`, grid cells in
/// `sweep`). [`solve_network_with`] exposes the row-parallel backend
/// explicitly; the bench suite compares both.
pub fn solve_network(net: &ResistiveNetwork, v: &InputVector) -> Result<NodeSolution> {
    solve_network_with(net, v, ExecMode::Sequential)
}

/// Solves Kirchhoff's current law at every unknown node to a relative
/// residual of at most 1e-9 (typically 1e-12). Deterministic: identical
/// inputs give bitwise-identical solutions on either backend.
pub fn solve_network_with(
    net: &ResistiveNetwork,
    v: &InputVector,
    mode: ExecMode,
) -> Result<NodeSolution> {
    if v.len() != net.rows {
        return Err(Error::ShapeMismatch {
            expected: format!("{} inputs", net.rows),
            actual: format!("{}", v.len()),
        });
    }
    let drive = net.route(v.as_slice());
    let mut rhs = vec![0.0; net.matrix.size()];
    for &(x, s, g) in &net.source_couplings {
        rhs[x] += g * drive[s];
    }
    let sol = solve_spd(&net.matrix, &rhs, &net.precond, SOLVE_TOL, SOLVE_REQUIRED, mode)?;
    Ok(NodeSolution {
        voltages: sol.x,
        relative_residual: sol.relative_residual,
        iterations: sol.iterations,
        drive,
    })
}

/// Column currents at the sense resistors: `I_j = V(b(M-1,j)) / r_sense`,
/// falling back to the column's cell-current sum when the sense branch is
/// shorted (`r_sense = 0`), which equals the same current by conservation.
pub fn column_currents(net: &ResistiveNetwork, sol: &NodeSolution) -> Vec<f64> {
    (0..net.total_cols)
        .map(|j| match net.sense_taps[j] {
            SenseTap::Branch { node, g } => net.potential(node, sol) * g,
            SenseTap::Shorted => net.column_cells[j]
                .iter()
                .map(|&(w, b, g)| g * (net.potential(w, sol) - net.potential(b, sol)))
                .sum(),
        })
        .collect()
}

/// Current delivered by each row driver.
pub fn source_currents(net: &ResistiveNetwork, sol: &NodeSolution) -> Vec<f64> {
    (0..net.rows)
        .map(|i| match &net.driver_taps[i] {
            DriverTap::Branch { node, g } => (sol.drive[i] - net.potential(*node, sol)) * g,
            DriverTap::Merged => net.source_links[i]
                .iter()
                .map(|&(other, g)| g * (sol.drive[i] - net.potential(other, sol)))
                .sum(),
        })
        .collect()
}

/// Elmore estimate of the worst signal path: the driver at column 0
/// through its wordline to the far column, through the strongest cell,
/// down the full bitline. Watermark columns lengthen the wordline term;
/// the permutor adds its pass-transistor resistance at the driver.
pub fn estimate_delay(array: &CrossbarArray) -> f64 {
    let tn = array.node();
    let t = array.total_cols() as f64;
    let m = array.rows() as f64;
    let c = tn.c_wire;
    let r_drv = tn.r_driver + if array.key().is_some() { tn.r_switch } else { 0.0 };
    let r_cell_min = 1.0 / array.device().g_on + tn.r_access;
    r_drv * t * c
        + tn.r_wire * c * t * (t + 1.0) / 2.0
        + r_cell_min * m * c
        + tn.r_wire * c * m * (m + 1.0) / 2.0
}

/// Total power for one operating point: DC power delivered by the row
/// drivers plus the security peripherals' static overhead
/// (`pass transistors * p_switch` for the permutor, `columns * p_wm_col`
/// for the watermark).
pub fn estimate_power(
    net: &ResistiveNetwork,
    sol: &NodeSolution,
    v: &InputVector,
    array: &CrossbarArray,
) -> f64 {
    debug_assert_eq!(v.len(), net.rows);
    let array_power: f64 = source_currents(net, sol)
        .iter()
        .zip(&sol.drive)
        .map(|(i, vd)| vd * i)
        .sum();
    let tn = array.node();
    let mut peripheral = 0.0;
    if array.key().is_some() {
        peripheral += pass_transistor_count(array.rows()) as f64 * tn.p_switch;
    }
    if array.watermark().is_some() {
        peripheral += array.wm_cols() as f64 * tn.p_wm_col;
    }
    array_power + peripheral
}
