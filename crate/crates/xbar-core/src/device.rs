//! Memristor device parameters and per-technology-node electrical
//! parameters. Every other module reads its constants from here.
//!
//! None of the numeric defaults below are foundry data; they are plausible
//! published-range values and are the free parameters the calibration
//! routine adjusts. The three node labels (45nm, 22nm, 7nm) are the
//! supported built-ins; additional nodes can be defined through a config
//! file (see [`NodeRegistry::apply_config_str`]).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Memristor conductance window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemristorParams {
    /// Full-on conductance (S).
    pub g_on: f64,
    /// Full-off conductance (S).
    pub g_off: f64,
    /// Leakage conductance with the access transistor off (S).
    pub g_leak: f64,
}

impl Default for MemristorParams {
    fn default() -> Self {
        // 10 kOhm on / 1 MOhm off: a typical published ReRAM window.
        Self {
            g_on: 100e-6,
            g_off: 1e-6,
            g_leak: 1e-9,
        }
    }
}

impl MemristorParams {
    pub fn validate(&self) -> Result<()> {
        let ordered = self.g_on.is_finite()
            && self.g_on > self.g_off
            && self.g_off > self.g_leak
            && self.g_leak > 0.0;
        if !ordered {
            return Err(Error::InvalidParams(format!(
                "memristor window must satisfy g_on > g_off > g_leak > 0, got {:?}",
                self
            )));
        }
        Ok(())
    }

    /// On/off conductance window width (S).
    pub fn window(&self) -> f64 {
        self.g_on - self.g_off
    }
}

/// Electrical parameters of one CMOS technology node.
///
/// All values in SI units: ohms, farads, volts, watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechNodeParams {
    /// Node label, e.g. "45nm".
    pub node_id: String,
    /// Read voltage applied to driven rows (V).
    pub v_read: f64,
    /// Wire resistance per wordline/bitline segment (Ohm).
    pub r_wire: f64,
    /// Wire capacitance per segment (F).
    pub c_wire: f64,
    /// Access-transistor on-resistance in the 1T1R cell (Ohm).
    pub r_access: f64,
    /// Permutor pass-transistor on-resistance (Ohm).
    pub r_switch: f64,
    /// Row driver output resistance (Ohm).
    pub r_driver: f64,
    /// Column sense resistance (Ohm).
    pub r_sense: f64,
    /// Peripheral power per permutor pass transistor (W).
    pub p_switch: f64,
    /// Peripheral power per watermark column (W).
    pub p_wm_col: f64,
}

impl TechNodeParams {
    pub fn validate(&self) -> Result<()> {
        let resistances = [
            ("r_wire", self.r_wire),
            ("r_access", self.r_access),
            ("r_switch", self.r_switch),
            ("r_driver", self.r_driver),
            ("r_sense", self.r_sense),
        ];
        for (name, r) in resistances {
            if !r.is_finite() || r <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be > 0, got {r} in node `{}`",
                    self.node_id
                )));
            }
        }
        if !self.v_read.is_finite() || self.v_read <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "v_read must be > 0, got {} in node `{}`",
                self.v_read, self.node_id
            )));
        }
        for x in [self.c_wire, self.p_switch, self.p_wm_col] {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "c_wire, p_switch, p_wm_col must be >= 0 in node `{}`",
                    self.node_id
                )));
            }
        }
        Ok(())
    }

    fn node_45nm() -> Self {
        Self {
            node_id: "45nm".into(),
            v_read: 0.2,
            r_wire: 2.5,
            c_wire: 0.20e-15,
            r_access: 2.0e3,
            r_switch: 1.0e3,
            r_driver: 500.0,
            r_sense: 1.0,
            p_switch: 0.2e-6,
            p_wm_col: 20e-6,
        }
    }

    fn node_22nm() -> Self {
        Self {
            node_id: "22nm".into(),
            r_wire: 5.0,
            c_wire: 0.15e-15,
            r_access: 3.0e3,
            r_switch: 1.5e3,
            r_driver: 700.0,
            ..Self::node_45nm()
        }
    }

    fn node_7nm() -> Self {
        // Wires get more resistive and less capacitive with scaling.
        Self {
            node_id: "7nm".into(),
            r_wire: 15.0,
            c_wire: 0.08e-15,
            r_access: 5.0e3,
            r_switch: 2.5e3,
            r_driver: 1.0e3,
            ..Self::node_45nm()
        }
    }
}

/// Lookup table of technology nodes: the three built-ins plus any nodes
/// defined or overridden by a config file.
#[derive(Debug, Clone)]
pub struct NodeRegistry {
    nodes: BTreeMap<String, TechNodeParams>,
}

impl Default for NodeRegistry {
    fn default() -> Self {
        let mut nodes = BTreeMap::new();
        for n in [
            TechNodeParams::node_45nm(),
            TechNodeParams::node_22nm(),
            TechNodeParams::node_7nm(),
        ] {
            nodes.insert(n.node_id.clone(), n);
        }
        Self { nodes }
    }
}

impl NodeRegistry {
    pub fn get(&self, node_id: &str) -> Result<&TechNodeParams> {
        self.nodes
            .get(node_id)
            .ok_or_else(|| Error::UnknownNode(node_id.to_string()))
    }

    pub fn insert(&mut self, params: TechNodeParams) -> Result<()> {
        params.validate()?;
        self.nodes.insert(params.node_id.clone(), params);
        Ok(())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    /// Applies a sectioned key-value config file on top of the registry.
    ///
    /// Format: one `[label]` section per node, then `key = value` lines with
    /// keys named exactly like the [`TechNodeParams`] fields, values in SI
    /// units. Known labels override the built-in defaults field by field;
    /// new labels start from the 45nm baseline. Every resulting record is
    /// validated; a violation fails the whole load.
    ///
    /// ```text
    /// [45nm]
    /// r_switch = 120.0
    /// p_switch = 2.5e-6
    ///
    /// [28nm]
    /// r_wire = 4.0
    /// ```
    pub fn apply_config_str(&mut self, text: &str) -> Result<()> {
        let mut current: Option<TechNodeParams> = None;
        let mut staged: Vec<TechNodeParams> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(label) = line.strip_prefix('[') {
                let label = label
                    .strip_suffix(']')
                    .ok_or_else(|| {
                        Error::Format(format!("line {}: unterminated section header", lineno + 1))
                    })?
                    .trim();
                if label.is_empty() {
                    return Err(Error::Format(format!("line {}: empty node label", lineno + 1)));
                }
                if let Some(done) = current.take() {
                    staged.push(done);
                }
                let base = self.nodes.get(label).cloned().unwrap_or_else(|| {
                    let mut p = TechNodeParams::node_45nm();
                    p.node_id = label.to_string();
                    p
                });
                current = Some(base);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Format(format!("line {}: `{}` is not a number", lineno + 1, value.trim()))
            })?;
            let node = current.as_mut().ok_or_else(|| {
                Error::Format(format!("line {}: key before any [node] section", lineno + 1))
            })?;
            match key {
                "v_read" => node.v_read = value,
                "r_wire" => node.r_wire = value,
                "c_wire" => node.c_wire = value,
                "r_access" => node.r_access = value,
                "r_switch" => node.r_switch = value,
                "r_driver" => node.r_driver = value,
                "r_sense" => node.r_sense = value,
                "p_switch" => node.p_switch = value,
                "p_wm_col" => node.p_wm_col = value,
                other => {
                    return Err(Error::Format(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        if let Some(done) = current.take() {
            staged.push(done);
        }
        for node in &staged {
            node.validate()?;
        }
        for node in staged {
            self.nodes.insert(node.node_id.clone(), node);
        }
        Ok(())
    }
}

/// Looks up the configured defaults for one of the built-in node labels.
pub fn tech_node_params(node_id: &str) -> Result<TechNodeParams> {
    NodeRegistry::default().get(node_id).cloned()
}

/// Linear map from a normalized weight in [0, 1] to a cell conductance.
///
/// `w = 0` programs the cell to `g_off`, `w = 1` to `g_on`; strictly
/// monotone in between.
pub fn conductance_from_weight(w: f64, mp: &MemristorParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::OutOfRange(format!("weight {w} outside [0, 1]")));
    }
    Ok(mp.g_off + w * (mp.g_on - mp.g_off))
}

/// Series resistance of one 1T1R read path: memristor + access transistor,
/// plus the permutor pass transistor when one is in the path.
pub fn cell_path_resistance(g: f64, tn: &TechNodeParams, with_permutor: bool) -> f64 {
    assert!(g > 0.0, "cell conductance must be > 0");
    1.0 / g + tn.r_access + if with_permutor { tn.r_switch } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_45nm_table() {
        let p = tech_node_params("45nm").unwrap();
        assert_eq!(p.v_read, 0.2);
        assert_eq!(p.r_wire, 2.5);
        assert_eq!(p.c_wire, 0.20e-15);
        assert_eq!(p.r_access, 2.0e3);
        assert_eq!(p.r_switch, 1.0e3);
        assert_eq!(p.r_driver, 500.0);
        assert_eq!(p.r_sense, 1.0);
        assert_eq!(p.p_switch, 0.2e-6);
        assert_eq!(p.p_wm_col, 20e-6);
    }

    #[test]
    fn default_7nm_scaled_wires() {
        let p = tech_node_params("7nm").unwrap();
        assert_eq!(p.r_wire, 15.0);
        assert_eq!(p.c_wire, 0.08e-15);
        let p45 = tech_node_params("45nm").unwrap();
        assert!(p.r_wire > p45.r_wire && p.c_wire < p45.c_wire);
    }

    #[test]
    fn unknown_node_is_an_error_naming_the_label() {
        let err = tech_node_params("3nm").unwrap_err();
        assert!(matches!(err, Error::UnknownNode(ref l) if l == "3nm"));
    }

    #[test]
    fn weight_map_endpoints() {
        let mp = MemristorParams::default();
        assert_eq!(conductance_from_weight(0.0, &mp).unwrap(), mp.g_off);
        assert_eq!(conductance_from_weight(1.0, &mp).unwrap(), mp.g_on);
    }

    #[test]
    fn weight_map_midpoint() {
        let mp = MemristorParams::default();
        let g = conductance_from_weight(0.5, &mp).unwrap();
        assert!((g - 50.5e-6).abs() < 1e-18);
    }

    #[test]
    fn weight_map_rejects_out_of_range() {
        let mp = MemristorParams::default();
        assert!(conductance_from_weight(-0.1, &mp).is_err());
        assert!(conductance_from_weight(1.1, &mp).is_err());
        assert!(conductance_from_weight(f64::NAN, &mp).is_err());
    }

    #[test]
    fn path_resistance_series_sum() {
        let tn = tech_node_params("45nm").unwrap();
        let r = cell_path_resistance(100e-6, &tn, false);
        assert!((r - 12.0e3).abs() < 1e-9);
        let r_sw = cell_path_resistance(100e-6, &tn, true);
        assert!((r_sw - 13.0e3).abs() < 1e-9);
        // Dominant-term check at g = 1 S.
        assert!((cell_path_resistance(1.0, &tn, false) - (1.0 + tn.r_access)).abs() < 1e-12);
    }

    #[test]
    fn config_overrides_and_new_nodes() {
        let mut reg = NodeRegistry::default();
        reg.apply_config_str(
            "# comment\n[45nm]\nr_switch = 120.0\n\n[28nm]\nr_wire = 4.0\nc_wire = 0.17e-15\n",
        )
        .unwrap();
        assert_eq!(reg.get("45nm").unwrap().r_switch, 120.0);
        assert_eq!(reg.get("45nm").unwrap().r_driver, 500.0);
        let n28 = reg.get("28nm").unwrap();
        assert_eq!(n28.r_wire, 4.0);
        assert_eq!(n28.r_driver, 500.0); // inherited from the 45nm baseline
    }

    #[test]
    fn config_rejects_invalid_params() {
        let mut reg = NodeRegistry::default();
        let err = reg.apply_config_str("[45nm]\nr_wire = -1.0\n");
        assert!(err.is_err());
        // Failed loads must not leave partial state behind.
        assert_eq!(reg.get("45nm").unwrap().r_wire, 2.5);
    }

    #[test]
    fn config_rejects_unknown_keys_and_garbage() {
        let mut reg = NodeRegistry::default();
        assert!(reg.apply_config_str("[45nm]\nbogus = 1\n").is_err());
        assert!(reg.apply_config_str("r_wire = 1\n").is_err());
        assert!(reg.apply_config_str("[45nm]\nr_wire\n").is_err());
    }

    proptest! {
        #[test]
        fn weight_map_is_monotone(a in 0.0..1.0f64, b in 0.0..1.0f64) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let mp = MemristorParams::default();
            let g_lo = conductance_from_weight(lo, &mp).unwrap();
            let g_hi = conductance_from_weight(hi, &mp).unwrap();
            prop_assert!(g_lo < g_hi);
        }

        #[test]
        fn permutor_adds_exactly_r_switch(g in 1e-9..1.0f64) {
            let tn = tech_node_params("45nm").unwrap();
            let delta = cell_path_resistance(g, &tn, true) - cell_path_resistance(g, &tn, false);
            // Exact up to one rounding of the dominant 1/g term.
            let ulp_bound = 1e-12 * cell_path_resistance(g, &tn, true);
            prop_assert!((delta - tn.r_switch).abs() <= ulp_bound.max(1e-12));
        }
    }
}
