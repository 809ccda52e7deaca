//! Ground-state electron configurations and occupations for Z = 1..92.
//!
//! The shipped table mirrors the NIST electronic-structure reference
//! configurations, including the anomalous d/f ground states; it lives in a
//! versioned CSV (`data/configurations.csv`) so overrides stay diffable.

use crate::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::OnceLock;

const EMBEDDED_TABLE: &str = include_str!("../data/configurations.csv");
pub const MAX_Z: u32 = 92;

/// One occupied (n, l) shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Shell {
    pub n: u32,
    pub l: u32,
    pub occupation: f64,
}

/// Nuclear charge plus the occupied shell list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomConfig {
    pub z: u32,
    pub symbol: String,
    pub shells: Vec<Shell>,
}

impl AtomConfig {
    pub fn electron_count(&self) -> f64 {
        self.shells.iter().map(|s| s.occupation).sum()
    }

    /// Number of eigenpairs to request per angular momentum channel: for each
    /// l, the occupied n run from l+1 upward without gaps.
    pub fn orbitals_per_l(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for shell in &self.shells {
            *counts.entry(shell.l).or_insert(0) += 1;
        }
        counts
    }

    pub fn max_l(&self) -> u32 {
        self.shells.iter().map(|s| s.l).max().unwrap_or(0)
    }

    fn validate(&self, line: usize) -> Result<()> {
        let err = |msg: String| Error::Parse { line, msg };
        if self.shells.is_empty() {
            return Err(err(format!("Z={} has no shells", self.z)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.shells {
            if s.n < s.l + 1 {
                return Err(err(format!("shell ({}, {}) violates n >= l+1", s.n, s.l)));
            }
            let cap = 2.0 * (2 * s.l + 1) as f64;
            if !(s.occupation > 0.0 && s.occupation <= cap) {
                return Err(err(format!(
                    "occupation {} of shell ({}, {}) outside (0, {cap}]",
                    s.occupation, s.n, s.l
                )));
            }
            if !seen.insert((s.n, s.l)) {
                return Err(err(format!("duplicate shell ({}, {})", s.n, s.l)));
            }
        }
        if (self.electron_count() - f64::from(self.z)).abs() > 1e-9 {
            return Err(err(format!(
                "occupations sum to {} but Z = {}",
                self.electron_count(),
                self.z
            )));
        }
        // occupied n must be consecutive from l+1 within each channel,
        // so "the k lowest states of channel l" matches the configuration
        for (&l, &count) in &self.orbitals_per_l() {
            let mut ns: Vec<u32> = self
                .shells
                .iter()
                .filter(|s| s.l == l)
                .map(|s| s.n)
                .collect();
            ns.sort_unstable();
            let expected: Vec<u32> = (l + 1..l + 1 + count as u32).collect();
            if ns != expected {
                return Err(err(format!(
                    "channel l={l} occupies n={ns:?}, expected the consecutive run {expected:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Parse a configuration table in the `Z,symbol,n:l:f;n:l:f;...` format.
/// `#` starts a comment; malformed rows are rejected with their line number.
pub fn parse_configurations(text: &str) -> Result<Vec<AtomConfig>> {
    let mut configs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            line: line_no,
            msg,
        };
        let mut fields = line.splitn(3, ',');
        let z: u32 = fields
            .next()
            .ok_or_else(|| err("missing Z".into()))?
            .trim()
            .parse()
            .map_err(|e| err(format!("bad Z: {e}")))?;
        let symbol = fields
            .next()
            .ok_or_else(|| err("missing symbol".into()))?
            .trim()
            .to_string();
        if symbol.is_empty() {
            return Err(err("empty symbol".into()));
        }
        let shell_field = fields.next().ok_or_else(|| err("missing shells".into()))?;
        let mut shells = Vec::new();
        for part in shell_field.split(';') {
            let comps: Vec<&str> = part.trim().split(':').collect();
            if comps.len() != 3 {
                return Err(err(format!("shell entry '{part}' is not n:l:f")));
            }
            let n: u32 = comps[0]
                .parse()
                .map_err(|e| err(format!("bad n in '{part}': {e}")))?;
            let l: u32 = comps[1]
                .parse()
                .map_err(|e| err(format!("bad l in '{part}': {e}")))?;
            let occupation: f64 = comps[2]
                .parse()
                .map_err(|e| err(format!("bad occupation in '{part}': {e}")))?;
            shells.push(Shell { n, l, occupation });
        }
        let config = AtomConfig { z, symbol, shells };
        config.validate(line_no)?;
        configs.push(config);
    }
    Ok(configs)
}

pub fn load_configurations(path: &std::path::Path) -> Result<Vec<AtomConfig>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        line: 0,
        msg: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_configurations(&text)
}

fn shipped_table() -> &'static Vec<AtomConfig> {
    static TABLE: OnceLock<Vec<AtomConfig>> = OnceLock::new();
    TABLE.get_or_init(|| {
        parse_configurations(EMBEDDED_TABLE).expect("embedded configuration table is valid")
    })
}

/// Ground-state configuration of element Z from the shipped table.
pub fn configuration(z: u32) -> Result<AtomConfig> {
    if !(1..=MAX_Z).contains(&z) {
        return Err(Error::InvalidArgument(format!(
            "Z must lie in 1..={MAX_Z}, got {z}"
        )));
    }
    shipped_table()
        .iter()
        .find(|c| c.z == z)
        .cloned()
        .ok_or_else(|| Error::Internal(format!("shipped table misses Z={z}")))
}
