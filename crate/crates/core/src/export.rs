//! CSV and JSON writers shared by the command-line front end.
//!
//! Every table starts with a `#`-prefixed comment block, followed by one
//! header row and data rows. Numbers are written with 17 significant digits
//! so a round trip through text is lossless.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::Serialize;

use crate::continuation::BifurcationDiagram;
use crate::stationarity::{Stability, StationaryPoint};
use crate::timesim::{FloquetReport, PeriodicOrbit, TrajectoryRow};
use crate::zeros::ZeroScan;

/// Full-precision formatting used for every numeric cell.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    /// Comment lines, written without the leading `# `.
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        CsvTable { comments: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for c in &self.comments {
            if c.is_empty() {
                writeln!(w, "#")?;
            } else {
                writeln!(w, "# {c}")?;
            }
        }
        writeln!(w, "{}", self.columns.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }

    pub fn to_string_lossy(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("table is valid utf-8")
    }
}

/// `u,J`
pub fn equilibrium_table(map: &[(f64, f64)]) -> CsvTable {
    let mut t = CsvTable::new(&["u", "J"]);
    for &(u, j) in map {
        t.push(vec![num(u), num(j)]);
    }
    t
}

/// `u,omega,C,dCdu,stability`
pub fn stationary_table(points: &[StationaryPoint]) -> CsvTable {
    let mut t = CsvTable::new(&["u", "omega", "C", "dCdu", "stability"]);
    for p in points {
        t.push(vec![num(p.u_bar), num(p.omega), num(p.condition_value), num(p.dc_du), p.stability.as_str().into()]);
    }
    t
}

/// `u,z_cross,G0`; rows without a crossing zero leave `z_cross` empty.
pub fn zero_scan_table(scan: &ZeroScan) -> CsvTable {
    let mut t = CsvTable::new(&["u", "z_cross", "G0"]);
    for r in &scan.rows {
        t.push(vec![num(r.u), r.crossing_zero.map(num).unwrap_or_default(), num(r.steady_state_gain)]);
    }
    t
}

/// `branch_id,omega,u,J,stability,is_fold`. Stability on a branch point is the
/// reduced-model sign of `k·∂C/∂ū` and flips at every fold; fold rows are
/// inserted where they were detected and labelled `fold`.
pub fn branch_table(diagram: &BifurcationDiagram, gain: f64, output: impl Fn(f64) -> Option<f64>) -> CsvTable {
    let mut t = CsvTable::new(&["branch_id", "omega", "u", "J", "stability", "is_fold"]);
    let j = |u: f64| output(u).map(num).unwrap_or_default();
    for (id, b) in diagram.branches.iter().enumerate() {
        let mut folds = b.folds.iter().peekable();
        for (i, p) in b.points.iter().enumerate() {
            let s = sign_label(gain * p.dc_du);
            t.push(vec![id.to_string(), num(p.omega), num(p.u_bar), j(p.u_bar), s.as_str().into(), "0".into()]);
            while let Some(f) = folds.next_if(|f| f.after_index == i) {
                t.push(vec![id.to_string(), num(f.omega), num(f.u_bar), j(f.u_bar), "fold".into(), "1".into()]);
            }
        }
    }
    t
}

fn sign_label(value: f64) -> Stability {
    if value < 0.0 {
        Stability::Stable
    } else if value > 0.0 {
        Stability::Unstable
    } else {
        Stability::Unknown
    }
}

/// `t,u,y,xi,eta,u_hat`
pub fn trajectory_table(rows: &[TrajectoryRow]) -> CsvTable {
    let mut t = CsvTable::new(&["t", "u", "y", "xi", "eta", "u_hat"]);
    for r in rows {
        t.push(vec![num(r.t), num(r.u), num(r.y), num(r.xi), num(r.eta), num(r.u_hat)]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitSummary {
    pub omega: f64,
    pub period: f64,
    pub mean_input: f64,
    pub mean_output: f64,
    /// `|C(mean_input, ω)|`.
    pub condition_abs: f64,
    /// Largest `|C|` on the scan grid, the scale `condition_abs` is compared to.
    pub condition_scale: f64,
    pub residual: f64,
    pub iterations: usize,
    pub floquet: FloquetReport,
    /// `[re, im]` pairs.
    pub multipliers: Vec<[f64; 2]>,
}

impl OrbitSummary {
    pub fn new(orbit: &PeriodicOrbit, condition_abs: f64, condition_scale: f64, floquet: FloquetReport) -> Self {
        let mut multipliers: Vec<Complex64> = orbit.floquet_multipliers.clone();
        multipliers.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)).then(b.im.total_cmp(&a.im)));
        OrbitSummary {
            omega: orbit.omega,
            period: orbit.period,
            mean_input: orbit.mean_input,
            mean_output: orbit.mean_output,
            condition_abs,
            condition_scale,
            residual: orbit.residual,
            iterations: orbit.iterations,
            floquet,
            multipliers: multipliers.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("orbit summary serializes")
    }

    /// Single-line form for comment headers.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("orbit summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::NAN), "nan");
    }

    #[test]
    fn table_layout() {
        let mut t = equilibrium_table(&[(0.5, 1.0)]);
        t.comment("plant = linear");
        t.comment("");
        assert_eq!(t.to_string_lossy(), "# plant = linear\n#\nu,J\n5.0000000000000000e-1,1.0000000000000000e0\n");
    }
}
