//! Text artifacts: comma-separated tables with `%.12e` numerics and
//! whitespace-separated `.dat` plot data.

use crate::discretization::{SpaceTimeGrid, Trajectory};
use crate::field::Field;
use crate::real::Real;
use crate::weights::WeightParams;
use std::fmt::Write;

/// C `printf("%.12e")`: mantissa with 12 decimals, signed exponent of at least two digits.
pub fn fmt_e12(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// A table with a header row, written as CSV or as `.dat` columns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<T: Real>(&mut self, row: impl IntoIterator<Item = T>) {
        let row: Vec<f64> = row.into_iter().map(|v| v.as_f64()).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| fmt_e12(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// gnuplot-friendly: `#`-prefixed header, space-separated columns.
    pub fn to_dat(&self) -> String {
        let mut out = format!("# {}\n", self.header.join(" "));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| fmt_e12(v)).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

/// One row per time level: `t, x_1, …, x_nx`.
pub fn field_table<T: Real>(values: &Field<T>, grid: &SpaceTimeGrid<T>) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend((1..=grid.nx).map(|i| format!("x_{i}")));
    let mut table = Table::new(header);
    for n in 0..values.rows() {
        table.push(std::iter::once(grid.time(n)).chain(values.row(n).iter().copied()));
    }
    table
}

pub fn trajectory_table<T: Real>(traj: &Trajectory<T>) -> Table {
    field_table(&traj.values, &traj.grid)
}

/// `x, value` columns for a single spatial profile.
pub fn profile_table<T: Real>(name: &str, values: &[T], grid: &SpaceTimeGrid<T>) -> Table {
    let mut table = Table::new(["x", name]);
    for (i, &v) in values.iter().enumerate() {
        table.push([grid.x(i), v]);
    }
    table
}

/// `t, ‖y(t)‖` for every level.
pub fn norm_history<T: Real>(traj: &Trajectory<T>) -> Table {
    let mut table = Table::new(["t", "l2_norm"]);
    for n in 0..=traj.grid.nt {
        table.push([traj.grid.time(n), traj.grid.l2_norm(traj.at(n))]);
    }
    table
}

/// Weights on every interior level (0 < t < T) and node.
pub fn weight_table<T: Real>(p: &WeightParams<T>, grid: &SpaceTimeGrid<T>) -> Table {
    let mut table = Table::new(["t", "x", "theta", "nu", "log_e2s_phi_tilde", "log_e2s_Phi_tilde"]);
    for n in 1..grid.nt {
        let t = grid.time(n);
        for x in grid.nodes() {
            table.push([
                t,
                x,
                p.theta(t),
                p.nu(t),
                p.log_e2s_phi_tilde(t, x),
                p.log_e2s_cap_phi_tilde(t, x),
            ]);
        }
    }
    table
}

/// `key = value` lines, for quick inspection next to a JSON summary.
pub fn key_values(pairs: &[(&str, f64)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {}", fmt_e12(*v));
    }
    out
}
