use std::io::Write;

use crate::analysis::{two_layer_lower_bound, LowerBoundCertificate};
use crate::error::Result;

use super::sweep::format_float;

pub const LB_HEADER: [&str; 14] = [
    "d",
    "m",
    "B",
    "alpha_sigma",
    "c_sigma",
    "status",
    "epsilon",
    "k_star",
    "k_min",
    "m_bound",
    "B_bound",
    "log10_m_bound",
    "log10_B_bound",
    "growth_absorbed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LbRow {
    pub d: usize,
    pub m: f64,
    pub b: f64,
    pub alpha_sigma: f64,
    pub c_sigma: f64,
    /// `Ok(None)` when no frequency certifies.
    pub result: std::result::Result<Option<LowerBoundCertificate>, String>,
}

impl LbRow {
    pub fn to_row(&self) -> Vec<String> {
        let mut row = vec![
            self.d.to_string(),
            format_float(self.m),
            format_float(self.b),
            format_float(self.alpha_sigma),
            format_float(self.c_sigma),
        ];
        match &self.result {
            Ok(Some(c)) => {
                row.push("certified".into());
                row.push(format_float(c.epsilon));
                row.push(c.k_star.to_string());
                row.push(c.k_min.to_string());
                row.extend([c.m_bound, c.b_bound, c.log10_m_bound, c.log10_b_bound].map(format_float));
                row.push(c.growth_absorbed.to_string());
            }
            Ok(None) => {
                row.push("none".into());
                row.extend(std::iter::repeat(String::new()).take(8));
            }
            Err(e) => {
                row.push(format!("error: {e}"));
                row.extend(std::iter::repeat(String::new()).take(8));
            }
        }
        row
    }
}

/// Certificates for every `(d, m, B)` combination, in input order with `d`
/// varying slowest.
pub fn lb_table(d_list: &[usize], m_list: &[f64], b_list: &[f64], alpha_sigma: f64, c_sigma: f64) -> Vec<LbRow> {
    let mut rows = Vec::new();
    for &d in d_list {
        for &m in m_list {
            for &b in b_list {
                let result = two_layer_lower_bound(d, m, b, alpha_sigma, c_sigma).map_err(|e| e.to_string());
                rows.push(LbRow { d, m, b, alpha_sigma, c_sigma, result });
            }
        }
    }
    rows
}

pub fn write_lb_csv<W: Write>(rows: &[LbRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LB_HEADER)?;
    for r in rows {
        w.write_record(r.to_row())?;
    }
    w.flush()?;
    Ok(())
}
