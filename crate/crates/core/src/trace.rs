//! Per-iteration bound records and their CSV formats.
//!
//! CSV layouts are fixed interfaces: `iter,lb,ub_stat,seed` for primal runs
//! and `iter,ub_dual,penalty_scalar,max_zeta` for dual runs. Floats are
//! written in shortest round-trip form (LF line endings, no locale).

use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalTraceRow {
    pub iter: usize,
    pub lb: f64,
    pub ub_stat: f64,
    pub seed: u64,
}

/// Lower/statistical-upper bound trace of one primal SDDP run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundsTrace {
    pub rows: Vec<PrimalTraceRow>,
}

impl BoundsTrace {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"iter,lb,ub_stat,seed\n")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.iter, r.lb, r.ub_stat, r.seed)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn parse_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty csv")?;
        if header != "iter,lb,ub_stat,seed" {
            return Err(format!("unexpected header: {header}"));
        }
        let mut rows = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(format!("line {}: expected 4 fields", ln + 2));
            }
            rows.push(PrimalTraceRow {
                iter: f[0].parse().map_err(|e| format!("line {}: {e}", ln + 2))?,
                lb: f[1].parse().map_err(|e| format!("line {}: {e}", ln + 2))?,
                ub_stat: f[2].parse().map_err(|e| format!("line {}: {e}", ln + 2))?,
                seed: f[3].parse().map_err(|e| format!("line {}: {e}", ln + 2))?,
            });
        }
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualTraceRow {
    pub iter: usize,
    pub ub_dual: f64,
    pub penalty_scalar: f64,
    pub max_zeta: f64,
}

/// Deterministic upper-bound trace of one dual SDDP run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DualTrace {
    pub rows: Vec<DualTraceRow>,
}

impl DualTrace {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"iter,ub_dual,penalty_scalar,max_zeta\n")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.iter, r.ub_dual, r.penalty_scalar, r.max_zeta
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn parse_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty csv")?;
        if header != "iter,ub_dual,penalty_scalar,max_zeta" {
            return Err(format!("unexpected header: {header}"));
        }
        let mut rows = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(format!("line {}: expected 4 fields", ln + 2));
            }
            rows.push(DualTraceRow {
                iter: f[0].parse().map_err(|e| format!("line {}: {e}", ln + 2))?,
                ub_dual: f[1].parse().map_err(|e| format!("line {}: {e}", ln + 2))?,
                penalty_scalar: f[2].parse().map_err(|e| format!("line {}: {e}", ln + 2))?,
                max_zeta: f[3].parse().map_err(|e| format!("line {}: {e}", ln + 2))?,
            });
        }
        Ok(Self { rows })
    }
}
