//! Grid dynamic programming on the dual recursion for instances with a
//! scalar dual state: ground truth for the value functions V_t and their
//! penalized counterparts V_t^gamma.
//!
//! The backward recursion tabulates each stage on a uniform grid, replacing
//! the next-stage function by the concave piecewise-linear interpolant of
//! its tabulation (as a min of segment lines). Stage variables are
//! restricted to the grid range, which doubles as the dual box; infeasible
//! grid points of the unpenalized recursion tabulate as -inf.

use crate::cuts::Cut;
use crate::dual::{DualError, StageBlock, StageOutcome};
use crate::linalg;
use crate::model::{DualBox, MslpInstance};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("dual state is not scalar: stage {stage} has {rows} rows")]
    StateNotScalar { stage: usize, rows: usize },
    #[error("grid range [{glo}, {ghi}] does not cover the stage-{stage} dual box [{blo}, {bhi}]")]
    GridOutsideBox {
        stage: usize,
        glo: f64,
        ghi: f64,
        blo: f64,
        bhi: f64,
    },
    #[error("conditioning stage {0} has random technology or cost")]
    RandomConditioning(usize),
    #[error(transparent)]
    Dual(#[from] DualError),
}

/// Tabulated value function of one stage over a scalar dual state.
/// -inf marks points outside the domain (unpenalized recursion only).
#[derive(Debug, Clone)]
pub struct TabulatedValueFunction {
    /// 0-based stage whose block value this is (argument is pi_{stage-1}).
    pub stage: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub gamma: Option<f64>,
}

impl TabulatedValueFunction {
    /// Concave piecewise-linear interpolation; -inf if either bracketing
    /// node is -inf.
    pub fn evaluate(&self, pi: f64) -> Result<f64, OracleError> {
        let (lo, hi) = (self.grid[0], *self.grid.last().unwrap());
        if pi < lo - 1e-12 || pi > hi + 1e-12 {
            return Err(OracleError::GridOutsideBox {
                stage: self.stage,
                glo: lo,
                ghi: hi,
                blo: pi,
                bhi: pi,
            });
        }
        let pi = pi.clamp(lo, hi);
        let idx = match self
            .grid
            .binary_search_by(|g| g.partial_cmp(&pi).unwrap())
        {
            Ok(i) => return Ok(self.values[i]),
            Err(i) => i,
        };
        let (i0, i1) = (idx - 1, idx);
        let (v0, v1) = (self.values[i0], self.values[i1]);
        if !v0.is_finite() || !v1.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let w = (pi - self.grid[i0]) / (self.grid[i1] - self.grid[i0]);
        Ok(v0 + w * (v1 - v0))
    }

    /// Contiguous range of finite values, if any.
    pub fn finite_range(&self) -> Option<(f64, f64)> {
        let first = self.values.iter().position(|v| v.is_finite())?;
        let last = self.values.iter().rposition(|v| v.is_finite())?;
        Some((self.grid[first], self.grid[last]))
    }

    /// Segment lines of the concave upper envelope of the finite points,
    /// as upper-bounding cuts over the scalar state.
    pub fn envelope_cuts(&self) -> Vec<Cut> {
        let pts: Vec<(f64, f64)> = self
            .grid
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_finite())
            .map(|(&g, &v)| (g, v))
            .collect();
        concave_envelope_cuts(&pts, self.stage)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"pi,value\n")?;
        for (g, v) in self.grid.iter().zip(&self.values) {
            writeln!(w, "{},{}", g, v)?;
        }
        Ok(())
    }
}

/// Upper concave envelope of x-sorted points as a list of line cuts
/// (min over the lines reproduces the envelope).
fn concave_envelope_cuts(points: &[(f64, f64)], stage: usize) -> Vec<Cut> {
    if points.is_empty() {
        return Vec::new();
    }
    if points.len() == 1 {
        return vec![Cut {
            stage,
            intercept: points[0].1,
            gradient: vec![0.0],
            iteration: 0,
        }];
    }
    // Upper hull by monotone chain.
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in points {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1);
            // keep b only if it lies above the chord a-p
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull.windows(2)
        .map(|seg| {
            let (x0, v0) = seg[0];
            let (x1, v1) = seg[1];
            let slope = (v1 - v0) / (x1 - x0);
            Cut {
                stage,
                intercept: v0 - slope * x0,
                gradient: vec![slope],
                iteration: 0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nodes: 401 }
    }
}

/// Tabulates V_s (or V_s^gamma) for s = 1..T-1 over uniform grids covering
/// the per-stage dual boxes. Entry s-1 of the result holds the stage-s
/// block value as a function of pi_{s-1}.
pub fn solve_dual_dp(
    instance: &MslpInstance,
    boxes: &DualBox,
    grid: &GridSpec,
    gamma: Option<f64>,
) -> Result<Vec<TabulatedValueFunction>, OracleError> {
    instance.ensure_valid().map_err(DualError::from)?;
    let horizon = instance.horizon();
    for s in 0..horizon {
        if instance.num_rows(s) != 1 {
            return Err(OracleError::StateNotScalar {
                stage: s + 1,
                rows: instance.num_rows(s),
            });
        }
    }
    for s in 1..horizon.saturating_sub(1) {
        if instance.flags[s].mat_a || instance.flags[s].cost {
            return Err(OracleError::RandomConditioning(s + 1));
        }
    }
    assert!(grid.nodes >= 2, "grid needs at least two nodes");

    let ranges: Vec<(f64, f64)> = (0..horizon)
        .map(|s| (boxes.lower[s][0], boxes.upper[s][0]))
        .collect();
    let make_grid = |s: usize| -> Vec<f64> {
        let (lo, hi) = ranges[s];
        (0..grid.nodes)
            .map(|i| lo + (hi - lo) * i as f64 / (grid.nodes - 1) as f64)
            .collect()
    };

    let mut tabs: Vec<Option<TabulatedValueFunction>> = vec![None; horizon];
    for s in (1..horizon).rev() {
        let prev_real = &instance.stages[s - 1][0];
        let grid_pts = make_grid(s - 1);
        let terminal = s + 1 == horizon;

        // Stage variables live on the next tabulation's finite range
        // (or the full stage range when penalized / terminal).
        let (next_cuts_store, stage_lo, stage_hi);
        if terminal {
            next_cuts_store = Vec::new();
            stage_lo = ranges[s].0;
            stage_hi = ranges[s].1;
        } else {
            let next_tab = tabs[s + 1].as_ref().expect("tabulated in order");
            match (gamma, next_tab.finite_range()) {
                (None, Some((lo, hi))) => {
                    stage_lo = lo;
                    stage_hi = hi;
                }
                (None, None) => {
                    // next stage nowhere feasible: everything is -inf
                    tabs[s] = Some(TabulatedValueFunction {
                        stage: s,
                        grid: grid_pts,
                        values: vec![f64::NEG_INFINITY; grid.nodes],
                        gamma,
                    });
                    continue;
                }
                (Some(_), _) => {
                    stage_lo = ranges[s].0;
                    stage_hi = ranges[s].1;
                }
            }
            next_cuts_store = next_tab.envelope_cuts();
        }

        let n_real = instance.realizations(s).len();
        let cut_refs: Vec<&[Cut]> = (0..n_real).map(|_| next_cuts_store.as_slice()).collect();
        let box_lo = vec![stage_lo];
        let box_hi = vec![stage_hi];

        let mut values = Vec::with_capacity(grid.nodes);
        for &g in &grid_pts {
            let pi_prev = [g];
            let outcome = crate::dual::solve_stage_block(&StageBlock {
                reals: instance.realizations(s),
                prev_cost: &prev_real.cost,
                prev_mat_a: &prev_real.mat_a,
                pi_prev: &pi_prev,
                box_lo: &box_lo,
                box_hi: &box_hi,
                delta_ub: gamma,
                next_cuts: if terminal {
                    None
                } else {
                    Some(cut_refs.clone())
                },
                feas_cuts: &[],
                cost_override: None,
            })
            .map_err(DualError::from)?;
            match outcome {
                StageOutcome::Solved(sol) => values.push(sol.value),
                StageOutcome::Infeasible => values.push(f64::NEG_INFINITY),
            }
        }
        tabs[s] = Some(TabulatedValueFunction {
            stage: s,
            grid: grid_pts,
            values,
            gamma,
        });
    }

    Ok(tabs.into_iter().skip(1).map(|t| t.unwrap()).collect())
}

/// First-stage value max_{pi in box_0} b_1' pi + V_2(pi) from a tabulation.
/// Exact for the piecewise-linear interpolant (the max sits on a grid node).
pub fn oracle_first_stage_value(
    instance: &MslpInstance,
    tab_v2: &TabulatedValueFunction,
) -> f64 {
    let b1 = &instance.stages[0][0].rhs;
    tab_v2
        .grid
        .iter()
        .zip(&tab_v2.values)
        .map(|(&g, &v)| {
            if v.is_finite() {
                linalg::dot(b1, &[g]) + v
            } else {
                f64::NEG_INFINITY
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_of_dome_keeps_all_segments() {
        let pts = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 1.5), (3.0, 1.0)];
        let cuts = concave_envelope_cuts(&pts, 0);
        assert_eq!(cuts.len(), 3);
        // min over lines at the nodes reproduces values
        for &(x, v) in &pts {
            let m = cuts
                .iter()
                .map(|c| c.intercept + c.gradient[0] * x)
                .fold(f64::INFINITY, f64::min);
            assert!((m - v).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_drops_nonconcave_dips() {
        let pts = vec![(0.0, 0.0), (1.0, -1.0), (2.0, 0.0)];
        let cuts = concave_envelope_cuts(&pts, 0);
        assert_eq!(cuts.len(), 1);
        assert!((cuts[0].gradient[0]).abs() < 1e-12);
    }

    #[test]
    fn interpolation_midpoint_of_affine() {
        let tab = TabulatedValueFunction {
            stage: 1,
            grid: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 0.5, 1.0],
            gamma: None,
        };
        assert!((tab.evaluate(0.5).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(tab.evaluate(1.0).unwrap(), 0.5);
    }

    #[test]
    fn infinite_endpoint_poisons_segment() {
        let tab = TabulatedValueFunction {
            stage: 1,
            grid: vec![0.0, 1.0, 2.0],
            values: vec![f64::NEG_INFINITY, 0.5, 1.0],
            gamma: None,
        };
        assert_eq!(tab.evaluate(0.5).unwrap(), f64::NEG_INFINITY);
        assert!(tab.evaluate(1.5).unwrap().is_finite());
        assert!(tab.evaluate(-0.5).is_err());
    }
}
