//! Exact finite-precision linear programming on bounded-variable problems.
//!
//! Every stage subproblem, deterministic equivalent, and cut-generation LP in
//! this crate is solved through [`solve_lp`]. Solutions carry both primal
//! values and row duals; the cut machinery depends on exact duals, which is
//! why this is a simplex and not an interior-point method.

mod problem;
mod simplex;

pub use problem::{LpBuilder, LpError, LpProblem, LpSolution, LpStatus, RowSense, Sense};

/// Solves a bounded-variable LP, returning primal and dual solutions.
///
/// Identical inputs produce bit-identical outputs within one build: pivoting
/// is fully deterministic (devex scores, ties by pivot magnitude then lowest
/// index, Bland's rule after a degeneracy streak).
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    simplex::solve(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseMat;

    fn simple(
        sense: Sense,
        cost: Vec<f64>,
        rows: Vec<(Vec<f64>, RowSense, f64)>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> LpProblem {
        let dense: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
        let mat = if dense.is_empty() {
            SparseMat::zeros(0, cost.len())
        } else {
            SparseMat::from_dense(&dense)
        };
        LpProblem {
            sense,
            cost,
            mat,
            row_senses: rows.iter().map(|r| r.1).collect(),
            rhs: rows.iter().map(|r| r.2).collect(),
            lower,
            upper,
        }
    }

    #[test]
    fn min_x_above_one() {
        // min x s.t. x >= 1, x in [0, inf)
        let p = simple(
            Sense::Min,
            vec![1.0],
            vec![(vec![1.0], RowSense::Ge, 1.0)],
            vec![0.0],
            vec![f64::INFINITY],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-9);
        assert!((s.primal[0] - 1.0).abs() < 1e-9);
        assert!((s.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn max_componentwise_box() {
        // max b'pi s.t. A'pi <= c with A = I2, b = (1,1), c = (2,3)
        let p = simple(
            Sense::Max,
            vec![1.0, 1.0],
            vec![
                (vec![1.0, 0.0], RowSense::Le, 2.0),
                (vec![0.0, 1.0], RowSense::Le, 3.0),
            ],
            vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
            vec![f64::INFINITY, f64::INFINITY],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 5.0).abs() < 1e-9);
        assert!((s.primal[0] - 2.0).abs() < 1e-9);
        assert!((s.primal[1] - 3.0).abs() < 1e-9);
        // max-sense <= rows carry nonnegative duals
        assert!(s.duals[0] > 1.0 - 1e-9 && s.duals[1] > 1.0 - 1e-9);
    }

    #[test]
    fn infeasible_is_reported() {
        let p = simple(
            Sense::Min,
            vec![0.0],
            vec![
                (vec![1.0], RowSense::Ge, 2.0),
                (vec![1.0], RowSense::Le, 1.0),
            ],
            vec![0.0],
            vec![f64::INFINITY],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_reported() {
        let p = simple(
            Sense::Min,
            vec![-1.0],
            vec![(vec![1.0], RowSense::Ge, 0.0)],
            vec![0.0],
            vec![f64::INFINITY],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_with_free_variable() {
        // min x + y s.t. x + y = 2, x free, y in [0, 1]
        let p = simple(
            Sense::Min,
            vec![1.0, 1.0],
            vec![(vec![1.0, 1.0], RowSense::Eq, 2.0)],
            vec![f64::NEG_INFINITY, 0.0],
            vec![f64::INFINITY, 1.0],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = simple(
            Sense::Min,
            vec![1.0, 2.0],
            vec![(vec![1.0, 1.0], RowSense::Ge, 1.0)],
            vec![0.0],
            vec![f64::INFINITY],
        );
        assert!(matches!(
            solve_lp(&p),
            Err(LpError::MalformedProblem(_))
        ));
    }

    #[test]
    fn bounded_variable_flips() {
        // max x + 2y with x,y in [0,1] and x + y <= 1.5
        let p = simple(
            Sense::Max,
            vec![1.0, 2.0],
            vec![(vec![1.0, 1.0], RowSense::Le, 1.5)],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        );
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 2.5).abs() < 1e-9);
        assert!((s.primal[0] - 0.5).abs() < 1e-9);
        assert!((s.primal[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn no_rows_bound_optimum() {
        let p = simple(Sense::Min, vec![2.0, -3.0], vec![], vec![0.0, 0.0], vec![5.0, 4.0]);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective + 12.0).abs() < 1e-9);
        assert_eq!(s.primal, vec![0.0, 4.0]);
    }

    #[test]
    fn deterministic_bit_patterns() {
        let p = simple(
            Sense::Min,
            vec![1.0, -2.0, 0.5],
            vec![
                (vec![1.0, 1.0, 1.0], RowSense::Le, 4.0),
                (vec![1.0, -1.0, 2.0], RowSense::Ge, -1.0),
            ],
            vec![0.0, 0.0, 0.0],
            vec![3.0, 3.0, 3.0],
        );
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        for (x, y) in a.primal.iter().zip(&b.primal) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.duals.iter().zip(&b.duals) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
