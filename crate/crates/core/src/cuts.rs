//! Polyhedral models of stage value functions shared by the primal and dual
//! SDDP loops: lower-bounding pools evaluate as a max of affine functions,
//! upper-bounding pools as a min.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Cuts under-estimate a convex cost-to-go (primal side).
    LowerBounding,
    /// Cuts over-estimate a concave value function (dual side).
    UpperBounding,
}

/// One affine function `intercept + gradient . state`, tagged with the stage
/// it bounds and the iteration that produced it (0 = initialization).
#[derive(Debug, Clone)]
pub struct Cut {
    pub stage: usize,
    pub intercept: f64,
    pub gradient: Vec<f64>,
    pub iteration: usize,
}

impl Cut {
    pub fn value_at(&self, state: &[f64]) -> f64 {
        debug_assert_eq!(state.len(), self.gradient.len());
        self.intercept
            + self
                .gradient
                .iter()
                .zip(state)
                .map(|(g, x)| g * x)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct CutPool {
    pub stage: usize,
    pub orientation: Orientation,
    pub cuts: Vec<Cut>,
}

impl CutPool {
    pub fn new(stage: usize, orientation: Orientation) -> Self {
        Self {
            stage,
            orientation,
            cuts: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn push(&mut self, cut: Cut) {
        debug_assert_eq!(cut.stage, self.stage);
        self.cuts.push(cut);
    }

    /// Pool value at `state`: max of affines (lower) or min (upper).
    pub fn evaluate(&self, state: &[f64]) -> f64 {
        let mut it = self.cuts.iter().map(|c| c.value_at(state));
        let first = it.next().expect("evaluating an empty cut pool");
        match self.orientation {
            Orientation::LowerBounding => it.fold(first, f64::max),
            Orientation::UpperBounding => it.fold(first, f64::min),
        }
    }

    /// Index of the active cut at `state`; ties resolve to the lowest
    /// iteration index.
    pub fn active_cut(&self, state: &[f64]) -> usize {
        let target = self.evaluate(state);
        let mut best = 0;
        let mut best_iter = usize::MAX;
        for (i, c) in self.cuts.iter().enumerate() {
            if (c.value_at(state) - target).abs() <= 1e-12 * (1.0 + target.abs())
                && c.iteration < best_iter
            {
                best = i;
                best_iter = c.iteration;
            }
        }
        best
    }
}

/// Per-stage cut pools approximating the cost-to-go functions of one run.
#[derive(Debug, Clone)]
pub struct PolicyApprox {
    pub orientation: Orientation,
    /// pools[t] models the stage-(t+1) value function seen from stage t
    /// decisions; indexing follows each algorithm's convention.
    pub pools: Vec<CutPool>,
}

impl PolicyApprox {
    pub fn new(orientation: Orientation, stages: usize) -> Self {
        Self {
            orientation,
            pools: (0..stages).map(|t| CutPool::new(t, orientation)).collect(),
        }
    }
}
