//! Derivatives of the optimal value with respect to model parameters from
//! optimal dual trajectories, a common-random-numbers finite-difference
//! benchmark, and moment utilities for the multiplicative demand process.

use crate::linalg::normal_quantile;
use crate::primal::MultiplierPath;
use crate::sim::mean_and_se;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("no simulations supplied")]
    EmptySample,
    #[error("trajectories missing realization data: {0}")]
    MissingRealizationData(String),
    #[error("solver failed during finite differencing: {0}")]
    SolveFailed(String),
}

/// Multiplicative autoregressive demand `D_t = eps_t (phi D_{t-1} + mu)`,
/// with i.i.d. log-normal errors normalized to mean 1 and variance sigma2,
/// which keeps every realization positive.
#[derive(Debug, Clone, Copy)]
pub struct DemandProcessSpec {
    pub phi: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub d0: f64,
    pub horizon: usize,
}

impl DemandProcessSpec {
    pub fn validate(&self) -> Result<(), SensitivityError> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(SensitivityError::MissingRealizationData(format!(
                "phi must lie in (0,1), got {}",
                self.phi
            )));
        }
        if self.mu < 0.0 || self.d0 < 0.0 || !(self.sigma2 > 0.0) {
            return Err(SensitivityError::MissingRealizationData(
                "need mu >= 0, d0 >= 0, sigma2 > 0".into(),
            ));
        }
        Ok(())
    }

    /// Log-normal parameters (m, s) with E[eps] = 1 and Var(eps) = sigma2:
    /// s^2 = ln(1 + sigma2), m = -s^2/2.
    pub fn lognormal_params(&self) -> (f64, f64) {
        let s2 = (1.0 + self.sigma2).ln();
        (-s2 / 2.0, s2.sqrt())
    }

    pub fn sample_eps(&self, rng: &mut ChaCha12Rng) -> f64 {
        let (m, s) = self.lognormal_params();
        let u: f64 = rng.random();
        (m + s * normal_quantile(u.clamp(1e-16, 1.0 - 1e-16))).exp()
    }
}

/// Mean and variance of D_t from the exact moment recursion
/// E[D_t] = phi E[D_{t-1}] + mu,
/// E[D_t^2] = (1 + sigma2)(phi^2 E[D_{t-1}^2] + 2 phi mu E[D_{t-1}] + mu^2).
pub fn demand_moments(spec: &DemandProcessSpec, t: usize) -> (f64, f64) {
    let mut mean = spec.d0;
    let mut second = spec.d0 * spec.d0;
    for _ in 0..t {
        let lin = spec.phi * mean + spec.mu;
        let quad =
            spec.phi * spec.phi * second + 2.0 * spec.phi * spec.mu * mean + spec.mu * spec.mu;
        mean = lin;
        second = (1.0 + spec.sigma2) * quad;
    }
    (mean, (second - mean * mean).max(0.0))
}

/// Monte Carlo estimate of E[sum_t integrand(t, pi_t, scenario_t)] over
/// simulated multiplier trajectories, with its standard error.
pub fn lagrangian_gradient_derivative<F>(
    trajectories: &[MultiplierPath],
    integrand: F,
) -> Result<(f64, f64), SensitivityError>
where
    F: Fn(usize, &[f64], usize) -> f64,
{
    if trajectories.is_empty() {
        return Err(SensitivityError::EmptySample);
    }
    let sums: Vec<f64> = trajectories
        .iter()
        .map(|path| {
            path.multipliers
                .iter()
                .enumerate()
                .map(|(s, pis)| integrand(s, pis, path.path.scenario[s]))
                .sum()
        })
        .collect();
    Ok(mean_and_se(&sums))
}

/// Realization metadata of an AR-demand inventory instance: the noise value
/// per (stage, realization). Stage 1 is deterministic with eps = 1.
#[derive(Debug, Clone)]
pub struct InventoryArMeta {
    pub spec: DemandProcessSpec,
    /// eps[s][j] for stage index s >= 1; eps[0] = [1.0].
    pub eps: Vec<Vec<f64>>,
    /// Index of the demand-definition row within each stage.
    pub demand_row: usize,
    /// Index of the demand-state variable within each stage.
    pub demand_var: usize,
}

/// Derivative estimates of the optimal value with respect to (phi, mu) from
/// multiplier trajectories of the AR-demand inventory model:
/// d/dphi = E[sum_t pi_t eps_t D_{t-1}], d/dmu = E[sum_t pi_t eps_t],
/// where pi_t is the demand-row multiplier.
pub fn inventory_parameter_derivatives(
    meta: &InventoryArMeta,
    trajectories: &[MultiplierPath],
) -> Result<((f64, f64), (f64, f64)), SensitivityError> {
    if trajectories.is_empty() {
        return Err(SensitivityError::EmptySample);
    }
    let horizon = trajectories[0].multipliers.len();
    if meta.eps.len() != horizon {
        return Err(SensitivityError::MissingRealizationData(format!(
            "meta covers {} stages, trajectories have {horizon}",
            meta.eps.len()
        )));
    }
    let mut phi_sums = Vec::with_capacity(trajectories.len());
    let mut mu_sums = Vec::with_capacity(trajectories.len());
    for path in trajectories {
        let mut dphi = 0.0;
        let mut dmu = 0.0;
        for s in 0..horizon {
            let j = path.path.scenario[s];
            let eps = meta
                .eps
                .get(s)
                .and_then(|e| e.get(j))
                .copied()
                .ok_or_else(|| {
                    SensitivityError::MissingRealizationData(format!(
                        "no eps for stage {} realization {j}",
                        s + 1
                    ))
                })?;
            let pi = path.multipliers[s][meta.demand_row];
            let d_prev = if s == 0 {
                meta.spec.d0
            } else {
                path.path.states[s - 1][meta.demand_var]
            };
            dphi += pi * eps * d_prev;
            dmu += pi * eps;
        }
        phi_sums.push(dphi);
        mu_sums.push(dmu);
    }
    Ok((mean_and_se(&phi_sums), mean_and_se(&mu_sums)))
}

/// Central finite difference (v(u0 + delta) - v(u0 - delta)) / (2 delta).
/// The solver closure is responsible for common random numbers.
pub fn finite_difference_derivative<E: std::fmt::Display>(
    mut solve: impl FnMut(f64) -> Result<f64, E>,
    u0: f64,
    delta: f64,
) -> Result<f64, SensitivityError> {
    assert!(delta > 0.0);
    let hi = solve(u0 + delta).map_err(|e| SensitivityError::SolveFailed(e.to_string()))?;
    let lo = solve(u0 - delta).map_err(|e| SensitivityError::SolveFailed(e.to_string()))?;
    Ok((hi - lo) / (2.0 * delta))
}

/// Default finite-difference step for a parameter of magnitude `u0`.
pub fn default_fd_step(u0: f64) -> f64 {
    1e-4 * u0.abs().max(1.0)
}

#[derive(Debug, Clone)]
pub struct SensitivityRow {
    pub param: String,
    pub fd: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub n_sims: usize,
    pub delta: f64,
}

impl SensitivityRow {
    pub fn gap_percent(&self) -> f64 {
        100.0 * (self.fd - self.estimate).abs() / self.fd.abs()
    }
}

/// Report mirroring the sensitivity table layout:
/// `param,fd,estimate,gap_percent,n_sims,delta`.
#[derive(Debug, Clone, Default)]
pub struct SensitivityReport {
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityReport {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"param,fd,estimate,gap_percent,n_sims,delta\n")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.param,
                r.fd,
                r.estimate,
                r.gap_percent(),
                r.n_sims,
                r.delta
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("csv utf8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::stream_rng;

    fn spec() -> DemandProcessSpec {
        DemandProcessSpec {
            phi: 0.5,
            mu: 2.0,
            sigma2: 0.25,
            d0: 3.0,
            horizon: 20,
        }
    }

    #[test]
    fn moments_match_zero_phi_and_zero_mu_closed_forms() {
        // phi -> 0 behaviour: mean = mu for all t >= 1.
        let s = DemandProcessSpec {
            phi: 1e-300,
            mu: 2.0,
            sigma2: 0.3,
            d0: 5.0,
            horizon: 5,
        };
        for t in 1..6 {
            let (mean, _) = demand_moments(&s, t);
            assert!((mean - 2.0).abs() < 1e-12);
        }
        // mu = 0: Var(D_t) = d0^2 phi^{2t} ((1+sigma2)^t - 1)
        let s0 = DemandProcessSpec {
            phi: 0.6,
            mu: 0.0,
            sigma2: 0.4,
            d0: 2.0,
            horizon: 12,
        };
        for t in 1..=12 {
            let (_, var) = demand_moments(&s0, t);
            let closed =
                s0.d0 * s0.d0 * s0.phi.powi(2 * t as i32) * ((1.0 + s0.sigma2).powi(t as i32) - 1.0);
            assert!(
                (var - closed).abs() <= 1e-12 * closed.max(1e-300),
                "t={t}: {var} vs {closed}"
            );
        }
    }

    #[test]
    fn mean_converges_to_mu_over_one_minus_phi() {
        let s = DemandProcessSpec {
            phi: 0.5,
            mu: 2.0,
            sigma2: 0.25,
            d0: 100.0,
            horizon: 200,
        };
        let (mean, _) = demand_moments(&s, 200);
        assert!((mean - s.mu / (1.0 - s.phi)).abs() < 1e-9);
    }

    #[test]
    fn eps_sampler_has_unit_mean_and_target_variance() {
        let s = spec();
        let mut rng = stream_rng(123, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample_eps(&mut rng)).collect();
        let (mean, se) = mean_and_se(&xs);
        assert!((mean - 1.0).abs() < 4.0 * se, "mean {mean} se {se}");
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        assert!((var - s.sigma2).abs() < 0.01, "var {var}");
    }

    #[test]
    fn fd_of_square_is_two() {
        let d = finite_difference_derivative(
            |u| Ok::<f64, std::convert::Infallible>(u * u),
            1.0,
            1e-4,
        )
        .unwrap();
        assert!((d - 2.0).abs() < 1e-7);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(matches!(
            lagrangian_gradient_derivative(&[], |_, _, _| 0.0),
            Err(SensitivityError::EmptySample)
        ));
    }

    #[test]
    fn report_layout_is_fixed() {
        let mut rep = SensitivityReport::default();
        rep.rows.push(SensitivityRow {
            param: "mu".into(),
            fd: 2.0,
            estimate: 1.98,
            std_error: 0.01,
            n_sims: 100,
            delta: 1e-4,
        });
        let s = rep.to_csv_string();
        assert!(s.starts_with("param,fd,estimate,gap_percent,n_sims,delta\n"));
        assert!(s.lines().nth(1).unwrap().starts_with("mu,2,1.98,"));
    }
}
