//! Consistency checks of the exact solutions and their flux fields.

use flowlab_core::exact::{annulus_samples, ExactSolution};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactCheck {
    pub name: String,
    pub t: f64,
    pub samples: usize,
    pub max_discrepancy: f64,
    pub max_flux_norm: f64,
    pub passed: bool,
}

/// `du/dt = div p` on sample annuli kept `2 grid` away from every branch
/// radius, with discrepancy bound `tol`, and `|p| <= 1 + 1e-12`.
pub fn verify_exact(grid: f64, tol: f64) -> Vec<ExactCheck> {
    let disk = ExactSolution::disk();
    let cone = ExactSolution::cone();
    let gap = 2.0 * grid;
    let mut regions: Vec<(String, ExactSolution, f64, f64, f64)> = Vec::new();
    for t in [0.1, 0.3] {
        regions.push((format!("disk interior t={t}"), disk, t, 0.0, 1.0 - gap));
        regions.push((format!("disk exterior t={t}"), disk, t, 1.0 + gap, 1.4));
    }
    for t in [0.02, 0.04, 0.1, 0.15] {
        let s: f64 = cone.cone_plateau_radius(t);
        let r: f64 = cone.cone_support_radius(t);
        regions.push((format!("cone plateau t={t}"), cone, t, 0.0, s - gap));
        regions.push((format!("cone slope t={t}"), cone, t, s + gap, r - gap));
        regions.push((format!("cone exterior t={t}"), cone, t, r + gap, 1.4));
    }
    regions
        .into_iter()
        .map(|(name, sol, t, lo, hi)| {
            let rep = sol.verify_flux_consistency(t, grid, &annulus_samples(lo, hi, 16, 32));
            ExactCheck {
                name,
                t,
                samples: rep.samples,
                max_discrepancy: rep.max_discrepancy,
                max_flux_norm: rep.max_flux_norm,
                passed: rep.max_discrepancy <= tol && rep.max_flux_norm <= 1.0 + 1e-12,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_regions_pass() {
        let checks = verify_exact(1e-3, 1e-4);
        assert_eq!(checks.len(), 16);
        assert!(checks.iter().all(|c| c.passed), "{checks:#?}");
    }
}
