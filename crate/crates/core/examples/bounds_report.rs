//! Tabulate every computable concentration bound for a small net.
//!
//! For a scale-uniform net with a uniform prior this prints the finite-net
//! and combinatorial fluctuation bounds, a Monte Carlo fluctuation
//! estimate, the exact prior concentration radius, the discrete prior-mass
//! radius, the model penalty, and the combined concentration radius with
//! its vacuity flag. At desk-scale sample sizes the theoretical constants
//! make most closed-form bounds vacuous; the report says so explicitly.

use rho_bayes::experiment::{
    run_bounds_report, BoundsConfig, ExperimentConfig, FamilyConfig, GridSpec, PriorConfig,
    Scenario,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig {
        scenario: Scenario::BoundsReport,
        family: FamilyConfig::UniformScale {
            grid: GridSpec { lo: 1.0, hi: 8.0, step: 0.25 },
        },
        prior: PriorConfig::Uniform,
        beta: 4.0,
        n_ladder: vec![],
        replications: 0,
        seed: 99,
        truth: vec![3.0],
        contamination: None,
        model_selection: None,
        bounds: Some(BoundsConfig {
            n: 500,
            mc_reps: 20,
            vc_dim: Some(2),
            xi: 1.0,
            xi_prime: 1.0,
        }),
        output: None,
        ball_radius: 0.2,
    };
    let reports = run_bounds_report(&cfg)?;
    println!("{:<22} {:>14} {:>14} {:>8}", "quantity", "formula", "monte carlo", "vacuous");
    for r in &reports {
        let mc = r
            .mc_estimate
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<22} {:>14.4} {:>14} {:>8}",
            r.quantity, r.formula_value, mc, r.vacuous_flag
        );
    }
    Ok(())
}
