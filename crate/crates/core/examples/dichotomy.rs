//! For large `eps` every restart collapses onto `u = 1`; for small `eps`
//! spikes appear. Locate the transition and compare it with the estimate
//! built from fitted constants.

use fracneumann::experiments::{
    epsilon_star_estimate, fit_dichotomy_constants, restart_census, transition_scan,
};
use fracneumann::semilinear::SemilinearConfig;
use fracneumann::RectDomain;

fn main() -> fracneumann::Result<()> {
    let domain = RectDomain::unit_square(64)?;
    let base = SemilinearConfig::default();
    for eps in [100.0, 1.0, 0.05, 0.01] {
        let (nonconstant, failed) = restart_census(
            &domain,
            &SemilinearConfig {
                eps,
                ..base.clone()
            },
            4,
        )?;
        println!("eps = {eps:<6} nonconstant starts {nonconstant}/4, failed {failed}");
    }

    let scan = transition_scan(&domain, &base, 0.01, 1.0, 3, 6)?;
    println!("transition between {:.4} and {:.4}", scan.below, scan.above);

    let (c1, c2) = fit_dichotomy_constants(&domain, 8, 0)?;
    let star = epsilon_star_estimate(2.0, 5.5, c1, c2)?;
    println!("C1 = {c1:.4}, C2 = {c2:.4}, eps* = {star:.4} with C = 5.5");
    Ok(())
}
