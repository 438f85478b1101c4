//! Steady states of a chemotaxis system rebuilt from a semilinear solution,
//! under both ways of mapping the diffusion ratio to `eps`.

use fracneumann::experiments::{keller_segel_reconstruct, KSParams, KsMapping};
use fracneumann::semilinear::{solve, SemilinearConfig};
use fracneumann::RectDomain;

fn main() -> fracneumann::Result<()> {
    let domain = RectDomain::unit_square(64)?;
    for mapping in [KsMapping::Squared, KsMapping::Linear] {
        let ks = KSParams {
            d1: 1.0,
            d2: 0.1,
            chi: 2.0,
            a: 1.0,
            b: 1.0,
            mean: 1.0,
            mapping,
        };
        let config = SemilinearConfig {
            eps: ks.eps(),
            p: ks.p(),
            ..SemilinearConfig::default()
        };
        let report = solve(&domain, &config)?;
        let rec = keller_segel_reconstruct(&report.u, &ks, config.oversample)?;
        println!(
            "{mapping:?}: eps = {:.3e}, beta = {:.4}, lambda = {:.4}, max rho = {:.4}, chemical residual {:.2e}, flux residual {:.2e}",
            ks.eps(),
            rec.beta,
            rec.lambda,
            rec.rho.max(),
            rec.chemical_residual,
            rec.flux_residual
        );
    }
    Ok(())
}
