//! Shape diagnostics of one spike: cube covering at scale `eps^{1/2}`, local
//! Harnack ratios, and the Moser iteration chain.

use fracneumann::experiments::{cube_cover, harnack_ratio, moser_chain};
use fracneumann::semilinear::{solve, SemilinearConfig};
use fracneumann::RectDomain;

fn main() -> fracneumann::Result<()> {
    let domain = RectDomain::unit_square(96)?;
    let eps = 0.01;
    let report = solve(
        &domain,
        &SemilinearConfig {
            eps,
            ..SemilinearConfig::default()
        },
    )?;
    let u = report.u.to_nodal();

    for eta in [0.1, 0.5, 1.0, 2.0] {
        println!(
            "cubes of side sqrt(eps) covering {{u > {eta}}}: {}",
            cube_cover(&u, eps, eta)?
        );
    }

    let centers = vec![vec![0.5, 0.05], vec![0.5, 0.5], vec![0.1, 0.9]];
    for ball in harnack_ratio(&u, eps, 2.0, &centers, 0.1)? {
        println!(
            "Harnack ball at {:?}: sup/inf = {:.3}, control = {:.3}",
            ball.center, ball.ratio, ball.control
        );
    }

    let chain = moser_chain(&u, eps, 2.0, 6)?;
    for (s, norm) in chain.s.iter().zip(&chain.norms) {
        println!("s = {s:>8.3}  ||u||_(s nu) = {norm:.4}");
    }
    Ok(())
}
