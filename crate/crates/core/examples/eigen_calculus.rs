//! Fractional powers of the Neumann Laplacian act diagonally on the cosine
//! basis. Apply `(-eps Delta)^{1/2}` to a few eigenmodes and compare with the
//! exact multipliers.

use fracneumann::operators::{frac_apply, h_eps_norm_sq};
use fracneumann::{RectDomain, SpectralField};

fn main() -> fracneumann::Result<()> {
    let domain = RectDomain::unit_square(64)?;
    let eps = 0.3;

    println!(
        "{:>8} {:>14} {:>14} {:>10}",
        "mode", "lambda", "multiplier", "rel err"
    );
    for k in [[0, 1], [1, 1], [2, 3], [5, 0], [7, 7]] {
        let phi = SpectralField::mode(&domain, &k);
        let image = frac_apply(&phi, eps, 0.5)?;
        let lambda = domain.eigenvalue(&k);
        let exact = (eps * lambda).sqrt();
        let err = image.sub(&phi.scaled(exact)).l2_norm() / exact;
        println!(
            "{:>8} {:>14.6} {:>14.6} {:>10.2e}",
            format!("{k:?}"),
            lambda,
            exact,
            err
        );
    }

    let constant = SpectralField::constant(&domain, 3.0);
    println!(
        "constants are annihilated: {:.1e}",
        frac_apply(&constant, eps, 0.5)?.l2_norm()
    );
    println!(
        "||3||_eps^2 = {} (= 9 |Omega|)",
        h_eps_norm_sq(&constant, eps)
    );
    Ok(())
}
