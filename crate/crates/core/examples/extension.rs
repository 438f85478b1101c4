//! Harmonic extension of a trace to the half-cylinder `Omega x (0, inf)`:
//! its Dirichlet energy, the Robin-type normal derivative, and the trace
//! inequality that the extension minimizes.

use fracneumann::extension::{
    dirichlet_energy, dirichlet_energy_slab_estimate, dtn_residual, extend, extend_subordinated,
    trace_inequality_gap, ZeroTraceBump,
};
use fracneumann::semilinear::random_perturbation;
use fracneumann::{QuadratureSpec, RectDomain, SpectralField};

fn main() -> fracneumann::Result<()> {
    let domain = RectDomain::unit_square(64)?;
    let eps = 0.2;
    let u = SpectralField::constant(&domain, 1.0)
        .add_scaled(1.0, &random_perturbation(&domain, 6, 1.0, 7));

    let v = extend(&u, eps, &[0.0, 0.1, 0.5, 1.0])?;
    let spectral: f64 = domain
        .eigenvalues()
        .iter()
        .zip(u.coeffs())
        .map(|(l, c)| (eps * l).sqrt() * c * c)
        .sum();
    println!("Dirichlet energy       {:.12}", dirichlet_energy(&v));
    println!("sum sqrt(eps lam) u^2  {spectral:.12}");
    println!(
        "slab quadrature to y=8 {:.12}",
        dirichlet_energy_slab_estimate(&v, 8.0)
    );

    let quad = QuadratureSpec::default();
    let direct = v.at(0.5)?;
    let sub = extend_subordinated(&u, eps, 0.5, &quad)?;
    println!(
        "slice y=0.5, semigroup vs direct: {:.2e}",
        direct.sub(&sub).l2_norm()
    );

    for h in [4e-4, 2e-4, 1e-4] {
        println!(
            "one-sided DtN residual at h = {h:.0e}: {:.4e}",
            dtn_residual(&u, eps, h)?
        );
    }

    println!(
        "trace gap of the extension: {:.2e}",
        trace_inequality_gap(&v, &[])?
    );
    for amp in [0.05, 0.2, 1.0] {
        let bump = ZeroTraceBump {
            mode: vec![2, 1],
            amplitude: amp,
            support: 1.5,
        };
        println!(
            "trace gap with a bump of amplitude {amp}: {:.4e}",
            trace_inequality_gap(&v, &[bump])?
        );
    }
    Ok(())
}
