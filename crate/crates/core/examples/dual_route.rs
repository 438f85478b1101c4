//! The half power of `-eps Delta` computed twice: by spectral multipliers
//! and by the heat-semigroup integral. The two agree to quadrature accuracy.

use fracneumann::operators::{frac_apply, semigroup_route_frac_half};
use fracneumann::semilinear::random_perturbation;
use fracneumann::{QuadratureSpec, RectDomain};

fn main() -> fracneumann::Result<()> {
    let domain = RectDomain::unit_square(64)?;
    let quad = QuadratureSpec::default();
    for eps in [0.01, 0.3, 1.0, 10.0] {
        let mut worst: f64 = 0.0;
        for seed in 0..5 {
            let u = random_perturbation(&domain, 10, 1.0, seed);
            let spectral = frac_apply(&u, eps, 0.5)?;
            let semigroup = semigroup_route_frac_half(&u, eps, &quad)?;
            worst = worst.max(spectral.sub(&semigroup).l2_norm() / spectral.l2_norm());
        }
        println!("eps = {eps:<5}  worst relative L2 gap = {worst:.3e}");
    }
    Ok(())
}
