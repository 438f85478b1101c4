//! Neumann heat and Poisson kernels on the unit square: point values with
//! tail bounds, row integrals, and the short-time on-diagonal decay.

use fracneumann::experiments::{log_log_fit, logspace};
use fracneumann::operators::{
    heat_kernel, heat_kernel_row, poisson_kernel, poisson_kernel_row, PoissonRoute,
};
use fracneumann::{QuadratureSpec, RectDomain};

fn main() -> fracneumann::Result<()> {
    let domain = RectDomain::unit_square(128)?;
    let quad = QuadratureSpec::default();
    let (x, z) = ([0.3, 0.4], [0.6, 0.5]);

    for t in [0.05, 0.2, 1.0] {
        let w = heat_kernel(&domain, t, &x, &z, quad.tolerance)?;
        let mass = heat_kernel_row(&domain, t, &x)?.integral();
        println!(
            "W_{t}(x, z) = {:.10}  (tail <= {:.1e}),  int W = {mass:.15}",
            w.value, w.tail_bound
        );
    }
    for y in [0.05, 0.2, 1.0] {
        let direct = poisson_kernel(&domain, y, &x, &z, PoissonRoute::Direct, &quad)?;
        let sub = poisson_kernel(&domain, y, &x, &z, PoissonRoute::Subordinated, &quad)?;
        let mass = poisson_kernel_row(&domain, y, &x)?.integral();
        println!(
            "P_{y}(x, z) = {:.12} direct, {:.12} subordinated,  int P = {mass:.15}",
            direct.value, sub.value
        );
    }

    let centre = [0.5, 0.5];
    let times = logspace(1e-3, 1e-2, 8);
    let diag = times
        .iter()
        .map(|&t| heat_kernel(&domain, t, &centre, &centre, quad.tolerance).map(|s| s.value))
        .collect::<fracneumann::Result<Vec<_>>>()?;
    let fit = log_log_fit(&times, &diag)?;
    println!(
        "on-diagonal decay W_t(x, x) ~ t^{:.4}  (expected -n/2 = -1)",
        fit.slope
    );
    Ok(())
}
