//! The linear problem `(-eps Delta)^{1/2} u + u = f`: spectral solve,
//! semigroup-quadrature solve, the resolvent kernel and its row solve.

use fracneumann::linear::{
    lp_stability_constant, resolvent_kernel, robin_residual, solve_by_kernel, solve_linear,
    solve_linear_by_quadrature,
};
use fracneumann::semilinear::random_perturbation;
use fracneumann::{NodalField, QuadratureSpec, RectDomain};

fn main() -> fracneumann::Result<()> {
    let domain = RectDomain::unit_square(64)?;
    let quad = QuadratureSpec::default();
    let eps = 0.05;

    let f = NodalField::from_fn(&domain, |x| (1.0 + (3.0 * x[0]).cos() * x[1] * x[1]).exp())
        .to_spectral();
    let sol = solve_linear(&f, eps)?;
    println!("spectral solve residual     {:.2e}", sol.residual);
    let quad_route = solve_linear_by_quadrature(&f, eps, &quad)?;
    println!(
        "quadrature route difference {:.2e}",
        quad_route.sub(&sol.u).l2_norm() / sol.u.l2_norm()
    );
    let kernel_route = solve_by_kernel(&f.to_nodal(), eps, &quad)?.to_spectral();
    println!(
        "kernel route difference     {:.2e}",
        kernel_route.sub(&sol.u).l2_norm() / sol.u.l2_norm()
    );
    println!(
        "Robin residual of the extension at h=1e-4: {:.2e}",
        robin_residual(&sol, 1e-4)?
    );

    let x = [0.5, 0.5];
    for r in [0.02, 0.05, 0.1, 0.2, 0.4] {
        let g = resolvent_kernel(&domain, eps, &x, &[0.5 + r, 0.5], &quad)?;
        println!("G(x, x + {r:<4} e1) = {:.6e}", g.value);
    }

    let corpus: Vec<_> = (0..6)
        .map(|s| random_perturbation(&domain, 12, 1.0, s))
        .collect();
    for q in [1.0, 2.0, 4.0] {
        println!(
            "sup ||u||_q / ||f||_q over the corpus, q = {q}: {:.4}",
            lp_stability_constant(&corpus, eps, q)?
        );
    }
    Ok(())
}
