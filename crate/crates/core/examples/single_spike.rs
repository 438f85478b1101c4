//! Least-energy solution of `(-eps Delta)^{1/2} u + u = u_+^2` for small
//! `eps`: Nehari descent from a tent followed by Newton polishing.

use fracneumann::semilinear::{solve, SemilinearConfig};
use fracneumann::RectDomain;

fn main() -> fracneumann::Result<()> {
    let domain = RectDomain::unit_square(96)?;
    let config = SemilinearConfig {
        eps: 0.005,
        ..SemilinearConfig::default()
    };
    let report = solve(&domain, &config)?;

    println!("energy          {:.10e}", report.energy);
    println!("constant energy {:.10e}", 1.0 / 6.0);
    println!("residual        {:.2e}", report.residual);
    println!("nehari defect   {:.2e}", report.nehari_defect);
    println!("sup / inf       {:.4} / {:.3e}", report.sup, report.inf);
    println!(
        "iterations      {} descent, {} newton",
        report.descent_iterations, report.newton_iterations
    );

    let nodal = report.u.to_nodal();
    let peak = (0..domain.num_nodes())
        .max_by(|&a, &b| nodal.values()[a].total_cmp(&nodal.values()[b]))
        .unwrap();
    println!("peak at         {:?}", domain.node(peak));
    Ok(())
}
