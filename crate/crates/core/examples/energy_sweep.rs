//! Sweep `eps` over a decade, then fit the energy, mass and measure scaling.

use fracneumann::experiments::{
    energy_scaling_fit, logspace, lq_scaling, measure_decay, run_sweep, SweepSpec,
};

fn main() -> fracneumann::Result<()> {
    let spec = SweepSpec {
        eps_list: logspace(3e-3, 3e-2, 5),
        nodes_per_unit: 64,
        ..SweepSpec::default()
    };
    let result = run_sweep(&spec)?;

    println!(
        "{:>10} {:>6} {:>12} {:>8} {:>6}",
        "eps", "grid", "energy", "sup", "cubes"
    );
    for r in &result.records {
        println!(
            "{:>10.3e} {:>6} {:>12.5e} {:>8.4} {:>6}",
            r.epsilon, r.grid[0], r.energy, r.sup, r.cubes
        );
    }
    let fit = energy_scaling_fit(&result.records)?;
    println!("energy ~ eps^{:.3}", fit.slope);
    let band = lq_scaling(&result.records, 3.0, 2.0)?;
    println!("int u^3 / eps in [{:.3}, {:.3}]", band.min, band.max);
    println!(
        "|{{u > eta}}| ~ eps^{:.3}",
        measure_decay(&result.records, 0)?.slope
    );
    Ok(())
}
