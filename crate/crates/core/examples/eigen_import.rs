//! Eigenpairs computed elsewhere can replace the built-in cosine basis.
//! Here the file is produced from the cosine basis itself, so the imported
//! fractional power can be checked against the built-in one.

use fracneumann::io::EigenImport;
use fracneumann::operators::frac_apply;
use fracneumann::{NodalField, RectDomain, SpectralField};

fn main() -> fracneumann::Result<()> {
    let domain = RectDomain::unit_square(16)?;
    let mut text = String::from("2 16 16 36 1.0\n");
    let mut kept: Vec<[usize; 2]> = (0..36).map(|i| [i / 6, i % 6]).collect();
    kept.sort_by(|a, b| domain.eigenvalue(a).total_cmp(&domain.eigenvalue(b)));
    for k in &kept {
        let phi = SpectralField::mode(&domain, k).to_nodal();
        let row: Vec<String> = phi.values().iter().map(|v| format!("{v:.17e}")).collect();
        text.push_str(&format!(
            "{:.17e} {}\n",
            domain.eigenvalue(k),
            row.join(" ")
        ));
    }
    let import = EigenImport::parse(&text)?;
    import.validate()?;
    println!("{} modes validated", import.modes.len());

    let mut coeffs = SpectralField::zeros(&domain);
    for (i, k) in kept.iter().enumerate() {
        coeffs.coeffs_mut()[domain.mode_index(k)] = 1.0 / (1.0 + i as f64);
    }
    let u = coeffs.to_nodal();
    let imported = import.frac_apply(u.values(), 0.2, 0.5);
    let builtin = frac_apply(&coeffs, 0.2, 0.5)?.to_nodal();
    let imported = NodalField::new(domain.clone(), imported)?;
    let gap = imported
        .values()
        .iter()
        .zip(builtin.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    println!("max difference to the built-in operator: {gap:.2e}");

    let broken = text.replacen("1.0\n", "2.0\n", 1);
    match EigenImport::parse(&broken).and_then(|i| i.validate()) {
        Ok(()) => println!("unexpectedly accepted"),
        Err(e) => println!("inconsistent volume rejected: {e}"),
    }
    Ok(())
}
