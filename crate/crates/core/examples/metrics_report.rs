//! ACC / BWT / FWT from an accuracy matrix, and the plain-text layout.

use gem_core::experiment::{format_r_matrix, parse_r_matrix};
use gem_core::RMatrix;

fn main() -> gem_core::Result<()> {
    let mut r = RMatrix::new(vec![0.10, 0.11, 0.09]);
    r.push_row(vec![0.95, 0.40, 0.20])?;
    r.push_row(vec![0.90, 0.93, 0.35])?;
    r.push_row(vec![0.85, 0.90, 0.94])?;

    let text = format_r_matrix(&r);
    print!("{text}");
    println!("ACC {:.4}", r.acc()?);
    println!("BWT {:+.4}", r.bwt()?);
    println!("FWT {:+.4}", r.fwt()?);

    assert_eq!(parse_r_matrix(&text)?, r);
    Ok(())
}
