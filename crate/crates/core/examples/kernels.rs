//! Applies one ternary matrix through every representation and shows that
//! the outputs agree bit for bit while no kernel multiplies.

use rtconv::linalg::{
    matvec, matvec_transpose, reference_float_matvec, IndexPairMatrix, OnTheFly, OpCounter, PackedBitplanes,
};
use rtconv::tcsconv::uniform_fill;
use rtconv::weightgen::{generate, Generator, WeightSpec};

fn main() -> rtconv::Result<()> {
    let spec = WeightSpec::new(1, 0, 64, 96, 0.7, Generator::SequentialStream)?;
    let dense = generate(&spec)?;
    let pairs = IndexPairMatrix::from(&dense);
    let planes = PackedBitplanes::from(&dense);
    let fly = OnTheFly::new(spec)?;
    let mut x = vec![0.0; 96];
    uniform_fill(9, 1.0, &mut x);

    let mut c = OpCounter::default();
    let reference = reference_float_matvec(&dense, &x, &mut c)?;
    println!("{:<14} mults {:>6} adds {:>6} weight bytes {:>6}", "float", c.multiplications, c.additions, c.weight_bytes_read);

    let runs: [(&str, &dyn rtconv::linalg::TernaryOperator); 4] =
        [("dense", &dense), ("index pairs", &pairs), ("bitplanes", &planes), ("on the fly", &fly)];
    for (name, m) in runs {
        let mut c = OpCounter::default();
        let y = matvec(m, &x, &mut c)?;
        let exact = y.iter().zip(&reference).all(|(a, b)| a.to_bits() == b.to_bits());
        println!(
            "{name:<14} mults {:>6} adds {:>6} weight bytes {:>6} bit-exact {exact}",
            c.multiplications, c.additions, c.weight_bytes_read
        );
    }

    // The transposed product carries gradients back through frozen layers.
    let mut g = vec![0.0; 64];
    uniform_fill(10, 1.0, &mut g);
    let back = matvec_transpose(&pairs, &g, &mut OpCounter::default())?;
    let lhs: f64 = reference.iter().zip(&g).map(|(&a, &b)| a as f64 * b as f64).sum();
    let rhs: f64 = x.iter().zip(&back).map(|(&a, &b)| a as f64 * b as f64).sum();
    println!("<Wx, g> = {lhs:.6}, <x, W^T g> = {rhs:.6}");
    Ok(())
}
