//! Generates the same ternary matrix with each generator, prints its
//! statistics, and round-trips it through the TERN1 format.

use rtconv::weightgen::{generate, read_tern1, write_tern1, write_text, Generator, MatrixStats, WeightSpec};

fn main() -> rtconv::Result<()> {
    for generator in [Generator::SequentialStream, Generator::CoordinateHash, Generator::StructuredNofM { n: 2, m: 4 }] {
        let spec = WeightSpec::new(42, 0, 256, 256, 0.9, generator)?;
        let matrix = generate(&spec)?;
        let stats = MatrixStats::of(&matrix);
        println!(
            "{generator:?}: sparsity {:.4}, {} of {} nonzeros positive",
            stats.sparsity,
            stats.plus,
            stats.plus + stats.minus
        );

        let mut bytes = Vec::new();
        write_tern1(&mut bytes, &spec, &matrix)?;
        let (spec_back, matrix_back) = read_tern1(&bytes)?;
        assert_eq!((spec_back, matrix_back), (spec, matrix));
        println!("  TERN1 file: {} bytes", bytes.len());
    }

    // Any single entry can be computed without the rest of the matrix.
    let spec = WeightSpec::new(7, 3, 6, 16, 0.5, Generator::CoordinateHash)?;
    println!("entry (2, 5) = {:?}", spec.entry(2, 5)?);
    write_text(&mut std::io::stdout().lock(), &generate(&spec)?)?;
    Ok(())
}
