//! Times the matrix kernels and prints the benchmark CSV.
//!
//! ```text
//! cargo run --release --example bench_kernels -- [threads]
//! ```

use rtconv::bench::{bench_matvec, write_bench_csv, BenchConfig};

fn main() -> rtconv::Result<()> {
    let threads = std::env::args().nth(1).map_or(1, |a| a.parse().expect("threads"));
    let cfg = BenchConfig {
        shapes: vec![(128, 128), (512, 512)],
        t_list: vec![0.0, 0.5, 0.9, 1.0],
        reps: 31,
        threads,
        ..BenchConfig::default()
    };
    let rows = bench_matvec(&cfg)?;
    write_bench_csv(&rows, std::io::stdout().lock())
}
