//! Trains the same ternary network at several sparsity thresholds and
//! prints the sweep as CSV.
//!
//! ```text
//! cargo run --release --example sparsity_sweep -- [epochs] [jobs]
//! ```

use rtconv::model::{sparsity_sweep, write_sweep_csv, ModelConfig, TrainConfig};
use rtconv::tcsconv::{PointwiseMode, SkipMode};

fn main() -> rtconv::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(10, |a| a.parse().expect("epochs"));
    let jobs = args.next().map_or(1, |a| a.parse().expect("jobs"));
    let tc = TrainConfig { epochs, ..TrainConfig::default() };
    let cfg = ModelConfig::uniform(3, 1, 32, 16, tc.num_classes, 9, PointwiseMode::Ternary, SkipMode::Trained, 0.0, 7);
    let rows = sparsity_sweep(&cfg, &[0.0, 0.3, 0.5, 0.7, 0.9, 0.97, 1.0], &tc, jobs)?;
    write_sweep_csv(&rows, std::io::stdout().lock())?;

    let no_skip = cfg.with_skip(0..3, SkipMode::None);
    let collapsed = sparsity_sweep(&no_skip, &[1.0], &tc, 1)?;
    println!("# t = 1 without skip links: accuracy {:.3}", collapsed[0].accuracy);
    Ok(())
}
