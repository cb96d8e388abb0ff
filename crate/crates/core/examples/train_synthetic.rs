//! Trains a float-pointwise network and a frozen-ternary one on the
//! synthetic task and prints their learning curves.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [epochs] [t]
//! ```

use std::time::Instant;

use rtconv::model::{count_params, make_synthetic, train, ModelConfig, Network, Split, TrainConfig};
use rtconv::tcsconv::{PointwiseMode, SkipMode};

fn main() -> rtconv::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(30, |a| a.parse().expect("epochs"));
    let t = args.next().map_or(0.5, |a| a.parse().expect("t"));
    let tc = TrainConfig { epochs, ..TrainConfig::default() };
    let data = make_synthetic(&tc, 16)?;

    for (label, mode) in [("float", PointwiseMode::Float), ("ternary", PointwiseMode::Ternary)] {
        let cfg = ModelConfig::uniform(3, 1, 32, 16, tc.num_classes, 9, mode, SkipMode::Trained, t, 7);
        let mut net = Network::build(&cfg)?;
        let params = count_params(&net).trainable_float_count;
        let start = Instant::now();
        let history = train(&mut net, &data, &tc)?;
        println!("{label} pointwise, t = {t}, {params} trainable floats, {:.1?}", start.elapsed());
        for e in history.rows.iter().filter(|r| r.split == Split::Val) {
            let tr = history.rows.iter().find(|r| r.epoch == e.epoch && r.split == Split::Train).unwrap();
            println!(
                "  epoch {:>2}  train loss {:.3} acc {:.3}  val loss {:.3} acc {:.3}",
                e.epoch, tr.loss, tr.accuracy, e.loss, e.accuracy
            );
        }
    }
    Ok(())
}
