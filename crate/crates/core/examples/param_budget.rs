//! Counts trainable parameters and storage as pointwise and skip layers are
//! converted, and finds the deepest network that fits a fixed budget.

use rtconv::bench::{model_cost, WeightPolicy};
use rtconv::model::{count_params, deepest_within_budget, ModelConfig, Network};
use rtconv::tcsconv::{PointwiseMode, SkipMode};

fn main() -> rtconv::Result<()> {
    let fp = ModelConfig::uniform(6, 5, 128, 16, 8, 9, PointwiseMode::Float, SkipMode::Trained, 0.5, 1);
    let variants = [
        ("float", fp.clone()),
        ("last half ternary", fp.clone().with_pointwise(3..6, PointwiseMode::Ternary)),
        ("all ternary", fp.clone().with_pointwise(0..6, PointwiseMode::Ternary)),
        ("all ternary, identity skips", fp.clone().with_pointwise(0..6, PointwiseMode::Ternary).with_skip(0..6, SkipMode::Identity)),
    ];
    println!("{:<30} {:>10} {:>10} {:>14} {:>14}", "variant", "trainable", "frozen", "bytes (fly)", "bytes (2-bit)");
    for (name, cfg) in &variants {
        let r = count_params(&Network::build(cfg)?);
        println!(
            "{name:<30} {:>10} {:>10} {:>14} {:>14}",
            r.trainable_float_count, r.frozen_implicit_count, r.stored_bytes_on_the_fly, r.stored_bytes_materialized
        );
    }

    let net = Network::build(&fp)?;
    let cost = model_cost(&net, [1, 16, 100], WeightPolicy::OnTheFly)?;
    println!(
        "\nfloat model: {} pointwise vs {} depthwise weights, {} multiplications per 100-step input",
        cost.pointwise_weights, cost.depthwise_weights, cost.total.multiplications
    );
    let rt = Network::build(&variants[2].1)?;
    let cost = model_cost(&rt, [1, 16, 100], WeightPolicy::OnTheFly)?;
    println!("all ternary: {} multiplications, {} weight bytes read", cost.total.multiplications, cost.total.weight_bytes_read);

    let base = ModelConfig::uniform(1, 2, 64, 16, 8, 9, PointwiseMode::Float, SkipMode::Trained, 0.5, 1);
    println!("\n{:>10} {:>10} {:>10}", "budget", "FP depth", "RT depth");
    for budget in [50_000, 100_000, 200_000] {
        let fp = deepest_within_budget(&base, PointwiseMode::Float, budget, 64)?;
        let rt = deepest_within_budget(&base, PointwiseMode::Ternary, budget, 64)?;
        println!("{budget:>10} {:>10} {:>10}", fp.unwrap_or(0), rt.unwrap_or(0));
    }
    Ok(())
}
