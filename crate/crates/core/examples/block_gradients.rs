//! Runs a residual block forward and backward and compares a few analytic
//! gradients with central differences.

use rtconv::tcsconv::{Block, BlockConfig, Parameterized, PointwiseMode, SkipMode, Tensor};
use rtconv::weightgen::Generator;

fn loss(block: &mut Block, x: &Tensor, probe: &Tensor) -> f64 {
    let (y, _) = block.forward(x, true).unwrap();
    y.data().iter().zip(probe.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

fn main() -> rtconv::Result<()> {
    let mut block = Block::new(&BlockConfig {
        in_channels: 8,
        out_channels: 8,
        repeats: 2,
        kernel: 5,
        pointwise: PointwiseMode::Ternary,
        skip: SkipMode::Trained,
        threshold: 0.5,
        generator: Generator::SequentialStream,
        seed: 3,
        first_layer_tag: 1,
        bn_eps: 1e-5,
        bn_momentum: 0.1,
    })?;
    let x = Tensor::from_fn([2, 8, 16], |b, c, t| ((b * 31 + c * 7 + t) as f32 * 0.37).sin());
    let probe = Tensor::from_fn([2, 8, 16], |b, c, t| ((b + 2 * c + 3 * t) as f32 * 0.11).cos());

    let (_, cache) = block.forward(&x, true)?;
    block.zero_grad();
    let dx = block.backward(&cache, &probe)?;
    println!("trainable values: {}", block.trainable_count());
    println!("frozen layers: {}", block.frozen_layers().len());
    println!("ternary ops so far: {:?}", block.ternary_ops());

    let h = 1e-2;
    let names_and_grads: Vec<(String, f32)> = {
        let mut params = Vec::new();
        block.collect_params("", &mut params);
        params.iter().map(|p| (p.name.clone(), p.grad[0])).collect()
    };
    for (k, (name, analytic)) in names_and_grads.into_iter().enumerate() {
        let shift = |block: &mut Block, delta: f32| {
            let mut params = Vec::new();
            block.collect_params("", &mut params);
            params[k].value[0] += delta;
        };
        shift(&mut block, h);
        let up = loss(&mut block, &x, &probe);
        shift(&mut block, -2.0 * h);
        let down = loss(&mut block, &x, &probe);
        shift(&mut block, h);
        println!("{name:<24} analytic {analytic:>10.5} numeric {:>10.5}", (up - down) / (2.0 * h as f64));
    }
    println!("d loss / d x[0,0,0] = {:.5}", dx.get(0, 0, 0));
    Ok(())
}
