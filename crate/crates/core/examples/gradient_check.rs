//! Finite-difference check of a convolution and of a small two-branch U-Net.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use glareseg::imgrep::Representation;
use glareseg::nncore::{
    conv2d, conv2d_backward, finite_diff_check, LayerDesc, LayerParams, LossWeights, Tensor,
};
use glareseg::unet::{build_model, BranchSpec, UNetConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> glareseg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // conv2d, input gradient only
    let x = Tensor::from_vec(
        &[1, 2, 6, 6],
        (0..72).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let p: LayerParams<f64> = LayerParams::he_normal(LayerDesc::conv(3, 2, 3), &mut rng);
    let y = conv2d(&x, &p)?;
    let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = conv2d_backward(&x, &p, &Tensor::from_vec(y.shape(), r.clone())?)?;
    let check = finite_diff_check(
        |v| {
            let xi = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            conv2d(&xi, &p)
                .unwrap()
                .data()
                .iter()
                .zip(&r)
                .map(|(a, b)| a * b)
                .sum()
        },
        x.data(),
        g.input.data(),
        1e-6,
    );
    println!(
        "conv2d input gradient: max rel error {:.2e} over {} coordinates",
        check.max_rel_error, check.checked
    );

    // whole network, every parameter
    let cfg = UNetConfig::new(
        vec![
            BranchSpec::new(Representation::Rgb),
            BranchSpec::new(Representation::C),
        ],
        2,
        2,
    );
    let mut model = build_model::<f64>(&cfg, 1)?;
    for l in model.layers_mut() {
        for b in l.bias.data_mut() {
            *b = rng.random_range(-0.2..0.2);
        }
    }
    let inputs = cfg
        .branches
        .iter()
        .map(|b| {
            Tensor::from_vec(
                &[1, b.in_channels, 8, 8],
                (0..b.in_channels * 64).map(|_| rng.random()).collect(),
            )
        })
        .collect::<glareseg::Result<Vec<_>>>()?;
    let labels: Vec<u8> = (0..64).map(|i| u8::from(i % 5 == 0)).collect();
    let weights = LossWeights::balanced(8, 8, &labels)?.data;
    let (loss, grads) = model.loss_and_grads(&inputs, &labels, &weights)?;
    let mut probe = model.clone();
    let check = finite_diff_check(
        |v| {
            probe.set_flat_params(v).unwrap();
            probe.loss_and_grads(&inputs, &labels, &weights).unwrap().0
        },
        &model.flat_params(),
        &grads.flat(),
        1e-6,
    );
    println!(
        "U-Net ({} parameters, loss {loss:.4}): max rel error {:.2e}",
        model.param_count(),
        check.max_rel_error
    );
    Ok(())
}
