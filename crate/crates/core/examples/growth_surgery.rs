//! Adding neurons to a trained layer without changing what the network
//! computes, under every fan-in initialization.
//!
//! cargo run --release --example growth_surgery

use noracl::diagnostics::effective_plastic_count;
use noracl::linalg::Matrix;
use noracl::rng::stream_rng;
use noracl::trigger::compute_ed;
use noracl::{ConsolidationState, GrowableMlp, GrowthOutcome, InitStrategy, ParamSet};

fn main() -> anyhow::Result<()> {
    let mut rng = stream_rng(0, &[]);
    let x = Matrix::standard_normal(20, 64, &mut rng);

    for strategy in InitStrategy::ALL {
        let mut mlp = GrowableMlp::new(20, &[8, 8], 4, &mut stream_rng(1, &[]))?;
        let mut cons = ConsolidationState::new(&mlp, 0.9)?;
        let mut fisher = ParamSet::zeros_like(mlp.params());
        fisher.values_mut().for_each(|f| *f = 0.01);
        cons.consolidate_after_task(&fisher, &mlp)?;

        let before = mlp.forward(&x)?;
        let ed_before = compute_ed(&before.hidden[0], 0.05)?;
        let plastic_before = effective_plastic_count(&cons, 500.0);

        let outcome = mlp.grow_layer(0, 4, strategy, 0.2, None, &mut rng)?;
        if let GrowthOutcome::Grown { layer, k, .. } = outcome {
            cons.pad_for_growth(layer, k)?;
        }

        let after = mlp.forward(&x)?;
        println!(
            "{strategy:>9}: widths {:?}, max logit change {:.1e}, layer-1 ED {:.3} -> {:.3}, plastic params {:.0} -> {:.0}",
            mlp.hidden_widths(),
            before.logits.max_abs_diff(&after.logits),
            ed_before,
            compute_ed(&after.hidden[0], 0.05)?,
            plastic_before,
            effective_plastic_count(&cons, 500.0),
        );
    }
    Ok(())
}
