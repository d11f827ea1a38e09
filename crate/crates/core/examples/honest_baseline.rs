//! The honest strategy earns exactly the miner's share of mining power in
//! both bundled models.

use arrmdp::models::{bitcoin::BitcoinParams, ethereum::EthereumParams, ModelSpec};
use arrmdp::arr_revenue;

fn main() -> arrmdp::Result<()> {
    for alpha in [0.1, 0.25, 0.4] {
        let specs = [
            ModelSpec::Bitcoin(BitcoinParams::new(alpha, 0.5, 20)?),
            ModelSpec::Ethereum(EthereumParams::new(alpha, 6)?),
        ];
        for spec in specs {
            let model = spec.build()?;
            let rev = arr_revenue(&model.mdp, &model.honest)?;
            println!(
                "{:<8} alpha={alpha:<5} honest revenue={:.12} (avg reward {:.6}, avg difficulty {:.6})",
                spec.family(),
                rev.rev_arr,
                rev.avg_reward_per_step,
                rev.avg_difficulty_per_step
            );
        }
    }
    Ok(())
}
