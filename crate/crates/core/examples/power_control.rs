//! Phase 3 on two scalar links: the first-hop dominant relay is turned down
//! until its SINR meets the rate-matching target, which also helps the other.

use relay_precoding::linalg::{c, scalar};
use relay_precoding::power_control::{decompose_precoders, run_power_control, PowerControlProblem, DEFAULT_MAX_ITER};
use relay_precoding::topology::build_topology;
use relay_precoding::{ChannelSet, SystemSpec};

fn main() -> relay_precoding::Result<()> {
    let spec = SystemSpec::new((1, 2), (1, 2), (1, 2), 1, 1)?.with_powers(9.0, 1.0);
    let topology = build_topology(&spec);
    let one = scalar(c(1.0, 0.0));
    let channels = ChannelSet {
        first_hop: vec![vec![one.clone(), one.clone()], vec![one.clone(), one.clone()]],
        second_hop: vec![vec![one.clone(), one.clone()], vec![one.clone(), one]],
    };

    // Powers 9 and 1; both relays can forward SINR 1 on the second hop.
    let precoders = [scalar(c(3.0, 0.0)), scalar(c(1.0, 0.0))];
    let state = decompose_precoders(&precoders);
    let problem = PowerControlProblem::new(&channels, &topology, &spec, &state, vec![1.0, 1.0])?;
    let outcome = run_power_control(&problem, state, DEFAULT_MAX_ITER)?;

    for (n, (theta, rates)) in outcome.theta_history.iter().zip(&outcome.rate_history).enumerate() {
        println!(
            "step {n}: powers {theta:?}, end-to-end rates [{:.4}, {:.4}], sum {:.4}",
            rates[0],
            rates[1],
            rates.iter().sum::<f64>()
        );
    }
    println!(
        "stopped after {} step(s); mismatch left: {}",
        outcome.iterations(),
        outcome.classification.has_mismatch()
    );
    Ok(())
}
