//! Best-of-N random initializations on one realization.

use relay_precoding::topology::{build_topology, parse_system_spec, sample_channels};
use relay_precoding::{Instance, VariantId};

fn main() -> relay_precoding::Result<()> {
    let spec = parse_system_spec("(2^3 x 2^6 x 2^12, 1x1)")?.with_power_db(30.0, 30.0);
    let topology = build_topology(&spec);
    let channels = sample_channels(&topology, &spec, 21);
    let variants = [VariantId::Baseline, VariantId::Final];
    let runs = Instance::new(&channels, &topology, &spec).opportunistic(&variants, 10, 22)?;

    println!("upper bound {:.4} bits", runs.upper_bound);
    for n in [1, 2, 5, 10] {
        let best = |v| runs.best(v, n).map(|r| r.sum_rate()).unwrap_or(f64::NAN);
        println!(
            "N = {n:2}: baseline {:.4}, final {:.4}",
            best(VariantId::Baseline),
            best(VariantId::Final)
        );
    }
    let winner = runs.best(VariantId::Final, 10).expect("ten inits");
    println!("final's best init is #{} (seed {:#x})", winner.init_id, winner.seed);
    Ok(())
}
