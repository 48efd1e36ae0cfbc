//! The four variants on one random realization of the main system.

use relay_precoding::pipeline::upper_bound_from;
use relay_precoding::topology::{build_topology, parse_system_spec, sample_channels};
use relay_precoding::{Instance, VariantId};

fn main() -> relay_precoding::Result<()> {
    let spec = parse_system_spec("(2^3 x 2^6 x 2^12, 1x1)")?
        .with_power_db(30.0, 30.0)
        .with_timesharing(0.5);
    let topology = build_topology(&spec);
    let channels = sample_channels(&topology, &spec, 11);
    let instance = Instance::new(&channels, &topology, &spec);

    let prepared = instance.prepare(0, 12, &VariantId::ALL)?;
    println!("upper bound {:.4} bits", upper_bound_from(&prepared.second_hop, spec.timesharing));
    for run in instance.run(&prepared, spec.timesharing, &VariantId::ALL)? {
        let phase3 = run
            .phase3_iterations
            .map(|n| format!(", {n} power-control steps"))
            .unwrap_or_default();
        println!("{:>13}: {:.4} bits{phase3}", run.variant, run.sum_rate());
        let per_relay: Vec<String> = run
            .report
            .first_hop_rates
            .iter()
            .zip(&run.report.relay_sum_rates)
            .map(|(r1, r2)| format!("{:.2}/{:.2}", spec.timesharing * r1, (1.0 - spec.timesharing) * r2))
            .collect();
        println!("               t*R1/(1-t)*R2 per relay: {}", per_relay.join(" "));
    }
    Ok(())
}
