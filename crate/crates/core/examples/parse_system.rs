//! Parses system strings, builds the block topology and draws one channel set.
//!
//! ```text
//! cargo run --example parse_system -- "(2^3 x 2^6 x 2^12, 1x1)"
//! ```

use relay_precoding::topology::{build_topology, parse_system_spec, sample_channels};

fn main() -> relay_precoding::Result<()> {
    let text = std::env::args().nth(1).unwrap_or_else(|| "(2^3 x 2^6 x 2^12, 1x1)".into());
    let spec = parse_system_spec(&text)?;
    println!("{spec}");
    println!(
        "  {} transmitters x {} antennas, {} relays x {}, {} receivers x {}",
        spec.transmitters, spec.tx_antennas, spec.relays, spec.relay_antennas, spec.receivers, spec.rx_antennas
    );
    println!("  streams: {} per relay, {} per receiver", spec.first_hop_streams, spec.second_hop_streams);

    let topology = build_topology(&spec);
    for (j, relays) in topology.transmitter_relays.iter().enumerate() {
        println!("  transmitter {j} -> relays {relays:?}");
    }
    for (k, receivers) in topology.relay_receivers.iter().enumerate() {
        println!("  relay {k} -> receivers {receivers:?}");
    }

    let channels = sample_channels(&topology, &spec, 42);
    let h = &channels.first_hop[0][0];
    println!(
        "first-hop H[0][0] is {}x{}, second-hop G[0][0] is {}x{}, fingerprint {:016x}",
        h.nrows(),
        h.ncols(),
        channels.second_hop[0][0].nrows(),
        channels.second_hop[0][0].ncols(),
        channels.fingerprint()
    );

    for bad in ["(2^3 x 2^6, 1x1)", "(2^3 x 2^5 x 2^12, 1x1)"] {
        match parse_system_spec(bad) {
            Ok(_) => println!("{bad}: accepted"),
            Err(e) => println!("{bad}: {e}"),
        }
    }
    Ok(())
}
