//! Writes and re-reads the binary event, map and flow files and shows that a
//! corrupted file is rejected.
//!
//! cargo run --release --example file_formats

use evreflex::io::{decode_map, encode_map, read_events, read_flow, write_events, write_flow};
use evreflex::{Event, FloatMap, FlowField, Polarity, Semantics};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let dir = tmp.path();

    let events: Vec<Event> = (0..5)
        .map(|i| Event::new(0.01 * i as f64, i * 3, 2, if i % 2 == 0 { Polarity::Positive } else { Polarity::Negative }))
        .collect();
    let path = dir.join("events.evrx");
    write_events(&path, &events, 32, 24)?;
    let back = read_events(&path)?;
    println!("events: wrote {}, read {} ({}x{}), identical: {}", events.len(), back.events.len(), back.width, back.height, back.events == events);

    let flow = FlowField::from_fn(8, 6, |x, y| (x as f32 * 0.25, -(y as f32) * 0.5));
    let path = dir.join("flow.evrf");
    write_flow(&path, &flow)?;
    println!("flow: round trip identical: {}", read_flow(&path)? == flow);

    let depth = FloatMap::from_fn(4, 4, Semantics::DepthM, |x, y| 1.0 + (x + y) as f32);
    let mut bytes = encode_map(&depth);
    println!("depth map: {} bytes, decodes: {}", bytes.len(), decode_map(&bytes).is_ok());
    bytes.truncate(bytes.len() - 3);
    match decode_map(&bytes) {
        Ok(_) => println!("truncated map unexpectedly decoded"),
        Err(e) => println!("truncated map rejected: {e}"),
    }
    Ok(())
}
