//! Emulates events from two rendered frames and builds the 4-channel event map.
//!
//! cargo run --release --example accumulate_events

use evreflex::sim::{simulate_sequence, SceneConfig, Trajectory};
use evreflex::{accumulate_events, event_mask, Polarity};

fn main() -> evreflex::Result<()> {
    let scene = SceneConfig {
        trajectory: Trajectory::line((-1.5, 0.0), (-1.5, 1.0), 0.0, 1.0, 0.5),
        duration: 0.2,
        ..Default::default()
    };
    let seq = simulate_sequence(&scene)?;
    let events = &seq.events[0];
    let on = events.iter().filter(|e| e.polarity == Polarity::Positive).count();
    println!("{} events ({on} on, {} off)", events.len(), events.len() - on);

    let (w, h) = seq.frames[0].intensity.dims();
    let map = accumulate_events(events, seq.window(0), w, h)?;
    let mask = event_mask(&map);
    println!(
        "event map {w}x{h}: {} pixels fired ({:.1}%), {} events counted",
        mask.count(),
        100.0 * mask.count() as f64 / (w * h) as f64,
        map.total_events()
    );
    for y in (0..h).step_by(h / 16) {
        let row: String = (0..w)
            .step_by(w / 32)
            .map(|x| if mask.get(x, y) { '#' } else { '.' })
            .collect();
        println!("{row}");
    }
    Ok(())
}
