//! Spatial complexity of a few synthetic frames, scale by scale.

use cdio::complexity::{build_pyramid, complexity_of, Frame};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let side = 32;
    let frames = [
        ("flat", Frame::constant(side, 0.2)?),
        (
            "checkerboard",
            Frame::from_fn(side, |r, c| if (r + c) % 2 == 0 { 1.0 } else { -1.0 })?,
        ),
        (
            "stripes of 4",
            Frame::from_fn(side, |_, c| if (c / 4) % 2 == 0 { 1.0 } else { -1.0 })?,
        ),
        (
            "gradient",
            Frame::from_fn(side, |r, c| (r + c) as f64 / (2 * side - 2) as f64 * 2.0 - 1.0)?,
        ),
        (
            "ripple",
            Frame::from_fn(side, |r, c| {
                ((r as f64 * 0.7).sin() * (c as f64 * 0.3).cos()).clamp(-1.0, 1.0)
            })?,
        ),
    ];
    println!("{:<14} {:>8}  per-scale terms (fine to coarse)", "frame", "total");
    for (name, frame) in &frames {
        let pyramid = build_pyramid(frame, 2, 5)?;
        let report = complexity_of(&pyramid)?;
        let terms: Vec<String> = report.per_scale.iter().map(|c| format!("{c:.4}")).collect();
        println!("{name:<14} {:>8.4}  {}", report.total, terms.join(" "));
    }

    // The cross overlap between adjacent levels equals the coarse level's self overlap.
    let pyramid = build_pyramid(&frames[4].1, 2, 5)?;
    for n in 1..=5 {
        println!(
            "level {n}: O(n,n-1) = {:.6}, O(n,n) = {:.6}",
            pyramid.overlap(n, n - 1)?,
            pyramid.overlap(n, n)?
        );
    }
    Ok(())
}
