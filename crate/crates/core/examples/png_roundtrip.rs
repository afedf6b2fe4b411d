//! The on-disk formats: 16-bit grayscale PNGs holding `class * 1000 +
//! instance` (65535 = void) and depth in 1/256 m (0 = no measurement).
//!
//!     cargo run --example png_roundtrip

use pdcq::ingest::{decode_panoptic_value, encode_panoptic_value, read_depth, read_panoptic, write_depth, write_panoptic};
use pdcq::synth::default_class_table;
use pdcq::{DepthMap, PanopticLabel, PanopticMap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let classes = default_class_table();
    let void = classes.void_label();
    for value in [26003u16, 7000, 65535] {
        println!("{value:>5} -> {}", decode_panoptic_value(value, void));
    }
    println!("car #999 -> {:?}", encode_panoptic_value(PanopticLabel::new(26, 999), classes.void_class_id()));

    let dir = tempfile::tempdir()?;
    let pan = PanopticMap::new(
        3,
        1,
        vec![PanopticLabel::new(7, 0), PanopticLabel::new(26, 3), void],
    )?;
    let depth = DepthMap::new(3, 1, vec![12.3456, 7.001, 0.0])?;
    write_panoptic(&pan, dir.path().join("pan.png"), &classes)?;
    write_depth(&depth, dir.path().join("depth.png"))?;

    assert_eq!(read_panoptic(dir.path().join("pan.png"), &classes)?, pan);
    let back = read_depth(dir.path().join("depth.png"))?;
    println!("depth written {:?}\ndepth read    {:?}", depth.values(), back.values());
    Ok(())
}
