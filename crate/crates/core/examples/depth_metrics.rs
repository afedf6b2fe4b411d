//! Per-pixel depth errors, threshold inlier masks, and the summary metrics.
//!
//!     cargo run --example depth_metrics

use pdcq::{abs_rel_map, depth_metrics, inlier_mask, DepthMap, PdcqConfig};

fn main() -> pdcq::Result<()> {
    let config = PdcqConfig::default();
    let gt = DepthMap::new(4, 1, vec![2.0, 4.0, 10.0, 0.0])?;
    let pred = DepthMap::new(4, 1, vec![1.0, 8.0, 10.9, 5.0])?;

    // The last pixel has no ground truth and is ignored everywhere.
    let errors = abs_rel_map(&pred, &gt, &config)?;
    println!("abs rel per pixel: {:?}", errors.errors());
    for lambda in [0.1, 0.25, 0.5] {
        println!("inliers at {lambda:<4}: {:?}", inlier_mask(&errors, lambda)?);
    }

    let m = depth_metrics(&pred, &gt, &config)?;
    println!(
        "abs rel {:.4}  rmse {:.4} m  δ<1.25 {:.3}  δ<1.25² {:.3}  δ<1.25³ {:.3}  ({} px)",
        m.abs_rel, m.rmse, m.delta1, m.delta2, m.delta3, m.valid_pixel_count
    );
    Ok(())
}
