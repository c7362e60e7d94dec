//! Detect planes, remove outliers and segment rooms on the two-room scene.

use std::time::Instant;

use bimrecon::cleaning::{clean, CleanParams};
use bimrecon::eval::{cleaning_score, label_purity};
use bimrecon::planes::{detect_planes, RansacParams};
use bimrecon::pointcloud::subsample_indices;
use bimrecon::roomlabel::{label_rooms, RoomLabelParams};
use bimrecon::synthgen::{generate, presets};

fn main() -> anyhow::Result<()> {
    let (cloud, gt) = generate(&presets::two_rooms(0))?;
    let t = Instant::now();
    let origin = subsample_indices(&cloud, 0.02);
    let cloud = cloud.select(&origin);
    println!("{} points after subsampling ({:.1?})", cloud.len(), t.elapsed());

    let t = Instant::now();
    let planes = detect_planes(&cloud, &RansacParams::default())?;
    println!("{} planes ({:.1?})", planes.len(), t.elapsed());
    for p in &planes {
        println!("  n = {:.3?} d = {:.3} inliers = {}", p.normal.as_slice(), p.offset, p.inliers.len());
    }

    let t = Instant::now();
    let (cleaned, planes, report) = clean(&cloud, &planes, &CleanParams::default())?;
    let kept: Vec<usize> = report.kept.iter().map(|&i| origin[i]).collect();
    let score = cleaning_score(&origin, &kept, &gt);
    println!(
        "removed per iteration {:?}, outliers removed {:.1}%, surface points lost {:.2}% ({:.1?})",
        report.removed_per_iteration,
        100.0 * score.outliers_removed,
        100.0 * score.interior_loss,
        t.elapsed()
    );

    let t = Instant::now();
    let (labels, rep) = label_rooms(&cleaned, &planes, &RoomLabelParams::default());
    let truth: Vec<Option<u32>> = kept.iter().map(|&i| gt.labels[i]).collect();
    println!("{rep:?} ({:.1?})", t.elapsed());
    println!("{} room labels, purity {:.4}", labels.n, label_purity(&labels.assignment, &truth));
    Ok(())
}
