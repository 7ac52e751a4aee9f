//! Build the candidate action-object region pool for a face crop (graph
//! segmentation plus parallel-contour quadrangles) and compute object
//! features for the best ground-truth match.
//!
//! ```bash
//! cargo run --release --example region_proposals
//! ```

use faceact::cli_io::{generate_scene, SynthSpec};
use faceact::imaging::rasterize_polygon;
use faceact::landmarks::normalize_face_crop;
use faceact::regions::{
    build_region_pool, object_features, overlap_score, BaselineAppearance, BaselineSegmenter,
    ObjectFeatures, Provenance,
};

fn main() -> faceact::Result<()> {
    let spec = SynthSpec::default();
    let scene = generate_scene(&spec, 1, 0);
    let (crop, to_source) = normalize_face_crop(&scene.image, &scene.face_box)?;

    let pool = build_region_pool(&crop, &BaselineSegmenter::default())?;
    let by = |p: Provenance| pool.provenance.iter().filter(|q| **q == p).count();
    println!(
        "pool: {} regions ({} segmentation, {} parallel-contour)",
        pool.len(),
        by(Provenance::Segmentation),
        by(Provenance::ParallelContour)
    );

    // ground-truth mask in crop coordinates
    let to_crop = to_source.inverse();
    let verts: Vec<(f64, f64)> =
        scene.object_polygon.iter().map(|(x, y)| to_crop.apply(*x, *y)).collect();
    let gt = rasterize_polygon(crop.width(), crop.height(), &verts)?;

    let (best_idx, best_iou) = pool
        .regions
        .iter()
        .enumerate()
        .map(|(i, r)| (i, overlap_score(r, &gt).unwrap()))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    println!("best overlap with the planted object: region {best_idx} at IoU {best_iou:.3}");

    let app = BaselineAppearance;
    let features = object_features(&pool.regions[best_idx], &crop, &app)?;
    let vec = features.to_vec();
    println!("object feature vector: {} values", vec.len());
    for span in ObjectFeatures::layout(184) {
        let slice = &vec[span.start..span.start + span.len.min(4)];
        println!("  {:<12} [{:>4}..{:<4}]  starts {:?}", span.name, span.start, span.start + span.len, slice);
    }
    let e = &features.ellipse;
    println!(
        "ellipse: major {:.1}, minor {:.1}, area {}, eccentricity {:.3}, orientation {:.2} rad",
        e[0], e[1], e[2], e[3], e[4]
    );
    Ok(())
}
