//! Compute face-object interaction features for two regions of the same
//! crop: the planted action object and a far distractor. The location
//! prior, landmark distances and log-polar coverage separate them cleanly.
//!
//! ```bash
//! cargo run --release --example interaction_features
//! ```

use faceact::cli_io::{generate_scene, SynthSpec};
use faceact::imaging::{dense_descriptor_grid, rasterize_polygon};
use faceact::interaction::{
    interaction_features, saliency_prior, BaselineSaliency, InteractionFeatures,
    InteractionParams,
};
use faceact::landmarks::normalize_face_crop;
use faceact::star_vote::train_star_from_grids;

fn main() -> faceact::Result<()> {
    let spec = SynthSpec::default();
    let params = InteractionParams::default();

    // a tiny location-prior model from a few training crops of one class
    let star_params = faceact::star_vote::StarParams::default();
    let mut grids = Vec::new();
    let mut targets = Vec::new();
    for i in 0..6 {
        let s = generate_scene(&spec, 0, i);
        let (crop, to_source) = normalize_face_crop(&s.image, &s.face_box)?;
        let to_crop = to_source.inverse();
        let verts: Vec<(f64, f64)> =
            s.object_polygon.iter().map(|(x, y)| to_crop.apply(*x, *y)).collect();
        let mask = rasterize_polygon(crop.width(), crop.height(), &verts)?;
        let (cx, cy) = faceact::learning::mask_centroid(&mask);
        grids.push(dense_descriptor_grid(&crop, star_params.stride, star_params.patch)?);
        targets.push((cx, cy));
    }
    let inputs: Vec<_> = grids.iter().zip(targets.iter().copied()).collect();
    let star = train_star_from_grids(&inputs, &star_params, 5)?;

    // a fresh test scene of the same class
    let scene = generate_scene(&spec, 0, 100);
    let (crop, to_source) = normalize_face_crop(&scene.image, &scene.face_box)?;
    let to_crop = to_source.inverse();
    let landmarks = scene.landmarks.transform(&to_crop).rounded();
    let face_box_in_crop = to_crop.apply_rect(&scene.face_box);
    let loc = star.vote(&crop, &star_params)?;
    let sal = saliency_prior(&crop, &BaselineSaliency)?;

    let verts: Vec<(f64, f64)> =
        scene.object_polygon.iter().map(|(x, y)| to_crop.apply(*x, *y)).collect();
    let object = rasterize_polygon(crop.width(), crop.height(), &verts)?;
    // a same-size block far from the mouth as the distractor
    let distractor = faceact::imaging::RegionMask::from_fn(96, 96, |x, y| {
        x < 14 && (4..4 + object.area() / 14 + 1).contains(&y)
    });

    println!("location prior peak: {:?}", loc.argmax());
    for (name, region) in [("object", &object), ("distractor", &distractor)] {
        let f = interaction_features(region, &landmarks, &face_box_in_crop, &loc, &sal, &params)?;
        print_summary(name, &f, &params);
    }
    Ok(())
}

fn print_summary(name: &str, f: &InteractionFeatures, params: &InteractionParams) {
    let min_mouth = f.distances[2 * 4];
    let lp_total: f64 = f.logpolar.iter().sum();
    println!(
        "{name:>10}: loc_mass {:.3e}  sal_mass {:.3e}  min-dist(mouth) {:5.1} px  log-polar hits {:4.0}  overlaps {:.2?}  ({} dims total)",
        f.loc_mass,
        f.sal_mass,
        min_mouth,
        lp_total,
        f.overlaps,
        f.to_vec().len()
    );
    let _ = params;
}
