mod common;

use std::collections::BTreeMap;

use common::k64;
use tubeloc::geom::project;
use tubeloc::par::Execution;
use tubeloc::sim::*;

fn world() -> TubeWorld {
    generate_world(7, &WorldConfig::default()).unwrap()
}

#[test]
fn raycast_and_projection_agree_on_a_thousand_surface_points() {
    let w = world();
    let k = k64();
    let mut checked = 0;
    for (i, s0) in [100.0, 420.0, 800.0, 1250.0].into_iter().enumerate() {
        let cam = pose_on_centerline(&w, s0);
        for (p, _) in surface_points(&w, i as u64, 250, (s0 + 5.0, s0 + 80.0)) {
            let Some(px) = project(&cam, &k, &p).filter(|u| k.contains(u)) else { continue };
            let hit = w.raycast_pixel(&cam, &k, &px).unwrap().expect("ray through a wall point must hit");
            let back = project(&cam, &k, &hit.point).unwrap();
            assert!((back - px).norm() < 0.5, "{} px", (back - px).norm());
            // unless another wall occludes it, the ray stops exactly on the point
            if (hit.point - p).norm() < 1e-6 {
                checked += 1;
            }
        }
    }
    assert!(checked >= 200, "only {checked} unoccluded points");
}

#[test]
fn same_seed_same_world_different_seed_different_texture() {
    let a = world();
    let b = world();
    let c = generate_world(8, &WorldConfig::default()).unwrap();
    assert_eq!(a.texture_hash(), b.texture_hash());
    assert_ne!(a.texture_hash(), c.texture_hash());
    let k = k64();
    let pose = pose_on_centerline(&a, 600.0);
    assert_eq!(a.render(&pose, &k).unwrap(), b.render(&pose, &k).unwrap());
}

#[test]
fn trajectories_stay_inside_the_tube() {
    let w = world();
    for (seed, profile) in [(1, JitterProfile::train()), (2, JitterProfile::test())] {
        let traj = generate_trajectory(&w, seed, 600, &profile);
        assert_eq!(traj.samples.len(), 600);
        for s in &traj.samples {
            assert!(w.containing_segment(&s.pose.position).is_some());
            let st = w.station_at(s.arclength);
            let off = s.pose.position - st.point;
            let radial = (off - st.tangent * off.dot(&st.tangent)).norm();
            assert!(radial <= INSIDE_FRACTION * st.radius, "{radial} of {}", st.radius);
        }
        let arc: Vec<f64> = traj.samples.iter().map(|s| s.arclength).collect();
        assert!(arc.windows(2).all(|p| p[1] > p[0]), "frames advance monotonically");
    }
}

#[test]
fn default_world_has_low_texture_sections() {
    let w = world();
    assert!(w.config.low_texture_sections.len() >= 2);
    assert_eq!(w.sections.len(), SECTIONS.len());
    let low: Vec<&SectionStyle> =
        w.sections.iter().filter(|s| w.config.low_texture_sections.contains(&s.name)).collect();
    let textured = w.sections.iter().filter(|s| !w.config.low_texture_sections.contains(&s.name));
    let max_low = low.iter().map(|s| s.amplitude).fold(0.0, f64::max);
    assert!(textured.map(|s| s.amplitude).all(|a| a > 5.0 * max_low));
}

#[test]
fn rendered_frames_are_nonblank_and_in_range() {
    let w = world();
    let traj = generate_trajectory(&w, 3, 40, &JitterProfile::train());
    let data = render_dataset(&w, &traj, &k64(), Execution::default()).unwrap();
    for img in &data.images {
        assert_eq!((img.width, img.height), (64, 64));
        assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
        let mean = img.mean();
        let var = img.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / img.data.len() as f64;
        assert!(var > 1e-4, "flat frame");
    }
}

#[test]
fn parallel_and_sequential_rendering_match() {
    let w = world();
    let traj = generate_trajectory(&w, 4, 24, &JitterProfile::test());
    let a = render_dataset(&w, &traj, &k64(), Execution::Sequential).unwrap();
    let b = render_dataset(&w, &traj, &k64(), Execution::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dataset_roundtrips_through_disk() {
    let w = world();
    let traj = generate_trajectory(&w, 5, 30, &JitterProfile::train());
    let data = render_dataset(&w, &traj, &k64(), Execution::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&data, dir.path(), 13, &BTreeMap::new()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back, data);
    let labels = expert_labels(&back.records, 13).unwrap();
    assert_eq!(labels.iter().map(|l| l.subclasses).sum::<usize>(), 13);
    assert_eq!(std::fs::read_to_string(dir.path().join("expert_labels.txt")).unwrap(), write_labels(&labels));
}
